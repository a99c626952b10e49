"""Pure-numpy twins of the compiled Floquet kernels."""

import numpy as np


def step_generators(v0, nmax, j_steps):
    """Stacked tridiagonal step generators over one Bloch period.

    shifts[j] = 2 (j - 1/2) / J is the kinetic momentum offset at the j-th
    midpoint in units of hbar k_L; independent of the acceleration.
    """
    shifts = 2.0 * (np.arange(1, j_steps + 1) - 0.5) / j_steps
    n = np.arange(-nmax, nmax + 1)
    dim = 2 * nmax + 1
    h = np.zeros((j_steps, dim, dim))
    ii = np.arange(dim)
    h[:, ii, ii] = (2.0 * n[None, :] - shifts[:, None]) ** 2
    jj = np.arange(dim - 1)
    h[:, jj, jj + 1] = v0 / 4.0
    h[:, jj + 1, jj] = v0 / 4.0
    return shifts, h


def floquet_product(v0, nmax, j_steps, dt, shifts):
    _, h = step_generators(v0, nmax, j_steps)
    w, v = np.linalg.eigh(h)
    return floquet_product_from_eigh(w, v, dt)


def floquet_product_from_eigh(w, v, dt):
    dim = w.shape[1]
    u = np.eye(dim, dtype=complex)
    for j in range(w.shape[0]):
        u = (v[j] * np.exp(-1j * w[j] * dt)) @ (v[j].T @ u)
    shift = np.eye(dim, k=1)
    return shift @ u
