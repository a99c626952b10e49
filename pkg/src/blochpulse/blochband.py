"""Band structure of the acceleration-free lattice and the Landau-Zener
baseline loss model.

Energies are in recoil units and referenced to the lattice-average zero
(the mean ac Stark shift V0/2 is subtracted), which is automatic in the
plane-wave matrix below: the cos^2 potential contributes only the V0/4
off-diagonal coupling.
"""

from functools import lru_cache

import numpy as np
from scipy.linalg import eigh_tridiagonal

from .errors import ConvergenceError
from .physconfig import SpeciesLattice
from .pulses import PulseSchedule

_MAX_TRUNC = 512


def _plane_wave_bands(v0, kappa, n_bands, n_trunc):
    n = np.arange(-n_trunc, n_trunc + 1)
    diag = (2.0 * n + kappa) ** 2
    off = np.full(2 * n_trunc, v0 / 4.0)
    return eigh_tridiagonal(diag, off, eigvals_only=True, select="i",
                            select_range=(0, n_bands - 1))


@lru_cache(maxsize=200_000)
def _bands_cached(v0, kappa, n_bands, n_trunc):
    return tuple(_plane_wave_bands(v0, kappa, n_bands, n_trunc))


def bloch_spectrum(v0, kappa, n_bands=5, n_trunc=32):
    """Band energies E_alpha(kappa) in E_r, kappa in units of k_L.

    The plane-wave cutoff is doubled until the bands move by less than
    1e-10 E_r; raises ConvergenceError if the cap is reached.
    """
    if v0 < 0:
        raise ValueError("v0 must be non-negative")
    if abs(kappa) > 1.0 + 1e-12:
        raise ValueError("kappa outside the first Brillouin zone")
    if n_trunc < n_bands + 8:
        n_trunc = n_bands + 8
    prev = np.array(_bands_cached(float(v0), float(kappa), n_bands, n_trunc))
    while n_trunc <= _MAX_TRUNC:
        n_trunc *= 2
        cur = np.array(_bands_cached(float(v0), float(kappa), n_bands, n_trunc))
        drift = np.abs(cur - prev).max()
        if drift < 1e-10:
            return cur
        prev = cur
    raise ConvergenceError(
        f"band energies not converged at n_trunc={n_trunc}", residual=drift)


@lru_cache(maxsize=10_000)
def _band_average_cached(v0, alpha, n_kappa, n_trunc):
    kappas = np.linspace(-1.0, 1.0, n_kappa)
    vals = np.array([
        _plane_wave_bands(v0, k, alpha + 1, n_trunc)[alpha] for k in kappas])
    # integrand is periodic and even: uniform trapezoid is spectrally accurate
    return np.trapezoid(vals, kappas) / 2.0


def band_average(v0, alpha, n_kappa=513, n_trunc=32):
    """Brillouin-zone average <E_alpha> in E_r."""
    if v0 < 0:
        raise ValueError("v0 must be non-negative")
    return _band_average_cached(float(v0), int(alpha), int(n_kappa),
                                max(int(n_trunc), alpha + 9))


def band_gap_edge(v0, n_trunc=32):
    """Gap between bands 0 and 1 at the zone edge (E_r)."""
    e = bloch_spectrum(v0, 1.0, n_bands=2, n_trunc=n_trunc)
    return e[1] - e[0]


def landau_zener_probability(cfg: SpeciesLattice, a_l, delta_e=None, v0=None):
    """Diabatic transition probability per Bloch period.

    delta_e is the band-0/1 gap in E_r; when omitted it is evaluated at
    the zone edge for the given v0.
    """
    if a_l <= 0:
        raise ValueError("a_l must be positive")
    if delta_e is None:
        if v0 is None:
            raise ValueError("need delta_e or v0")
        delta_e = band_gap_edge(v0)
    if delta_e < 0:
        raise ValueError("delta_e must be non-negative")
    dma = cfg.ladder_spacing(a_l)
    return np.exp(-np.pi**2 * delta_e**2 / (8.0 * dma))


def lz_effective_linewidth(cfg: SpeciesLattice, a_l, delta_e=None, v0=None):
    """Effective tunneling linewidth Gamma_B (E_r) implied by the
    Landau-Zener survival (1 - P_LZ)^N over N Bloch periods.

    Positive-definite form -(d m a_L / 2 pi) ln(1 - P_LZ); its small-P
    expansion is (d m a_L / 2 pi) P_LZ.
    """
    p = landau_zener_probability(cfg, a_l, delta_e=delta_e, v0=v0)
    if p >= 1.0:
        raise ValueError("P_LZ = 1: infinite effective linewidth")
    dma = cfg.ladder_spacing(a_l)
    return -dma / (2.0 * np.pi) * np.log1p(-p)


def adiabatic_bloch_phase(cfg: SpeciesLattice, schedule: PulseSchedule,
                          kappa0=0.0, rtol=1e-10, n_trunc=24):
    """Phase integral of the lowest band along the swept quasi-momentum.

    phi = (1/hbar) integral E_0(V0(t), kappa(t)) dt with
    kappa(t) = kappa0 - p_L(t)/hbar folded into the Brillouin zone.
    Richardson-refined composite Simpson; returns radians (unwrapped).
    """
    t_end = schedule.duration

    def integrand(ts):
        v0s = schedule.lattice_depth(ts)
        kap = kappa0 - schedule.momentum(ts) / cfg.recoil_momentum
        kap = np.mod(kap + 1.0, 2.0) - 1.0
        return np.array([
            _plane_wave_bands(v, k, 1, n_trunc)[0]
            for v, k in zip(v0s, kap)])

    n = 512
    prev = None
    for _ in range(8):
        ts = np.linspace(0.0, t_end, n + 1)
        from scipy.integrate import simpson
        val = simpson(integrand(ts), x=ts)
        if prev is not None and abs(val - prev) <= max(rtol * abs(val), 1e-12):
            break
        prev = val
        n *= 2
    else:
        raise ConvergenceError("Bloch phase quadrature did not settle",
                               residual=abs(val - prev))
    return val / cfg.recoil_time
