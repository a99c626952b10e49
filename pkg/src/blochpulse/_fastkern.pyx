# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled inner loops for the one-Bloch-period Floquet product.

The per-step generator is a real-symmetric tridiagonal matrix; the hot
loop is eigendecomposition (LAPACK dstevd) followed by four real GEMMs
accumulating the complex propagator split into real and imaginary parts.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport cos, sin
from libc.stdlib cimport free, malloc
from scipy.linalg.cython_blas cimport dgemm
from scipy.linalg.cython_lapack cimport dstevd

cnp.import_array()


cdef void _gemm_nn(int n, double* a, double* b, double* c) noexcept nogil:
    # C-order c = a @ b done in Fortran order as c^T = b^T a^T
    cdef double one = 1.0, zero = 0.0
    cdef char tn = b'N'
    dgemm(&tn, &tn, &n, &n, &n, &one, b, &n, a, &n, &zero, c, &n)


cdef void _gemm_tn(int n, double* a, double* b, double* c) noexcept nogil:
    # C-order c = a^T @ b
    cdef double one = 1.0, zero = 0.0
    cdef char tn = b'N', tt = b'T'
    dgemm(&tn, &tt, &n, &n, &n, &one, b, &n, a, &n, &zero, c, &n)


cdef void _phase_rows(int n, double* w, double dt, double* tre,
                      double* tim) noexcept nogil:
    # tre + i tim <- diag(exp(-i w dt)) @ (tre + i tim)
    cdef int r, i
    cdef double cph, sph, ar, ai
    for r in range(n):
        cph = cos(w[r] * dt)
        sph = sin(w[r] * dt)
        for i in range(n):
            ar = tre[r * n + i]
            ai = tim[r * n + i]
            tre[r * n + i] = cph * ar + sph * ai
            tim[r * n + i] = cph * ai - sph * ar


cdef void _shift_rows(int n, double* ure, double* uim) noexcept nogil:
    # left-multiply by the momentum shift: row i <- row i+1, top row dropped
    cdef int i, k
    for i in range(n - 1):
        for k in range(n):
            ure[i * n + k] = ure[(i + 1) * n + k]
            uim[i * n + k] = uim[(i + 1) * n + k]
    for k in range(n):
        ure[(n - 1) * n + k] = 0.0
        uim[(n - 1) * n + k] = 0.0


def floquet_product(double v0, int nmax, int j_steps, double dt,
                    double[::1] shifts):
    """Floquet-Bloch matrix S @ prod_j exp(-i H_j dt) at kappa = 0.

    H_j is tridiagonal with diagonal (2n - shifts[j])^2, n in [-nmax, nmax],
    and constant off-diagonal v0/4.  Streams over j in O(n^2) memory.
    """
    cdef int n = 2 * nmax + 1
    cdef int j, k, info = 0
    cdef int lwork = 1 + 4 * n + n * n
    cdef int liwork = 3 + 5 * n
    cdef cnp.ndarray[double, ndim=2] u_re = np.eye(n)
    cdef cnp.ndarray[double, ndim=2] u_im = np.zeros((n, n))
    cdef double* ure = <double*> u_re.data
    cdef double* uim = <double*> u_im.data
    cdef double* dd = <double*> malloc(n * sizeof(double))
    cdef double* ee = <double*> malloc(n * sizeof(double))
    cdef double* z = <double*> malloc(n * n * sizeof(double))
    cdef double* tre = <double*> malloc(n * n * sizeof(double))
    cdef double* tim = <double*> malloc(n * n * sizeof(double))
    cdef double* work = <double*> malloc(lwork * sizeof(double))
    cdef int* iwork = <int*> malloc(liwork * sizeof(int))
    cdef char jobz = b'V'
    if (dd == NULL or ee == NULL or z == NULL or tre == NULL or tim == NULL
            or work == NULL or iwork == NULL):
        raise MemoryError
    try:
        with nogil:
            for j in range(j_steps):
                for k in range(n):
                    dd[k] = (2.0 * (k - nmax) - shifts[j]) ** 2
                for k in range(n - 1):
                    ee[k] = 0.25 * v0
                dstevd(&jobz, &n, dd, ee, z, &n, work, &lwork, iwork,
                       &liwork, &info)
                if info != 0:
                    break
                # dstevd stores eigenvectors Fortran-order: viewed C-order,
                # row r of z is the r-th eigenvector, i.e. z == V^T.
                _gemm_nn(n, z, ure, tre)
                _gemm_nn(n, z, uim, tim)
                _phase_rows(n, dd, dt, tre, tim)
                _gemm_tn(n, z, tre, ure)
                _gemm_tn(n, z, tim, uim)
            if info == 0:
                _shift_rows(n, ure, uim)
    finally:
        free(dd); free(ee); free(z); free(tre); free(tim)
        free(work); free(iwork)
    if info != 0:
        raise RuntimeError(f"dstevd failed with info={info}")
    return u_re + 1j * u_im


def floquet_product_from_eigh(double[:, ::1] w, double[:, :, ::1] v,
                              double dt):
    """Same product from precomputed step eigendecompositions.

    The step matrices depend only on (V0, J, nmax), so (w, v) can be
    reused across accelerations; only dt changes.
    """
    cdef int j_steps = w.shape[0]
    cdef int n = w.shape[1]
    cdef int j, r, i
    cdef cnp.ndarray[double, ndim=2] u_re = np.eye(n)
    cdef cnp.ndarray[double, ndim=2] u_im = np.zeros((n, n))
    cdef double* ure = <double*> u_re.data
    cdef double* uim = <double*> u_im.data
    cdef double* tre = <double*> malloc(n * n * sizeof(double))
    cdef double* tim = <double*> malloc(n * n * sizeof(double))
    cdef double* vt = <double*> malloc(n * n * sizeof(double))
    if tre == NULL or tim == NULL or vt == NULL:
        raise MemoryError
    try:
        with nogil:
            for j in range(j_steps):
                for r in range(n):
                    for i in range(n):
                        vt[r * n + i] = v[j, i, r]
                _gemm_nn(n, vt, ure, tre)
                _gemm_nn(n, vt, uim, tim)
                _phase_rows(n, &w[j, 0], dt, tre, tim)
                _gemm_tn(n, vt, tre, ure)
                _gemm_tn(n, vt, tim, uim)
            _shift_rows(n, ure, uim)
    finally:
        free(tre); free(tim); free(vt)
    return u_re + 1j * u_im
