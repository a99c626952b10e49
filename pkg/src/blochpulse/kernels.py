"""Kernel backend selection: compiled extension with pure-numpy fallback.

Set BLOCHPULSE_PURE_PYTHON=1 to force the fallback (used by the kernel
equivalence tests and the benchmark).
"""

import os

import numpy as np

from . import _kernels_py

step_generators = _kernels_py.step_generators

if os.environ.get("BLOCHPULSE_PURE_PYTHON", "0") == "1":
    _impl = _kernels_py
    BACKEND = "python"
else:
    try:
        from . import _fastkern as _impl
        BACKEND = "compiled"
    except ImportError:   # extension not built
        _impl = _kernels_py
        BACKEND = "python"


def floquet_product(v0, nmax, j_steps, dt):
    """One-period Floquet-Bloch matrix, streaming over time steps."""
    shifts = 2.0 * (np.arange(1, j_steps + 1) - 0.5) / j_steps
    return _impl.floquet_product(float(v0), int(nmax), int(j_steps),
                                 float(dt), shifts)


def floquet_product_from_eigh(w, v, dt):
    """Same product from precomputed step eigendecompositions (see
    step_generators); reusable across accelerations at fixed (V0, J, nmax)."""
    return _impl.floquet_product_from_eigh(
        np.ascontiguousarray(w), np.ascontiguousarray(v), float(dt))
