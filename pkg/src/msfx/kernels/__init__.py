"""Backend selection for the hot numerical kernels.

The numba backend is the default.  Set ``MSFX_NUMBA=0`` in the environment to
force the pure-numpy fallback (useful where numba is unavailable or for
debugging); ``benchmarks/kernel_bench.py`` times the two against each other.
"""

import os

import numpy as np

_flag = os.environ.get("MSFX_NUMBA", "1").strip().lower()
USE_NUMBA = _flag not in ("0", "false", "no", "off")

if USE_NUMBA:
    try:
        from . import backend_numba as _backend
    except ImportError:  # pragma: no cover - exercised only without numba
        USE_NUMBA = False
        from . import backend_numpy as _backend
else:
    from . import backend_numpy as _backend

BACKEND = "numba" if USE_NUMBA else "numpy"


def pg_draw(c, gen):
    c = np.ascontiguousarray(c, dtype=np.float64)
    if c.ndim != 1:
        raise ValueError("pg_draw expects a 1-d array of tilts")
    return _backend.pg_draw(c, gen)


def transition_cube(gamma, z, K):
    gamma = np.ascontiguousarray(gamma, dtype=np.float64)
    z = np.ascontiguousarray(z, dtype=np.float64)
    if K > 1 and gamma.shape != (K - 1, 1 + z.shape[1] + K - 1):
        raise ValueError(f"gamma shape {gamma.shape} does not match K={K}, n_covariates={z.shape[1]}")
    return _backend.transition_cube(gamma, z, K)


def ffbs_draw(loglik, cube, gen):
    loglik = np.ascontiguousarray(loglik, dtype=np.float64)
    cube = np.ascontiguousarray(cube, dtype=np.float64)
    T, K = loglik.shape
    if cube.shape != (T, K, K):
        raise ValueError(f"transition cube shape {cube.shape} does not match likelihood {loglik.shape}")
    return _backend.ffbs_draw(loglik, cube, gen)


def get_backend(name):
    """Load a backend module by name ('numba' or 'numpy'), bypassing the flag."""
    if name == "numba":
        from . import backend_numba

        return backend_numba
    if name == "numpy":
        from . import backend_numpy

        return backend_numpy
    raise ValueError(f"unknown kernel backend: {name!r}")
