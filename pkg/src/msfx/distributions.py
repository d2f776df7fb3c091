"""Random-number primitives used throughout the Gibbs sampler.

Streams are ``numpy.random.Generator`` objects over the counter-based Philox
bit generator.  ``spawn_stream`` derives independent child streams from a
master seed, so every (grid cell, forecast origin) pair gets its own
reproducible stream regardless of execution order or worker count.
"""

from __future__ import annotations

import numpy as np
from scipy.linalg import cho_factor, cho_solve, solve_triangular

from . import kernels

__all__ = [
    "spawn_stream",
    "sample_polya_gamma",
    "sample_mvn",
    "sample_inverse_gamma",
    "sample_gaussian_precision",
    "norm_logpdf",
]

_JITTER_REL = 1e-10  # one-shot diagonal jitter, scaled by trace/n


def spawn_stream(master_seed: int, *key: int) -> np.random.Generator:
    """Independent generator for the slot identified by ``key``.

    The same (seed, key) always yields the same stream; distinct keys give
    statistically independent streams.
    """
    seq = np.random.SeedSequence(int(master_seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(seq))


def sample_polya_gamma(c, rng: np.random.Generator):
    """Exact draw(s) from PG(1, c).

    Uses the alternating-series rejection sampler (no truncated sum-of-gammas
    approximation), so moments are exact up to Monte Carlo error.  PG(1, c) is
    symmetric in the sign of c.  Accepts a scalar or 1-d array of tilts.
    """
    arr = np.atleast_1d(np.asarray(c, dtype=np.float64))
    if not np.all(np.isfinite(arr)):
        raise ValueError("Polya-Gamma tilt must be finite")
    out = kernels.pg_draw(arr, rng)
    if np.ndim(c) == 0:
        return float(out[0])
    return out


def sample_mvn(mean, cov, rng: np.random.Generator):
    """Multivariate normal draw via a (lower) Cholesky factor of ``cov``.

    A borderline-PSD covariance gets one diagonal jitter of
    ``1e-10 * trace/n`` before failure is declared.  An all-zero covariance
    returns the mean exactly.
    """
    mean = np.asarray(mean, dtype=np.float64)
    cov = np.asarray(cov, dtype=np.float64)
    n = mean.shape[0]
    if cov.shape != (n, n):
        raise ValueError("covariance shape does not match mean")
    if not np.any(cov):
        return mean.copy()
    try:
        lower = np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        jitter = _JITTER_REL * np.trace(cov) / n
        try:
            lower = np.linalg.cholesky(cov + jitter * np.eye(n))
        except np.linalg.LinAlgError as exc:
            raise ValueError("covariance is not positive semi-definite") from exc
    return mean + lower @ rng.standard_normal(n)


def sample_inverse_gamma(shape: float, scale: float, rng: np.random.Generator) -> float:
    """Draw from the inverse-Gamma(shape, scale) distribution.

    The reciprocal is Gamma(shape, 1/scale); for shape > 1 the mean is
    scale / (shape - 1).  For very small shapes the distribution's tail
    leaves the double range (the gamma variate underflows to zero); such
    draws are rejected and redrawn, i.e. the prior is truncated to
    representable values.
    """
    if shape <= 0.0 or scale <= 0.0:
        raise ValueError("inverse-Gamma parameters must be positive")
    for _ in range(100):
        g = rng.gamma(shape)
        if g > 0.0:
            out = scale / g
            if np.isfinite(out) and out > 0.0:
                return float(out)
    raise ValueError(f"inverse-Gamma draw kept leaving the double range (shape={shape})")


def sample_gaussian_precision(precision, shift, rng: np.random.Generator):
    """Draw from N(P^-1 shift, P^-1) given the precision matrix P.

    The conjugate updates all arrive in precision form; solving through the
    Cholesky factor avoids forming the covariance.  Singular precisions get
    the same one-shot jitter policy as ``sample_mvn``.
    """
    precision = np.asarray(precision, dtype=np.float64)
    shift = np.asarray(shift, dtype=np.float64)
    n = shift.shape[0]
    try:
        factor = cho_factor(precision, lower=True, check_finite=False)
    except np.linalg.LinAlgError:
        jitter = _JITTER_REL * np.trace(precision) / n
        try:
            factor = cho_factor(precision + jitter * np.eye(n), lower=True, check_finite=False)
        except np.linalg.LinAlgError as exc:
            raise ValueError("precision matrix is singular") from exc
    mean = cho_solve(factor, shift, check_finite=False)
    # precision = L L', so covariance = L'^-1 L^-1 and L'^-1 z has the right law
    noise = solve_triangular(factor[0].T, rng.standard_normal(n), lower=False, check_finite=False)
    return mean + noise


def norm_logpdf(x, mean, var):
    """Elementwise log density of N(mean, var); broadcasts like numpy."""
    var = np.asarray(var, dtype=np.float64)
    diff = np.asarray(x, dtype=np.float64) - np.asarray(mean, dtype=np.float64)
    return -0.5 * (np.log(2.0 * np.pi * var) + diff * diff / var)
