"""Numba-compiled hot kernels: Polya-Gamma draws, logit transition cubes, FFBS.

Mirrors ``backend_numpy``; both modules expose ``pg_draw``, ``transition_cube``
and ``ffbs_draw`` with identical semantics.  All samplers consume a
``numpy.random.Generator`` passed in by the caller, so a fixed seed gives a
reproducible stream within this backend.
"""

import math

import numpy as np
from numba import njit

_PI = math.pi
_TRUNC = 0.64  # crossover point between the two series forms of the Jacobi density
_SQRT2 = math.sqrt(2.0)


@njit(cache=True)
def _series_coef(n, x):
    # n-th coefficient of the alternating-series expansion of the J*(1, 0) density;
    # the x <= _TRUNC form converges fast near zero, the other in the right tail.
    k = (n + 0.5) * _PI
    if x > _TRUNC:
        return k * math.exp(-0.5 * k * k * x)
    return k * (2.0 / (_PI * x)) ** 1.5 * math.exp(-2.0 * (n + 0.5) ** 2 / x)


@njit(cache=True)
def _log_norm_cdf(x):
    v = 0.5 * math.erfc(-x / _SQRT2)
    if v <= 0.0:
        return -np.inf
    return math.log(v)


@njit(cache=True)
def _exp_piece_mass(z):
    # Probability that the rejection proposal comes from the truncated-exponential
    # right piece rather than the truncated inverse-Gaussian left piece.
    t = _TRUNC
    rate = 0.125 * _PI * _PI + 0.5 * z * z
    b = (t * z - 1.0) / math.sqrt(t)
    a = -(t * z + 1.0) / math.sqrt(t)
    x0 = math.log(rate) + rate * t
    log_b = x0 - z + _log_norm_cdf(b)
    log_a = x0 + z + _log_norm_cdf(a)
    q_over_p = 4.0 / _PI * (math.exp(log_b) + math.exp(log_a))
    return 1.0 / (1.0 + q_over_p)


@njit(cache=True)
def _trunc_inv_gauss(z, gen):
    # Inverse-Gaussian(1/z, 1) restricted to (0, _TRUNC].
    t = _TRUNC
    if z < 1.0 / t:
        # mean above the truncation point: one-sided proposal plus exponential tilt
        while True:
            while True:
                e1 = gen.standard_exponential()
                e2 = gen.standard_exponential()
                if e1 * e1 <= 2.0 * e2 / t:
                    break
            x = t / ((1.0 + t * e1) * (1.0 + t * e1))
            if gen.random() <= math.exp(-0.5 * z * z * x):
                return x
    else:
        mu = 1.0 / z
        while True:
            y = gen.standard_normal()
            y *= y
            muy = mu * y
            x = mu + 0.5 * mu * muy - 0.5 * mu * math.sqrt(4.0 * muy + muy * muy)
            if x <= 0.0:
                continue
            if gen.random() > mu / (mu + x):
                x = mu * mu / x
            if x <= t:
                return x


@njit(cache=True)
def _pg1(c, gen):
    # Exact PG(1, c) draw: series-squeeze rejection on the tilted Jacobi density.
    z = 0.5 * abs(c)
    rate = 0.125 * _PI * _PI + 0.5 * z * z
    p_right = _exp_piece_mass(z)
    while True:
        if gen.random() < p_right:
            x = _TRUNC + gen.standard_exponential() / rate
        else:
            x = _trunc_inv_gauss(z, gen)
        s = _series_coef(0, x)
        y = gen.random() * s
        n = 0
        while True:
            n += 1
            if n & 1:
                s -= _series_coef(n, x)
                if y <= s:
                    return 0.25 * x
            else:
                s += _series_coef(n, x)
                if y > s:
                    break


@njit(cache=True)
def pg_draw(c, gen):
    """Draw PG(1, c[i]) for each tilt in ``c``.  Symmetric in the tilt sign."""
    out = np.empty(c.shape[0])
    for i in range(c.shape[0]):
        out[i] = _pg1(c[i], gen)
    return out


@njit(cache=True)
def transition_cube(gamma, z, K):
    """Multinomial-logit transition matrices, one K x K matrix per time step.

    ``gamma`` has one row per non-reference destination, laid out as
    (intercept, covariate block, previous-state indicator block); the last
    state is the reference with all coefficients fixed at zero.  Entry
    ``[t, k, j]`` is the probability of moving from state k to state j given
    the covariates of row t.
    """
    T = z.shape[0]
    N = z.shape[1]
    cube = np.empty((T, K, K))
    if K == 1:
        for t in range(T):
            cube[t, 0, 0] = 1.0
        return cube
    lp = np.empty(K)
    for t in range(T):
        for k in range(K):
            lp[K - 1] = 0.0
            mx = 0.0
            for j in range(K - 1):
                v = gamma[j, 0]
                for a in range(N):
                    v += gamma[j, 1 + a] * z[t, a]
                if k < K - 1:
                    v += gamma[j, 1 + N + k]
                lp[j] = v
                if v > mx:
                    mx = v
            total = 0.0
            for j in range(K):
                e = math.exp(lp[j] - mx)
                cube[t, k, j] = e
                total += e
            for j in range(K):
                cube[t, k, j] /= total
    return cube


@njit(cache=True)
def _categorical(probs, u):
    acc = 0.0
    last = probs.shape[0] - 1
    for k in range(last):
        acc += probs[k]
        if u < acc:
            return k
    return last


@njit(cache=True)
def ffbs_draw(loglik, cube, gen):
    """Joint draw of the hidden state path by forward filtering, backward sampling.

    ``loglik[t, k]`` is the log observation density of row t under state k and
    ``cube[t]`` the transition matrix into row t.  The pre-sample state carries
    a uniform prior.  Returns the sampled path (pre-sample state first), the
    filtered probabilities, the data log likelihood and an all-finite flag.
    """
    T, K = loglik.shape
    filt = np.empty((T + 1, K))
    for k in range(K):
        filt[0, k] = 1.0 / K
    loglike = 0.0
    states = np.empty(T + 1, np.int8)
    for t in range(T):
        mx = loglik[t, 0]
        for k in range(1, K):
            if loglik[t, k] > mx:
                mx = loglik[t, k]
        total = 0.0
        for j in range(K):
            pred = 0.0
            for k in range(K):
                pred += filt[t, k] * cube[t, k, j]
            w = pred * math.exp(loglik[t, j] - mx)
            filt[t + 1, j] = w
            total += w
        if not (total > 0.0) or not math.isfinite(total):
            for i in range(T + 1):
                states[i] = -1
            return states, filt, -np.inf, False
        for j in range(K):
            filt[t + 1, j] /= total
        loglike += math.log(total) + mx
    states[T] = _categorical(filt[T], gen.random())
    w = np.empty(K)
    for t in range(T - 1, -1, -1):
        total = 0.0
        for k in range(K):
            w[k] = filt[t, k] * cube[t, k, states[t + 1]]
            total += w[k]
        for k in range(K):
            w[k] /= total
        states[t] = _categorical(w, gen.random())
    return states, filt, loglike, True
