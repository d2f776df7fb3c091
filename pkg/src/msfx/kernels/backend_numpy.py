"""Pure-numpy fallbacks for the hot kernels.

Same public surface and distributional semantics as ``backend_numba``; the
rejection samplers are vectorised over the pending indices instead of looping
per draw, so the two backends consume their RNG streams differently but draw
from identical laws.
"""

import numpy as np
from scipy.special import log_ndtr

_PI = np.pi
_TRUNC = 0.64


def _series_coef(n, x):
    k = (n + 0.5) * _PI
    out = np.empty_like(x)
    right = x > _TRUNC
    xr = x[right]
    out[right] = k * np.exp(-0.5 * k * k * xr)
    xl = x[~right]
    out[~right] = k * (2.0 / (_PI * xl)) ** 1.5 * np.exp(-2.0 * (n + 0.5) ** 2 / xl)
    return out


def _exp_piece_mass(z):
    t = _TRUNC
    rate = 0.125 * _PI * _PI + 0.5 * z * z
    b = (t * z - 1.0) / np.sqrt(t)
    a = -(t * z + 1.0) / np.sqrt(t)
    x0 = np.log(rate) + rate * t
    with np.errstate(over="ignore"):
        q_over_p = 4.0 / _PI * (np.exp(x0 - z + log_ndtr(b)) + np.exp(x0 + z + log_ndtr(a)))
    return 1.0 / (1.0 + q_over_p)


def _trunc_inv_gauss(z, gen):
    # Vectorised inverse-Gaussian(1/z, 1) restricted to (0, _TRUNC].
    t = _TRUNC
    out = np.empty(z.shape[0])
    small = np.nonzero(z < 1.0 / t)[0]
    while small.size:
        m = small.size
        e1 = gen.standard_exponential(m)
        e2 = gen.standard_exponential(m)
        x = t / (1.0 + t * e1) ** 2
        acc = (e1 * e1 <= 2.0 * e2 / t) & (gen.random(m) <= np.exp(-0.5 * z[small] ** 2 * x))
        out[small[acc]] = x[acc]
        small = small[~acc]
    big = np.nonzero(z >= 1.0 / t)[0]
    while big.size:
        m = big.size
        mu = 1.0 / z[big]
        y = gen.standard_normal(m) ** 2
        muy = mu * y
        x = mu + 0.5 * mu * muy - 0.5 * mu * np.sqrt(4.0 * muy + muy * muy)
        with np.errstate(divide="ignore", invalid="ignore"):
            flip = gen.random(m) > mu / (mu + x)
            x = np.where(flip, mu * mu / x, x)
        acc = (x > 0.0) & (x <= t)
        out[big[acc]] = x[acc]
        big = big[~acc]
    return out


def _series_accept(x, gen):
    # Alternating-series squeeze: accept on odd partial sums, reject on even ones.
    m = x.shape[0]
    s = _series_coef(0, x)
    y = gen.random(m) * s
    accept = np.zeros(m, dtype=bool)
    open_ = np.ones(m, dtype=bool)
    n = 0
    while open_.any():
        n += 1
        idx = np.nonzero(open_)[0]
        cn = _series_coef(n, x[idx])
        if n & 1:
            s[idx] -= cn
            hit = idx[y[idx] <= s[idx]]
            accept[hit] = True
            open_[hit] = False
        else:
            s[idx] += cn
            open_[idx[y[idx] > s[idx]]] = False
    return accept


def pg_draw(c, gen):
    """Draw PG(1, c[i]) for each tilt in ``c``.  Symmetric in the tilt sign."""
    z = 0.5 * np.abs(np.asarray(c, dtype=np.float64))
    rate = 0.125 * _PI * _PI + 0.5 * z * z
    p_right = _exp_piece_mass(z)
    out = np.empty(z.shape[0])
    todo = np.arange(z.shape[0])
    while todo.size:
        m = todo.size
        x = np.empty(m)
        right = gen.random(m) < p_right[todo]
        nr = int(right.sum())
        x[right] = _TRUNC + gen.standard_exponential(nr) / rate[todo[right]]
        x[~right] = _trunc_inv_gauss(z[todo[~right]], gen)
        ok = _series_accept(x, gen)
        out[todo[ok]] = 0.25 * x[ok]
        todo = todo[~ok]
    return out


def transition_cube(gamma, z, K):
    """Multinomial-logit transition matrices, one K x K matrix per time step.

    See ``backend_numba.transition_cube`` for the layout contract.
    """
    T, N = z.shape
    if K == 1:
        return np.ones((T, 1, 1))
    base = gamma[:, 0][None, :] + z @ gamma[:, 1 : 1 + N].T  # (T, K-1)
    ind = np.concatenate([gamma[:, 1 + N :], np.zeros((K - 1, 1))], axis=1)  # (K-1, K)
    lp = base[:, None, :] + ind.T[None, :, :]  # (T, K, K-1)
    full = np.concatenate([lp, np.zeros((T, K, 1))], axis=2)
    mx = full.max(axis=2, keepdims=True)
    e = np.exp(full - mx)
    return e / e.sum(axis=2, keepdims=True)


def _categorical(probs, u):
    acc = 0.0
    last = probs.shape[0] - 1
    for k in range(last):
        acc += probs[k]
        if u < acc:
            return k
    return last


def ffbs_draw(loglik, cube, gen):
    """Forward-filtering backward-sampling state draw; see the numba twin."""
    T, K = loglik.shape
    filt = np.empty((T + 1, K))
    filt[0] = 1.0 / K
    loglike = 0.0
    for t in range(T):
        mx = loglik[t].max()
        w = (filt[t] @ cube[t]) * np.exp(loglik[t] - mx)
        total = w.sum()
        if not np.isfinite(total) or total <= 0.0:
            return np.full(T + 1, -1, dtype=np.int8), filt, -np.inf, False
        filt[t + 1] = w / total
        loglike += np.log(total) + mx
    states = np.empty(T + 1, dtype=np.int8)
    states[T] = _categorical(filt[T], gen.random())
    for t in range(T - 1, -1, -1):
        w = filt[t] * cube[t, :, states[t + 1]]
        states[t] = _categorical(w / w.sum(), gen.random())
    return states, filt, loglike, True
