"""Four-step Gibbs sampler for the switching regression with logit transitions.

One sweep draws, in order: the stacked coefficients and state variances from
their conjugate conditionals, the spike/slab inclusion indicators, the hidden
state path in one block by forward filtering and backward sampling, and the
multinomial-logit transition coefficients through Polya-Gamma augmentation.
Kitchen-sink runs append a random relabeling of the states so every posterior
mode is visited with equal probability.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from . import data as data_mod
from . import kernels
from .distributions import norm_logpdf, sample_gaussian_precision, sample_inverse_gamma
from .models import INTERCEPT, ModelConfig, PriorSpec, RegimeSpec, build_prior, regimes_for

__all__ = [
    "NumericalError",
    "EstimationData",
    "TransitionModel",
    "GibbsState",
    "PosteriorSample",
    "prepare_estimation",
    "transition_probs",
    "draw_beta_sigma",
    "draw_delta",
    "draw_states_ffbs",
    "draw_gamma_pg",
    "permutation_step",
    "gibbs_sweep",
    "run_sampler",
    "run_mcmc",
    "state_probability_summary",
    "complete_data_loglik",
    "load_draw_archive",
]


class NumericalError(RuntimeError):
    """Raised when a sweep produces non-finite quantities; carries a state dump."""

    def __init__(self, message, dump=None):
        super().__init__(message)
        self.dump = dump or {}


@dataclass(frozen=True)
class EstimationData:
    """Design arrays for one estimation window.

    ``xaug`` prepends one always-one intercept column per state to the raw
    predictors, so each regime's column index set can address its own
    intercept.  ``z`` is demeaned over this window.  ``states`` arrays carry
    the pre-sample state at position 0, so panel row r pairs with state entry
    r + 1 and with the transition matrix of row r.
    """

    y: np.ndarray
    xaug: np.ndarray
    z: np.ndarray
    col_idx: tuple[np.ndarray, ...]
    offsets: np.ndarray
    dates: object | None = None

    @property
    def n_rows(self) -> int:
        return self.y.shape[0]

    @property
    def n_states(self) -> int:
        return len(self.col_idx)

    @property
    def n_coeffs(self) -> int:
        return int(self.offsets[-1])

    @property
    def n_covariates(self) -> int:
        return self.z.shape[1]

    def block(self, k: int) -> slice:
        return slice(int(self.offsets[k]), int(self.offsets[k + 1]))


def prepare_estimation(panel, regimes: list[RegimeSpec], end: int | None = None) -> EstimationData:
    """Assemble EstimationData from a fundamentals panel over rows [0, end).

    Demeans the transition covariates over this window (re-done at every
    forecast origin, so expanding windows never peek past their end).
    """
    y = panel.target_array()[:end].astype(np.float64)
    X = panel.predictor_array()[:end].astype(np.float64)
    z = panel.z_array()[:end].astype(np.float64)
    z = z - z.mean(axis=0)
    K = len(regimes)
    T = y.shape[0]
    xaug = np.concatenate([np.ones((T, K)), X], axis=1)
    col_idx = []
    for k, regime in enumerate(regimes):
        idx = []
        for col in regime.columns:
            if col == INTERCEPT:
                idx.append(k)
            else:
                idx.append(K + data_mod.PREDICTOR_COLUMNS.index(col))
        col_idx.append(np.asarray(idx, dtype=np.int64))
    offsets = np.concatenate([[0], np.cumsum([r.size for r in regimes])]).astype(np.int64)
    dates = panel.dates[:end] if hasattr(panel, "dates") else None
    return EstimationData(y=y, xaug=xaug, z=z, col_idx=tuple(col_idx), offsets=offsets, dates=dates)


@dataclass(frozen=True)
class TransitionModel:
    """Multinomial-logit transition probabilities with reference state K.

    ``gamma`` holds one row per non-reference destination over the regressor
    vector (1, covariates, previous-state indicators); the reference
    destination's coefficients are identically zero and therefore not stored.
    In 'fixed' mode the covariate block is pinned at zero, which collapses the
    model to constant transition probabilities.
    """

    mode: str
    gamma: np.ndarray
    n_covariates: int

    def __post_init__(self):
        if self.mode not in ("tvp", "fixed"):
            raise ValueError(f"unknown transition mode {self.mode!r}")
        if self.gamma.ndim != 2:
            raise ValueError("gamma must be 2-d (destinations x regressors)")
        K = self.n_states
        if self.gamma.shape[1] != 1 + self.n_covariates + (K - 1):
            raise ValueError("gamma row length must be 1 + n_covariates + K - 1")
        if self.mode == "fixed" and self.gamma.size:
            if np.any(self.gamma[:, 1 : 1 + self.n_covariates] != 0.0):
                raise ValueError("fixed mode requires a zero covariate block")

    @property
    def n_states(self) -> int:
        return self.gamma.shape[0] + 1


def transition_probs(tm: TransitionModel, z_t, s_prev: int) -> np.ndarray:
    """One row of the transition matrix: P(next state | s_prev, covariates).

    Probabilities depend on the covariates only through the linear predictors,
    are computed with max-subtracted exponentials, and sum to one.
    """
    K = tm.n_states
    if K == 1:
        return np.ones(1)
    z_t = np.asarray(z_t, dtype=np.float64)
    if not (0 <= s_prev < K):
        raise ValueError("previous state out of range")
    N = tm.n_covariates
    lp = np.zeros(K)
    lp[: K - 1] = tm.gamma[:, 0] + tm.gamma[:, 1 : 1 + N] @ z_t
    if s_prev < K - 1:
        lp[: K - 1] += tm.gamma[:, 1 + N + s_prev]
    e = np.exp(lp - lp.max())
    return e / e.sum()


@dataclass
class GibbsState:
    """Current draw of the sampler; `states[0]` is the pre-sample state."""

    beta: np.ndarray
    sigma_sq: np.ndarray
    delta: np.ndarray
    states: np.ndarray
    gamma: np.ndarray
    psi: np.ndarray
    filtered: np.ndarray | None = None
    loglike: float = np.nan


def _active_gamma_columns(K: int, N: int, mode: str) -> np.ndarray:
    P = 1 + N + (K - 1)
    if mode == "tvp":
        return np.arange(P)
    return np.concatenate([[0], np.arange(1 + N, P)]).astype(np.int64)


def _state_means(data: EstimationData, beta: np.ndarray) -> np.ndarray:
    """Per-row conditional mean under each state, shape (T, K)."""
    cols = []
    for k in range(data.n_states):
        blk = data.block(k)
        cols.append(data.xaug[:, data.col_idx[k]] @ beta[blk])
    return np.column_stack(cols)


def _beta_block_moments(data, rows, k, sigma_sq_k, tau_eff, beta_mean):
    """Precision and shift of one coefficient block's conjugate conditional."""
    blk = data.block(k)
    tau_blk = tau_eff[blk]
    prec = np.diag(1.0 / tau_blk)
    shift = beta_mean[blk] / tau_blk
    if rows.size:
        Xk = data.xaug[np.ix_(rows, data.col_idx[k])]
        prec = prec + Xk.T @ Xk / sigma_sq_k
        shift = shift + Xk.T @ data.y[rows] / sigma_sq_k
    return prec, shift


def draw_beta_sigma(data: EstimationData, states, delta, priors: PriorSpec, config: ModelConfig, rng, sigma_sq):
    """Conjugate block draw of the stacked coefficients, then the variances.

    The effective prior variance per coefficient is the slab or spike scale
    selected by the inclusion indicator.  States never visited fall back to a
    pure prior draw, and their variance refreshes from its prior.  In common
    variance mode all residuals pool into a single inverse-Gamma draw.
    """
    K = data.n_states
    s_row = np.asarray(states[1:], dtype=np.int64)
    tau_eff = np.where(delta == 1, priors.tau1_sq, priors.tau0_sq)
    beta = np.empty(data.n_coeffs)
    for k in range(K):
        rows = np.nonzero(s_row == k)[0]
        prec, shift = _beta_block_moments(data, rows, k, sigma_sq[k], tau_eff, priors.beta_mean)
        beta[data.block(k)] = sample_gaussian_precision(prec, shift, rng)
    if not np.all(np.isfinite(beta)):
        raise NumericalError("non-finite coefficient draw")

    mu = _state_means(data, beta)
    resid = data.y - mu[np.arange(data.n_rows), s_row]
    new_sigma = np.empty(K)
    if config.variance_mode == "common":
        shape = priors.a0 + 0.5 * data.n_rows
        scale = priors.A0 + 0.5 * float(resid @ resid)
        new_sigma[:] = sample_inverse_gamma(shape, scale, rng)
    else:
        for k in range(K):
            rk = resid[s_row == k]
            shape = priors.a0 + 0.5 * rk.size
            scale = priors.A0 + 0.5 * float(rk @ rk)
            new_sigma[k] = sample_inverse_gamma(shape, scale, rng)
    if not np.all(np.isfinite(new_sigma)) or np.any(new_sigma <= 0):
        raise NumericalError("non-finite variance draw")
    return beta, new_sigma


def inclusion_probability(beta, priors: PriorSpec) -> np.ndarray:
    """P(slab | coefficient) under the two-component mixture, elementwise."""
    with np.errstate(divide="ignore"):
        l1 = np.log(priors.omega) + norm_logpdf(beta, priors.beta_mean, priors.tau1_sq)
        l0 = np.log1p(-priors.omega) + norm_logpdf(beta, priors.beta_mean, priors.tau0_sq)
    with np.errstate(over="ignore", invalid="ignore"):
        p = 1.0 / (1.0 + np.exp(l0 - l1))
    p = np.where(priors.omega >= 1.0, 1.0, p)
    p = np.where(priors.omega <= 0.0, 0.0, p)
    return p


def draw_delta(beta, priors: PriorSpec, rng) -> np.ndarray:
    """Independent Bernoulli draws of the slab-inclusion indicators."""
    p = inclusion_probability(beta, priors)
    return (rng.random(beta.shape[0]) < p).astype(np.int8)


def draw_states_ffbs(data: EstimationData, beta, sigma_sq, gamma, rng):
    """Block draw of the full state path given coefficients and transitions.

    Builds the per-period transition matrices from the logit coefficients,
    filters forward under a uniform pre-sample prior, and samples backward.
    Returns (states, filtered probabilities, log likelihood, cube).
    """
    K = data.n_states
    cube = kernels.transition_cube(gamma, data.z, K)
    mu = _state_means(data, beta)
    loglik = norm_logpdf(data.y[:, None], mu, sigma_sq[None, :])
    states, filtered, loglike, ok = kernels.ffbs_draw(loglik, cube, rng)
    if not ok:
        raise NumericalError(
            "state filter underflowed to an all-zero row",
            dump={"beta": beta, "sigma_sq": sigma_sq, "gamma": gamma},
        )
    return states, filtered, loglike, cube


def _logit_design(data: EstimationData, states) -> np.ndarray:
    """Rows (1, covariates, previous-state indicators) for every panel row."""
    K = data.n_states
    T = data.n_rows
    N = data.n_covariates
    Z = np.zeros((T, 1 + N + (K - 1)))
    Z[:, 0] = 1.0
    Z[:, 1 : 1 + N] = data.z
    prev = np.asarray(states[:-1], dtype=np.int64)
    for m in range(K - 1):
        Z[:, 1 + N + m] = prev == m
    return Z


def _gamma_conditional(Za, psi, kappa, zeta):
    """Precision and shift of one destination's Gaussian conditional."""
    prec = Za.T @ (psi[:, None] * Za) + np.eye(Za.shape[1]) / zeta
    shift = Za.T @ kappa
    return prec, shift


def draw_gamma_pg(data: EstimationData, states, tm: TransitionModel, zeta: float, rng):
    """Polya-Gamma update of the logit coefficients, one destination at a time.

    For destination j the competing categories enter through the log-sum of
    their exponentiated linear predictors; conditional on a PG(1, .) draw at
    the tilted predictor the coefficient block is Gaussian.  Fixed mode
    restricts the update to the intercept and indicator columns, leaving the
    covariate block at zero.
    """
    K = data.n_states
    N = data.n_covariates
    if K == 1:
        return tm, np.zeros((data.n_rows, 0))
    Z = _logit_design(data, states)
    active = _active_gamma_columns(K, N, tm.mode)
    Za = Z[:, active]
    gamma = tm.gamma.copy()
    dest = np.asarray(states[1:], dtype=np.int64)
    psi_all = np.empty((data.n_rows, K - 1))
    for j in range(K - 1):
        lp = Z @ gamma.T  # (T, K-1); reference destination contributes exp(0)
        others = np.concatenate([np.delete(lp, j, axis=1), np.zeros((data.n_rows, 1))], axis=1)
        mx = others.max(axis=1)
        comp = mx + np.log(np.exp(others - mx[:, None]).sum(axis=1))
        eta = lp[:, j] - comp
        psi = kernels.pg_draw(eta, rng)
        kappa = ((dest == j) - 0.5) + psi * comp
        prec, shift = _gamma_conditional(Za, psi, kappa, zeta)
        try:
            gamma[j, active] = sample_gaussian_precision(prec, shift, rng)
        except ValueError as exc:
            raise NumericalError(f"singular logit posterior for destination {j}") from exc
        psi_all[:, j] = psi
    if not np.all(np.isfinite(gamma)):
        raise NumericalError("non-finite logit coefficient draw")
    return replace(tm, gamma=gamma), psi_all


def _relabel_gamma(gamma: np.ndarray, perm: np.ndarray, n_cov: int) -> np.ndarray:
    """Transform logit coefficients so relabeled states keep their transition law.

    The reference destination and the indicator base category both move under
    a relabeling, so a pure index shuffle would change the probabilities; the
    exact map subtracts the new reference's coefficients and re-solves the
    intercept/indicator split.
    """
    Km1, P = gamma.shape
    K = Km1 + 1
    inv = np.argsort(perm)  # inv[new label] = old label
    full = np.vstack([gamma, np.zeros(P)])
    out = np.zeros_like(gamma)
    ref_old = inv[K - 1]
    for j in range(Km1):
        a = full[inv[j]] - full[ref_old]
        c_a = a[0]
        d_a = np.append(a[1 + n_cov :], 0.0)  # indicator add-on per old previous state
        c_new = c_a + d_a[ref_old]
        out[j, 0] = c_new
        out[j, 1 : 1 + n_cov] = a[1 : 1 + n_cov]
        for m in range(Km1):
            out[j, 1 + n_cov + m] = c_a + d_a[inv[m]] - c_new
    return out


def permutation_step(state: GibbsState, data: EstimationData, config: ModelConfig, rng, perm=None) -> GibbsState:
    """Uniformly random relabeling of the states (kitchen-sink runs only).

    The theoretical and linear families are structurally identified, so the
    step is a no-op there.  Blocks of the coefficient and indicator vectors,
    the variances, the state path, the filtered probabilities and the logit
    coefficients all move together, leaving every likelihood term unchanged.
    """
    K = data.n_states
    if config.regime_family != "kitchen-sink" or K == 1:
        return state
    if perm is None:
        perm = rng.permutation(K)
    perm = np.asarray(perm, dtype=np.int64)
    if np.array_equal(perm, np.arange(K)):
        return state
    inv = np.argsort(perm)
    sizes = np.diff(data.offsets)
    if len(set(sizes.tolist())) != 1:
        raise ValueError("relabeling requires equally sized coefficient blocks")

    def blockwise(v):
        out = np.empty_like(v)
        for new in range(K):
            out[data.block(new)] = v[data.block(inv[new])]
        return out

    new = GibbsState(
        beta=blockwise(state.beta),
        sigma_sq=state.sigma_sq[inv],
        delta=blockwise(state.delta),
        states=perm[state.states].astype(np.int8),
        gamma=_relabel_gamma(state.gamma, perm, data.n_covariates),
        psi=state.psi,
        filtered=None if state.filtered is None else state.filtered[:, inv],
        loglike=state.loglike,
    )
    return new


def initial_state(data: EstimationData, priors: PriorSpec, config: ModelConfig, rng) -> GibbsState:
    """Dispersed-but-stable start: uniform states, prior-mean coefficients."""
    K = data.n_states
    N = data.n_covariates
    states = rng.integers(0, K, size=data.n_rows + 1).astype(np.int8)
    var0 = float(np.var(data.y)) if data.n_rows > 1 else 1.0
    return GibbsState(
        beta=priors.beta_mean.copy(),
        sigma_sq=np.full(K, max(var0, 1e-12)),
        delta=np.ones(data.n_coeffs, dtype=np.int8),
        states=states,
        gamma=np.zeros((K - 1, 1 + N + (K - 1))),
        psi=np.ones((data.n_rows, K - 1)),
        filtered=None,
        loglike=np.nan,
    )


def gibbs_sweep(state: GibbsState, data: EstimationData, priors: PriorSpec, config: ModelConfig, rng) -> GibbsState:
    """One full sweep over the four conditional blocks."""
    tm = TransitionModel(mode=config.transition_mode, gamma=state.gamma, n_covariates=data.n_covariates)
    beta, sigma_sq = draw_beta_sigma(data, state.states, state.delta, priors, config, rng, state.sigma_sq)
    delta = draw_delta(beta, priors, rng)
    states, filtered, loglike, _ = draw_states_ffbs(data, beta, sigma_sq, state.gamma, rng)
    tm, psi = draw_gamma_pg(data, states, tm, priors.zeta, rng)
    new = GibbsState(beta=beta, sigma_sq=sigma_sq, delta=delta, states=states, gamma=tm.gamma, psi=psi, filtered=filtered, loglike=loglike)
    return permutation_step(new, data, config, rng)


@dataclass
class PosteriorSample:
    """Thinned retained draws with per-draw filtered and transition paths."""

    beta: np.ndarray  # (D, M)
    sigma_sq: np.ndarray  # (D, K)
    delta: np.ndarray  # (D, M)
    states: np.ndarray  # (D, T+1)
    gamma: np.ndarray  # (D, K-1, P)
    loglike: np.ndarray  # (D,)
    filtered: np.ndarray | None  # (D, T, K)
    trans_paths: np.ndarray | None  # (D, T, K, K)
    config: ModelConfig
    design: EstimationData = field(repr=False)

    @property
    def n_draws(self) -> int:
        return self.beta.shape[0]

    @property
    def n_states(self) -> int:
        return self.sigma_sq.shape[1]

    @property
    def dates(self):
        return self.design.dates

    def save(self, path) -> None:
        """Archive the draws to a .npz file (config echoed as JSON)."""
        meta = json.dumps(self.config.dump())
        arrays = dict(
            beta=self.beta,
            sigma_sq=self.sigma_sq,
            delta=self.delta,
            states=self.states,
            gamma=self.gamma,
            loglike=self.loglike,
            config_json=np.array(meta),
        )
        if self.filtered is not None:
            arrays["filtered"] = self.filtered
        if self.trans_paths is not None:
            arrays["trans_paths"] = self.trans_paths
        if self.dates is not None:
            arrays["dates"] = np.array([str(d) for d in self.dates])
        np.savez_compressed(path, **arrays)


def load_draw_archive(path) -> dict:
    """Read a draw archive written by ``PosteriorSample.save`` into a dict.

    Returns the draw arrays plus the configuration echo under 'config'.
    """
    with np.load(path, allow_pickle=False) as npz:
        out = {k: npz[k] for k in npz.files if k != "config_json"}
        out["config"] = json.loads(str(npz["config_json"]))
    return out


def run_sampler(data: EstimationData, priors: PriorSpec, config: ModelConfig, rng, keep_filtered: bool = True, keep_paths: bool = True) -> PosteriorSample:
    """Run the full Gibbs sampler on prepared data and collect retained draws.

    Retains sweep s when s > burn_in and (s - burn_in) is a multiple of the
    thinning factor.  Transition paths are re-evaluated from each retained
    draw's logit coefficients so they match the stored draw after any
    relabeling.
    """
    T, M, K = data.n_rows, data.n_coeffs, data.n_states
    if T < 10 * M:
        warnings.warn(f"estimation window has {T} rows for {M} coefficients; results will lean on the prior", stacklevel=2)
    mc = config.mcmc
    D = mc.n_retained
    N = data.n_covariates
    P = 1 + N + (K - 1)
    out = PosteriorSample(
        beta=np.empty((D, M)),
        sigma_sq=np.empty((D, K)),
        delta=np.empty((D, M), dtype=np.int8),
        states=np.empty((D, T + 1), dtype=np.int8),
        gamma=np.empty((D, K - 1, P)),
        loglike=np.empty(D),
        filtered=np.empty((D, T, K)) if keep_filtered else None,
        trans_paths=np.empty((D, T, K, K)) if keep_paths else None,
        config=config,
        design=data,
    )
    state = initial_state(data, priors, config, rng)
    d = 0
    for sweep in range(1, mc.iterations + 1):
        try:
            state = gibbs_sweep(state, data, priors, config, rng)
        except NumericalError as exc:
            exc.dump.setdefault("sweep", sweep)
            raise
        if sweep > mc.burn_in and (sweep - mc.burn_in) % mc.thin == 0:
            out.beta[d] = state.beta
            out.sigma_sq[d] = state.sigma_sq
            out.delta[d] = state.delta
            out.states[d] = state.states
            out.gamma[d] = state.gamma
            out.loglike[d] = state.loglike
            if keep_filtered:
                out.filtered[d] = state.filtered[1:]
            if keep_paths:
                out.trans_paths[d] = kernels.transition_cube(state.gamma, data.z, K)
            d += 1
    assert d == D
    return out


def run_mcmc(panel, config: ModelConfig, rng, regimes: list[RegimeSpec] | None = None, end: int | None = None, keep_filtered: bool = True, keep_paths: bool = True) -> PosteriorSample:
    """Estimate one model cell on a fundamentals panel window.

    Prepares the design and the semiautomatic prior over rows [0, end) and
    runs the sampler.  ``regimes`` overrides the family-implied regime list
    (required for the 'custom' family).
    """
    if regimes is None:
        regimes = regimes_for(config)
    if len(regimes) != config.K:
        raise ValueError(f"config K={config.K} but {len(regimes)} regimes supplied")
    data = prepare_estimation(panel, regimes, end=end)
    priors = build_prior(panel, regimes, config, end=end)
    return run_sampler(data, priors, config, rng, keep_filtered=keep_filtered, keep_paths=keep_paths)


def state_probability_summary(sample: PosteriorSample):
    """Posterior means of the filtered state probabilities and transition paths.

    Returns (state_probs, trans_paths) with shapes (T, K) and (T, K, K); every
    probability row remains on the simplex because it averages simplex rows.
    """
    if sample.n_draws == 0:
        raise ValueError("empty posterior sample")
    if sample.filtered is None or sample.trans_paths is None:
        raise ValueError("sample was collected without diagnostics; re-run with keep_filtered/keep_paths")
    return sample.filtered.mean(axis=0), sample.trans_paths.mean(axis=0)


def complete_data_loglik(beta, sigma_sq, states, gamma, data: EstimationData) -> float:
    """Joint log density of the data and state path given the parameters.

    Measurement terms plus transition terms plus the uniform pre-sample state
    prior; used to verify relabeling invariance.
    """
    K = data.n_states
    s_row = np.asarray(states[1:], dtype=np.int64)
    mu = _state_means(data, beta)
    ll = norm_logpdf(data.y, mu[np.arange(data.n_rows), s_row], sigma_sq[s_row]).sum()
    cube = kernels.transition_cube(gamma, data.z, K)
    prev = np.asarray(states[:-1], dtype=np.int64)
    ll += np.log(cube[np.arange(data.n_rows), prev, s_row]).sum()
    ll += -np.log(K)
    return float(ll)
