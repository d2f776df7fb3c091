"""Regime definitions, selection matrices, priors and the experiment grid.

Four structural regimes are available (an interest-rate policy-rule set, a
long-run monetary set, a price-parity set and an interest-parity set), each a
column subset of the fundamentals panel with theory-implied prior means.  The
kitchen-sink family puts every predictor in every state with zero-centered
priors.  Coefficients carry a spike/slab mixture prior whose scales are set
semiautomatically from OLS variances.
"""

from __future__ import annotations

from dataclasses import dataclass, field, asdict
from itertools import product

import numpy as np

from . import data as data_mod

__all__ = [
    "INTERCEPT",
    "RegimeSpec",
    "SelectionMatrix",
    "PriorConfig",
    "PriorSpec",
    "McmcConfig",
    "ModelConfig",
    "theoretical_regimes",
    "kitchen_sink_regimes",
    "regimes_for",
    "make_selection_matrix",
    "semiautomatic_scales",
    "build_prior",
    "expand_grid",
]

INTERCEPT = "const"

REGIME_FAMILIES = ("theoretical", "kitchen-sink", "linear", "custom")
TRANSITION_MODES = ("tvp", "fixed")
VARIANCE_MODES = ("common", "state-specific")
SHRINKAGE_MODES = ("ssvs", "none")


@dataclass(frozen=True)
class RegimeSpec:
    """One regime: a named, ordered predictor subset with its prior mean.

    ``columns`` are fundamentals-panel predictor names, with 'const' marking
    the regime's own intercept slot (prior mean 0).
    """

    name: str
    columns: tuple[str, ...]
    prior_mean: tuple[float, ...]

    def __post_init__(self):
        if len(self.columns) != len(set(self.columns)):
            raise ValueError(f"regime {self.name!r} has duplicate columns")
        if len(self.prior_mean) != len(self.columns):
            raise ValueError(f"regime {self.name!r}: prior mean length != column count")

    @property
    def size(self) -> int:
        return len(self.columns)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "RegimeSpec":
        return cls(name=d["name"], columns=tuple(d["columns"]), prior_mean=tuple(d["prior_mean"]))


def theoretical_regimes() -> list[RegimeSpec]:
    """The four structural regimes with their theory-implied prior means."""
    return [
        RegimeSpec(
            name="taylor",
            columns=(INTERCEPT, "i_home_lag", "i_foreign_lag", "infl_home", "infl_foreign", "gap_home", "gap_foreign", "rexr"),
            prior_mean=(0.0, 0.0, 0.0, 1.5, -1.5, 0.5, -0.5, 0.0),
        ),
        RegimeSpec(
            name="monetary",
            columns=(INTERCEPT, "money_home", "money_foreign", "income_home", "income_foreign", "exr"),
            prior_mean=(0.0, 1.0, -1.0, 1.0, -1.0, -1.0),
        ),
        RegimeSpec(
            name="ppp",
            columns=(INTERCEPT, "exr", "price_home", "price_foreign"),
            prior_mean=(0.0, -1.0, 1.0, -1.0),
        ),
        RegimeSpec(
            name="uip",
            columns=(INTERCEPT, "i_home", "i_foreign"),
            prior_mean=(0.0, 1.0, -1.0),
        ),
    ]


def kitchen_sink_regimes(n_states: int, columns: tuple[str, ...] = data_mod.PREDICTOR_COLUMNS) -> list[RegimeSpec]:
    """``n_states`` identical all-predictor regimes with zero-centered priors."""
    if n_states not in (2, 3, 4):
        raise ValueError("kitchen-sink family supports 2 to 4 states")
    cols = (INTERCEPT, *columns)
    mean = tuple(0.0 for _ in cols)
    return [RegimeSpec(name=f"full{k + 1}", columns=cols, prior_mean=mean) for k in range(n_states)]


def linear_regime(model: str) -> list[RegimeSpec]:
    """Single-state regime list for one of the structural benchmark regressions."""
    by_name = {r.name: r for r in theoretical_regimes()}
    if model not in by_name:
        raise ValueError(f"unknown linear benchmark {model!r}; choose from {sorted(by_name)}")
    return [by_name[model]]


@dataclass(frozen=True)
class SelectionMatrix:
    """Binary matrix routing the stacked coefficient vector into one regime.

    Rows span the intercept-augmented predictor vector (one intercept slot per
    state, then the panel predictors); columns span the stacked coefficients.
    Exactly one 1 per column of the regime's block, zeros elsewhere, so that
    ``matrix @ beta`` zero-pads the regime's coefficients into predictor space.
    """

    state: int
    matrix: np.ndarray
    offset: int

    @property
    def size(self) -> int:
        return int(self.matrix.sum())


def make_selection_matrix(regime: RegimeSpec, all_regimes: list[RegimeSpec], predictor_columns: tuple[str, ...] = data_mod.PREDICTOR_COLUMNS) -> SelectionMatrix:
    """Build the selection matrix for ``regime`` within the stacked system."""
    try:
        state = next(i for i, r in enumerate(all_regimes) if r is regime or r == regime)
    except StopIteration:
        raise ValueError("regime is not a member of all_regimes") from None
    K = len(all_regimes)
    R = len(predictor_columns)
    M = sum(r.size for r in all_regimes)
    offset = sum(r.size for r in all_regimes[:state])
    matrix = np.zeros((K + R, M), dtype=np.int8)
    for i, col in enumerate(regime.columns):
        if col == INTERCEPT:
            row = state
        else:
            try:
                row = K + predictor_columns.index(col)
            except ValueError:
                raise ValueError(f"regime column {col!r} not in panel predictors") from None
        matrix[row, offset + i] = 1
    return SelectionMatrix(state=state, matrix=matrix, offset=offset)


def semiautomatic_scales(panel, regime: RegimeSpec, c0: float, c1: float, end: int | None = None):
    """Spike/slab variances scaled from the regime's OLS coefficient variances.

    Runs OLS of the target on the regime's columns (plus intercept) over panel
    rows [0, end) and returns (c0 * var_ols, c1 * var_ols) elementwise.  A
    rank-deficient design falls back to a ridge-stabilised variance with ridge
    1e-6 * trace(X'X) / m; the prior scales only need the right magnitude.
    """
    if c1 <= c0:
        raise ValueError("slab scale c1 must exceed spike scale c0")
    y = panel.target_array()[:end]
    X_all = panel.predictor_array()[:end]
    cols = [c for c in regime.columns if c != INTERCEPT]
    idx = [data_mod.PREDICTOR_COLUMNS.index(c) for c in cols]
    X = np.column_stack([np.ones(len(y)), X_all[:, idx]])
    m = X.shape[1]
    if len(y) <= m:
        raise ValueError("estimation window too short for the OLS prior scaling")
    xtx = X.T @ X
    ridge = 0.0
    if np.linalg.cond(xtx) > 1e10:
        ridge = 1e-6 * np.trace(xtx) / m
        xtx = xtx + ridge * np.eye(m)
    xtx_inv = np.linalg.inv(xtx)
    coef = xtx_inv @ (X.T @ y)
    resid = y - X @ coef
    s2 = float(resid @ resid) / (len(y) - m)
    var_ols = np.maximum(s2 * np.diag(xtx_inv), 1e-20)
    order = [regime.columns.index(INTERCEPT)] + [regime.columns.index(c) for c in cols]
    out = np.empty(regime.size)
    out[order] = var_ols  # map back to the regime's declared column order
    return c0 * out, c1 * out


@dataclass(frozen=True)
class PriorConfig:
    """Hyperparameters of the prior; defaults follow the estimation protocol."""

    omega: float = 0.5  # prior slab probability per coefficient
    zeta: float = 100.0  # logit-coefficient prior variance scale
    a0: float = 0.01  # inverse-Gamma shape for the state variances
    A0: float = 0.01  # inverse-Gamma scale
    c0: float = 0.1  # spike multiplier on the OLS variance
    c1: float = 10.0  # slab multiplier on the OLS variance

    def __post_init__(self):
        if not 0.0 <= self.omega <= 1.0:
            raise ValueError("omega must lie in [0, 1]")
        if min(self.zeta, self.a0, self.A0) <= 0.0:
            raise ValueError("zeta, a0 and A0 must be positive")
        if not 0.0 < self.c0 < self.c1:
            raise ValueError("need 0 < c0 < c1 for a spike/slab separation")


@dataclass(frozen=True)
class PriorSpec:
    """Fully materialised prior for the stacked coefficient system."""

    beta_mean: np.ndarray  # stacked prior means, length M
    tau0_sq: np.ndarray  # spike variances
    tau1_sq: np.ndarray  # slab variances
    omega: np.ndarray  # per-coefficient slab probability
    a0: float
    A0: float
    zeta: float

    def __post_init__(self):
        if not (np.all(self.tau0_sq > 0) and np.all(self.tau1_sq > self.tau0_sq)):
            raise ValueError("need tau1_sq > tau0_sq > 0 elementwise")
        if np.any(self.omega < 0) or np.any(self.omega > 1):
            raise ValueError("omega must lie in [0, 1]")
        if min(self.a0, self.A0, self.zeta) <= 0:
            raise ValueError("a0, A0 and zeta must be positive")


@dataclass(frozen=True)
class McmcConfig:
    iterations: int = 80_000
    burn_in: int = 30_000
    thin: int = 10

    def __post_init__(self):
        if self.iterations <= self.burn_in:
            raise ValueError("iterations must exceed burn_in")
        if self.thin < 1:
            raise ValueError("thin must be at least 1")

    @property
    def n_retained(self) -> int:
        return (self.iterations - self.burn_in) // self.thin


@dataclass(frozen=True)
class ModelConfig:
    """Complete description of one model cell of the experiment grid."""

    K: int = 4
    regime_family: str = "theoretical"
    transition_mode: str = "tvp"
    variance_mode: str = "common"
    shrinkage: str = "ssvs"
    mcmc: McmcConfig = field(default_factory=McmcConfig)
    priors: PriorConfig = field(default_factory=PriorConfig)
    seed: int = 0
    horizons: tuple[int, ...] = (1, 3, 12)
    t0: str = "2004-12"
    linear_model: str | None = None

    def __post_init__(self):
        if self.regime_family not in REGIME_FAMILIES:
            raise ValueError(f"unknown regime family {self.regime_family!r}")
        if self.transition_mode not in TRANSITION_MODES:
            raise ValueError(f"unknown transition mode {self.transition_mode!r}")
        if self.variance_mode not in VARIANCE_MODES:
            raise ValueError(f"unknown variance mode {self.variance_mode!r}")
        if self.shrinkage not in SHRINKAGE_MODES:
            raise ValueError(f"unknown shrinkage mode {self.shrinkage!r}")
        if self.regime_family == "theoretical" and self.K != 4:
            raise ValueError("the theoretical family uses exactly 4 states")
        if self.regime_family == "kitchen-sink" and self.K not in (2, 3, 4):
            raise ValueError("kitchen-sink allows 2 to 4 states")
        if self.regime_family == "linear":
            if self.K != 1:
                raise ValueError("linear benchmarks are single-state")
            if not self.linear_model:
                raise ValueError("linear benchmarks need linear_model")
        if any(h < 1 for h in self.horizons):
            raise ValueError("horizons must be positive")

    @property
    def model_id(self) -> str:
        if self.regime_family == "linear":
            return f"linear-{self.linear_model}"
        cls = "ms-tvp" if self.transition_mode == "tvp" else "ms-ft"
        fam = "theoretical" if self.regime_family == "theoretical" else "full"
        shr = "ssvs" if self.shrinkage == "ssvs" else "noshrink"
        var = "statevar" if self.variance_mode == "state-specific" else "commonvar"
        return f"{cls}-{fam}-k{self.K}-{shr}-{var}"

    @property
    def model_class(self) -> str:
        if self.regime_family == "linear":
            return "linear"
        return "ms-tvp" if self.transition_mode == "tvp" else "ms-ft"

    def dump(self) -> dict:
        d = asdict(self)
        d["model_id"] = self.model_id
        d["n_retained"] = self.mcmc.n_retained
        return d


def regimes_for(config: ModelConfig) -> list[RegimeSpec]:
    """Regime list implied by a model configuration."""
    if config.regime_family == "theoretical":
        return theoretical_regimes()
    if config.regime_family == "kitchen-sink":
        return kitchen_sink_regimes(config.K)
    if config.regime_family == "linear":
        return linear_regime(config.linear_model)
    raise ValueError("custom-family configurations need an explicit regime list")


def build_prior(panel, regimes: list[RegimeSpec], config: ModelConfig, end: int | None = None) -> PriorSpec:
    """Stack per-regime prior means and semiautomatic scales into a PriorSpec.

    With shrinkage 'none' every slab probability is one, so only the slab
    component is ever used (a weakly informative prior).
    """
    pc = config.priors
    means, t0s, t1s = [], [], []
    for regime in regimes:
        tau0, tau1 = semiautomatic_scales(panel, regime, pc.c0, pc.c1, end=end)
        means.append(np.asarray(regime.prior_mean, dtype=np.float64))
        t0s.append(tau0)
        t1s.append(tau1)
    omega_val = 1.0 if config.shrinkage == "none" else pc.omega
    M = sum(r.size for r in regimes)
    return PriorSpec(
        beta_mean=np.concatenate(means),
        tau0_sq=np.concatenate(t0s),
        tau1_sq=np.concatenate(t1s),
        omega=np.full(M, omega_val),
        a0=pc.a0,
        A0=pc.A0,
        zeta=pc.zeta,
    )


def expand_grid(grid_blocks: list[dict], mcmc: McmcConfig, priors: PriorConfig, seed: int, horizons: tuple[int, ...], t0: str) -> list[ModelConfig]:
    """Expand the experiment grid declaration into one ModelConfig per cell.

    Each block crosses its own option lists; a 'linear' block lists benchmark
    model names instead.  Cells come back sorted by model id for determinism.
    """
    cells: list[ModelConfig] = []
    common = dict(mcmc=mcmc, priors=priors, seed=seed, horizons=tuple(horizons), t0=t0)
    for block in grid_blocks:
        family = block.get("family")
        if family == "linear":
            for name in block.get("models", []):
                cells.append(ModelConfig(K=1, regime_family="linear", transition_mode="fixed", variance_mode="common", shrinkage="none", linear_model=name, **common))
            continue
        if family not in ("theoretical", "kitchen-sink"):
            raise ValueError(f"grid block family must be theoretical, kitchen-sink or linear, got {family!r}")
        states = block.get("states", [4] if family == "theoretical" else [2])
        transitions = block.get("transition", ["tvp"])
        variances = block.get("variance", ["common"])
        shrinkages = block.get("shrinkage", ["ssvs"])
        for K, tr, var, shr in product(states, transitions, variances, shrinkages):
            cells.append(ModelConfig(K=int(K), regime_family=family, transition_mode=tr, variance_mode=var, shrinkage=shr, **common))
    ids = [c.model_id for c in cells]
    if len(ids) != len(set(ids)):
        dup = sorted({i for i in ids if ids.count(i) > 1})
        raise ValueError(f"grid produces duplicate model ids: {dup}")
    return sorted(cells, key=lambda c: c.model_id)
