"""Predictive simulation, scoring, the benchmark, and the recursive harness."""

import math

import numpy as np
import pytest

from msfx import models
from msfx.distributions import spawn_stream
from msfx.forecast import (
    ForecastRecord,
    forecast_at_origin,
    forecast_origins,
    log_predictive_score,
    predictive_draws,
    random_walk_forecast,
    recursive_forecast,
)
from msfx.gibbs import PosteriorSample, prepare_estimation
from msfx.kernels import transition_cube
from msfx.models import McmcConfig, ModelConfig

from conftest import make_panel
from dgp import build_estimation_data


def make_sample(design, beta, sigma_sq, gamma, final_state, n_draws, config=None):
    """Posterior sample with every retained draw pinned to the same values."""
    K = design.n_states
    T = design.n_rows
    P = gamma.shape[1] if gamma.size else 1 + design.n_covariates + (K - 1)
    states = np.zeros((n_draws, T + 1), dtype=np.int8)
    states[:, -1] = final_state
    return PosteriorSample(
        beta=np.tile(beta, (n_draws, 1)),
        sigma_sq=np.tile(sigma_sq, (n_draws, 1)),
        delta=np.ones((n_draws, beta.shape[0]), dtype=np.int8),
        states=states,
        gamma=np.tile(gamma.reshape(1, K - 1, P), (n_draws, 1, 1)),
        loglike=np.zeros(n_draws),
        filtered=None,
        trans_paths=None,
        config=config or ModelConfig(K=K, regime_family="custom", mcmc=McmcConfig(iterations=2, burn_in=1, thin=1)),
        design=design,
    )


class TestLogPredictiveScore:
    def test_standard_normal_at_mode(self):
        lps = log_predictive_score(np.array([0.0]), np.array([1.0]), 0.0)
        assert lps == pytest.approx(-0.5 * math.log(2 * math.pi), abs=1e-12)

    def test_two_component_mixture(self):
        lps = log_predictive_score(np.array([1.0, -1.0]), np.array([1.0, 1.0]), 0.0)
        assert lps == pytest.approx(-0.5 - 0.5 * math.log(2 * math.pi), abs=1e-12)

    def test_far_tail_is_floored_and_finite(self):
        lps = log_predictive_score(np.array([0.0]), np.array([1.0]), 50.0)
        assert np.isfinite(lps)
        assert lps >= math.log(1e-300)


class TestPredictiveDraws:
    def test_single_state_density(self):
        T, s2 = 30, 0.49
        x = np.zeros((T, 0))
        design = build_estimation_data(np.zeros(T), np.zeros((T, 1)), [x])
        sample = make_sample(design, beta=np.zeros(1), sigma_sq=np.array([s2]), gamma=np.zeros((0, 2)), final_state=0, n_draws=40_000)
        draws, means, variances = predictive_draws(sample, 1, spawn_stream(1, 0))
        assert draws.shape[0] == sample.n_draws
        np.testing.assert_array_equal(means, 0.0)
        np.testing.assert_array_equal(variances, s2)
        assert abs(draws.var() - s2) < 4 * s2 * math.sqrt(2.0 / draws.size)

    def test_two_state_mixture_oracle(self):
        # fixed transitions: the one-step density is a two-component mixture
        # with weights given by the transition row of the terminal state
        T = 20
        rng = np.random.default_rng(0)
        x = rng.standard_normal((T, 1))
        design = build_estimation_data(rng.standard_normal(T), np.zeros((T, 1)), [x, x])
        beta = np.array([0.8, 0.0, -1.1, 0.0])
        sig = np.array([0.3, 0.9])
        gamma = np.array([[0.4, 0.0, 0.7]])  # fixed mode: zero covariate block
        sample = make_sample(design, beta, sig, gamma, final_state=0, n_draws=60_000)
        draws, means, variances = predictive_draws(sample, 1, spawn_stream(1, 1))
        w = transition_cube(gamma, np.zeros((1, 1)), 2)[0, 0]
        x_last = design.xaug[-1]
        mu = np.array([beta[:2] @ x_last[design.col_idx[0]], beta[2:] @ x_last[design.col_idx[1]]])
        mix_mean = w @ mu
        mix_var = w @ (sig + mu**2) - mix_mean**2
        assert abs(draws.mean() - mix_mean) < 4 * math.sqrt(mix_var / draws.size)
        assert abs(draws.var() - mix_var) < 4 * mix_var * math.sqrt(2.0 / draws.size)
        # Rao-Blackwellised score approaches the analytic mixture log density
        y_star = 0.2
        from scipy.stats import norm

        exact = math.log(w[0] * norm(mu[0], math.sqrt(sig[0])).pdf(y_star) + w[1] * norm(mu[1], math.sqrt(sig[1])).pdf(y_star))
        lps = log_predictive_score(means, variances, y_star)
        assert lps == pytest.approx(exact, abs=0.02)

    def test_two_step_mixture_oracle(self):
        # with frozen covariates the 2-step weights are a row of the squared
        # one-step transition matrix
        T = 15
        rng = np.random.default_rng(1)
        x = rng.standard_normal((T, 1))
        design = build_estimation_data(rng.standard_normal(T), np.full((T, 1), 0.4), [x, x])
        beta = np.array([1.0, 0.0, -1.5, 0.0])
        sig = np.array([0.2, 0.5])
        gamma = np.array([[0.3, 0.6, 0.8]])  # covariate-driven, frozen at z = 0.4-mean
        sample = make_sample(design, beta, sig, gamma, final_state=1, n_draws=80_000)
        draws, _, _ = predictive_draws(sample, 2, spawn_stream(1, 5))
        P = transition_cube(gamma, design.z[-1:].reshape(1, 1), 2)[0]
        w = (P @ P)[1]  # started from state 1
        x_last = design.xaug[-1]
        mu = np.array([beta[:2] @ x_last[design.col_idx[0]], beta[2:] @ x_last[design.col_idx[1]]])
        mix_mean = w @ mu
        mix_var = w @ (sig + mu**2) - mix_mean**2
        assert abs(draws.mean() - mix_mean) < 4 * math.sqrt(mix_var / draws.size)
        assert abs(draws.var() - mix_var) < 4 * mix_var * math.sqrt(2.0 / draws.size)

    def test_invalid_horizon(self):
        design = build_estimation_data(np.zeros(5), np.zeros((5, 1)), [np.zeros((5, 0))])
        sample = make_sample(design, np.zeros(1), np.ones(1), np.zeros((0, 2)), 0, 10)
        with pytest.raises(ValueError):
            predictive_draws(sample, 0, spawn_stream(1, 2))


class TestRandomWalk:
    def test_point_zero_and_score(self, panel):
        origin = 100
        rec = random_walk_forecast(panel, origin, 1)
        assert rec.point == 0.0
        var = np.var(panel.target_array()[: origin + 1], ddof=1)
        manual = -0.5 * (math.log(2 * math.pi * var) + rec.realized**2 / var)
        assert rec.log_score == pytest.approx(manual, abs=1e-12)

    def test_short_window_rejected(self, panel):
        with pytest.raises(ValueError, match="24 months"):
            random_walk_forecast(panel, 10, 1)

    def test_zero_variance_rejected(self):
        from msfx.data import FundamentalsPanel

        panel = make_panel(months=80, seed=3)
        frame = panel.frame.copy()
        frame["d_exr"] = 0.0
        with pytest.raises(ValueError, match="zero variance"):
            random_walk_forecast(FundamentalsPanel(frame), 40, 1)


class TestOrigins:
    def test_holdout_arithmetic(self):
        panel = make_panel(months=537, start="1973-01", seed=4)  # raw 1973-01..2017-09
        assert str(panel.dates[-1]) == "2017-09"
        origins = forecast_origins(panel, "2004-12", [1])
        assert len(origins) == 153
        assert str(panel.dates[origins[0]]) == "2004-12"
        assert str(panel.dates[origins[-1]]) == "2017-08"
        origins12 = forecast_origins(panel, "2004-12", [12])
        assert str(panel.dates[origins12[-1]]) == "2016-09"

    def test_cutoff_inside_panel_required(self, panel):
        with pytest.raises(ValueError):
            forecast_origins(panel, str(panel.dates[-1]), [1])


def tiny_cell(seed=11, horizons=(1, 3)):
    return ModelConfig(
        K=1,
        regime_family="linear",
        linear_model="uip",
        transition_mode="fixed",
        variance_mode="common",
        shrinkage="none",
        mcmc=McmcConfig(iterations=60, burn_in=30, thin=2),
        seed=seed,
        horizons=horizons,
        t0="2008-06",
    )


class TestRecursive:
    def test_records_ordered_and_reproducible(self):
        panel = make_panel(months=240, seed=5)  # 1990-03 .. 2009-12
        cell = tiny_cell()
        a = recursive_forecast(panel, cell)
        b = recursive_forecast(panel, cell)
        assert [r.origin for r in a] == sorted(r.origin for r in a)
        assert all(r1 == r2 for r1, r2 in zip(a, b))
        horizons = {r.horizon for r in a}
        assert horizons == {1, 3}
        # each horizon h stops h months before the end
        last_h3 = max(r.origin for r in a if r.horizon == 3)
        assert last_h3 == "2009-09"

    def test_no_lookahead(self):
        from msfx.data import FundamentalsPanel

        panel = make_panel(months=200, seed=6)
        origin_idx = panel.loc_of("2005-06")
        cell = tiny_cell(horizons=(1, 3))
        recs = forecast_at_origin(panel, cell, origin_idx, spawn_stream(cell.seed, 0, 0), store_draws=True)
        corrupted = panel.frame.copy()
        corrupted.iloc[origin_idx + 1 :, :] = 9.99  # overwrite everything after the origin
        recs_c = forecast_at_origin(FundamentalsPanel(corrupted), cell, origin_idx, spawn_stream(cell.seed, 0, 0), store_draws=True)
        for r1, r2 in zip(recs, recs_c):
            np.testing.assert_array_equal(r1.draws, r2.draws)
            assert r1.point == r2.point

    def test_degenerate_model_matches_random_walk_score(self):
        # single state, zero coefficients, variance pinned to the benchmark's:
        # the model's predictive density is exactly the benchmark's
        panel = make_panel(months=150, seed=7)
        origin = 100
        rw = random_walk_forecast(panel, origin, 1)
        regimes = [models.RegimeSpec("null", (models.INTERCEPT,), (0.0,))]
        design = prepare_estimation(panel, regimes, end=origin + 1)
        var = float(np.var(panel.target_array()[: origin + 1], ddof=1))
        sample = make_sample(design, beta=np.zeros(1), sigma_sq=np.array([var]), gamma=np.zeros((0, 2)), final_state=0, n_draws=500)
        _, means, variances = predictive_draws(sample, 1, spawn_stream(2, 0))
        lps = log_predictive_score(means, variances, rw.realized)
        assert lps == pytest.approx(rw.log_score, abs=1e-10)
