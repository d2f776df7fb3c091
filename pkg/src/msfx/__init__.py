"""Bayesian Markov-switching exchange-rate regressions with covariate-driven
transition probabilities, plus a recursive out-of-sample forecast harness
benchmarked against the random walk."""

__version__ = "0.1.0"

from . import data, distributions, evaluation, forecast, gibbs, kernels, models  # noqa: F401
