"""Hierarchical Bayesian logistic regression.

    alpha ~ Gamma(a, b)            (shape a, rate b)
    w_v   ~ N(0, 1/alpha)          v = 1..V
    y_n   ~ Bernoulli(sigmoid(-w . x_n))

Inference runs on theta = (w, t) with t = log(alpha); the prior density in
these coordinates includes the log-Jacobian ``t`` and is tempered as a whole.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit, gammaln

from .base import DataShard, DataValidationError, ModelSpec

LOG_2PI = np.log(2.0 * np.pi)


@dataclass(frozen=True)
class LogisticModelConfig:
    V: int = 10
    prior_shape: float = 1.0
    prior_rate: float = 1.0

    def __post_init__(self):
        if self.prior_shape <= 0 or self.prior_rate <= 0:
            raise ValueError("Gamma hyperprior needs a > 0 and b > 0")


def _log_sigmoid(z):
    return -np.logaddexp(0.0, -z)


class LogisticModel(ModelSpec):
    name = "logistic"

    def __init__(self, config: LogisticModelConfig, shard: DataShard, prior_temper: float = 1.0):
        super().__init__(shard, prior_temper)
        X, y = shard.X, shard.Y
        if X is None or X.ndim != 2 or X.shape[1] != config.V:
            raise DataValidationError(f"expected a feature matrix with {config.V} columns")
        if y.shape != (X.shape[0],):
            raise DataValidationError("labels must be a vector with one entry per row")
        if not np.all((y == 0) | (y == 1)):
            raise DataValidationError("labels must be 0 or 1")
        self.config = config
        self.dim = config.V + 1
        self._X = np.ascontiguousarray(X, dtype=float)
        self._y = y.astype(float)
        self._X2 = self._X**2

    def with_shard(self, shard, prior_temper=None):
        return LogisticModel(self.config, shard, self.prior_temper if prior_temper is None else prior_temper)

    def log_prior(self, theta):
        a, b, V = self.config.prior_shape, self.config.prior_rate, self.config.V
        w, t = theta[:-1], theta[-1]
        alpha = np.exp(t)
        log_gamma = a * np.log(b) - gammaln(a) + (a - 1.0) * t - b * alpha
        log_w = -0.5 * V * LOG_2PI + 0.5 * V * t - 0.5 * alpha * (w @ w)
        return float(log_gamma + t + log_w)

    def grad_log_prior(self, theta):
        a, b, V = self.config.prior_shape, self.config.prior_rate, self.config.V
        w, t = theta[:-1], theta[-1]
        alpha = np.exp(t)
        g = np.empty(self.dim)
        g[:-1] = -alpha * w
        g[-1] = a - b * alpha + 0.5 * V - 0.5 * alpha * (w @ w)
        return g

    def hess_diag_log_prior(self, theta):
        b = self.config.prior_rate
        w, t = theta[:-1], theta[-1]
        alpha = np.exp(t)
        h = np.empty(self.dim)
        h[:-1] = -alpha
        h[-1] = -b * alpha - 0.5 * alpha * (w @ w)
        return h

    def log_likelihood(self, theta):
        # labels are 0/1, so each row needs one softplus: -log(1 + exp((2y - 1) z))
        z = self._X @ theta[:-1]
        return float(-np.logaddexp(0.0, (2.0 * self._y - 1.0) * z).sum())

    def grad_log_likelihood(self, theta):
        z = self._X @ theta[:-1]
        g = np.zeros(self.dim)
        g[:-1] = self._X.T @ ((1.0 - self._y) - expit(z))
        return g

    def hess_diag_log_likelihood(self, theta):
        p = expit(self._X @ theta[:-1])
        h = np.zeros(self.dim)
        h[:-1] = -(self._X2.T @ (p * (1.0 - p)))
        return h

    def prob_positive(self, thetas, X) -> np.ndarray:
        """P(y=1 | x, theta) for each draw and row, shape ``(S, n)``."""
        thetas = np.atleast_2d(thetas)
        return expit(-(thetas[:, :-1] @ X.T))

    def pointwise_log_likelihood(self, thetas, shard):
        thetas = np.atleast_2d(thetas)
        z = thetas[:, :-1] @ shard.X.T
        y = shard.Y[None, :]
        return y * _log_sigmoid(-z) + (1.0 - y) * _log_sigmoid(z)


def logistic_model(config: LogisticModelConfig, shard: DataShard, prior_temper: float = 1.0) -> LogisticModel:
    return LogisticModel(config, shard, prior_temper)


def generate_logistic(config: LogisticModelConfig, N: int, seed: int, w: np.ndarray | None = None):
    """Draw (X, y) from the generative process; ``w`` overrides the coefficient draw."""
    rng = np.random.default_rng(seed)
    alpha = rng.gamma(config.prior_shape, 1.0 / config.prior_rate)
    if w is None:
        w = rng.standard_normal(config.V) / np.sqrt(alpha)
    w = np.asarray(w, dtype=float)
    X = rng.standard_normal((N, config.V))
    y = (rng.random(N) < expit(-(X @ w))).astype(float)
    return DataShard(X, y), {"alpha": float(alpha), "w": w.tolist()}
