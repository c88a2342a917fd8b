"""Conjugate Gaussian location model, used as an analytic oracle."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .base import DataShard, ModelSpec

LOG_2PI = np.log(2.0 * np.pi)


@dataclass(frozen=True)
class GaussianToyConfig:
    dim: int = 1
    prior_mean: float = 0.0
    prior_var: float = 10.0
    noise_var: float = 1.0

    def __post_init__(self):
        if self.prior_var <= 0 or self.noise_var <= 0:
            raise ValueError("variances must be positive")


class GaussianToy(ModelSpec):
    """theta ~ N(m0, s0^2 I), x_i ~ N(theta, s^2 I)."""

    name = "gaussian"

    def __init__(self, config: GaussianToyConfig, shard: DataShard, prior_temper: float = 1.0):
        super().__init__(shard, prior_temper)
        if shard.Y.ndim != 2 or shard.Y.shape[1] != config.dim:
            raise ValueError(f"shard points must have shape (n, {config.dim})")
        self.config = config
        self.dim = config.dim
        self._sum = shard.Y.sum(axis=0)

    def with_shard(self, shard, prior_temper=None):
        return GaussianToy(self.config, shard, self.prior_temper if prior_temper is None else prior_temper)

    def log_prior(self, theta):
        c = self.config
        return float(-0.5 * self.dim * (LOG_2PI + np.log(c.prior_var))
                     - 0.5 * np.sum((theta - c.prior_mean) ** 2) / c.prior_var)

    def grad_log_prior(self, theta):
        return -(theta - self.config.prior_mean) / self.config.prior_var

    def hess_diag_log_prior(self, theta):
        return np.full(self.dim, -1.0 / self.config.prior_var)

    def log_likelihood(self, theta):
        c = self.config
        Y = self.shard.Y
        return float(-0.5 * Y.size * (LOG_2PI + np.log(c.noise_var))
                     - 0.5 * np.sum((Y - theta) ** 2) / c.noise_var)

    def grad_log_likelihood(self, theta):
        return (self._sum - self.shard.n * theta) / self.config.noise_var

    def hess_diag_log_likelihood(self, theta):
        return np.full(self.dim, -self.shard.n / self.config.noise_var)

    def pointwise_log_likelihood(self, thetas, shard):
        thetas = np.atleast_2d(thetas)
        sq = np.sum((shard.Y[None, :, :] - thetas[:, None, :]) ** 2, axis=-1)
        return -0.5 * self.dim * (LOG_2PI + np.log(self.config.noise_var)) - 0.5 * sq / self.config.noise_var

    def posterior(self) -> tuple[np.ndarray, float]:
        """Exact mean and isotropic variance of the tempered (sub)posterior."""
        c = self.config
        prec = self.prior_temper / c.prior_var + self.shard.n / c.noise_var
        mean = (self.prior_temper * c.prior_mean / c.prior_var + self._sum / c.noise_var) / prec
        return np.broadcast_to(mean, (self.dim,)).astype(float), 1.0 / prec


def gaussian_toy(
    prior_mean: float = 0.0,
    prior_var: float = 10.0,
    noise_var: float = 1.0,
    shard: DataShard | None = None,
    prior_temper: float = 1.0,
    dim: int | None = None,
) -> GaussianToy:
    if shard is None:
        shard = DataShard(None, np.zeros((0, dim or 1)))
    config = GaussianToyConfig(shard.Y.shape[1], prior_mean, prior_var, noise_var)
    return GaussianToy(config, shard, prior_temper)


def generate_gaussian(config: GaussianToyConfig, N: int, seed: int):
    rng = np.random.default_rng(seed)
    theta = config.prior_mean + np.sqrt(config.prior_var) * rng.standard_normal(config.dim)
    Y = theta + np.sqrt(config.noise_var) * rng.standard_normal((N, config.dim))
    return DataShard(None, Y), {"theta": theta.tolist()}
