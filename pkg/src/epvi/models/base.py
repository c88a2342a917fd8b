from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class DataValidationError(ValueError):
    pass


@dataclass(frozen=True)
class DataShard:
    """One machine's block of observations.

    ``X`` holds inputs (features or covariates), ``Y`` the observed outputs
    (labels, response rows, or raw points for the Gaussian toy).
    """

    X: np.ndarray | None
    Y: np.ndarray
    shard_id: int = 0
    rows: np.ndarray | None = field(default=None, compare=False)

    @property
    def n(self) -> int:
        return self.Y.shape[0]

    def take(self, rows, shard_id: int | None = None) -> DataShard:
        rows = np.asarray(rows)
        return DataShard(
            None if self.X is None else self.X[rows],
            self.Y[rows],
            self.shard_id if shard_id is None else shard_id,
            rows,
        )


class ModelSpec:
    """A tempered log-joint over an unconstrained real parameter vector.

    Subclasses implement ``log_prior`` (already including the log-Jacobian of
    any reparameterization), ``log_likelihood``, and their first and second
    derivatives. The tempered prior enters the log-joint scaled by
    ``prior_temper``.
    """

    name = "model"

    def __init__(self, shard: DataShard, prior_temper: float = 1.0):
        if not 0.0 < prior_temper <= 1.0:
            raise ValueError(f"prior_temper must lie in (0, 1], got {prior_temper}")
        self.shard = shard
        self.prior_temper = float(prior_temper)

    dim: int

    # subclasses fill these in
    def log_prior(self, theta: np.ndarray) -> float:
        raise NotImplementedError

    def grad_log_prior(self, theta: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def hess_diag_log_prior(self, theta: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def log_likelihood(self, theta: np.ndarray) -> float:
        raise NotImplementedError

    def grad_log_likelihood(self, theta: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def hess_diag_log_likelihood(self, theta: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def pointwise_log_likelihood(self, thetas: np.ndarray, shard: DataShard) -> np.ndarray:
        """``log p(row_i | theta_s)`` for every draw and row, shape ``(S, n)``."""
        raise NotImplementedError

    def log_joint(self, theta) -> float:
        theta = self._check(theta)
        return self.prior_temper * self.log_prior(theta) + self.log_likelihood(theta)

    def grad(self, theta) -> np.ndarray:
        theta = self._check(theta)
        return self.prior_temper * self.grad_log_prior(theta) + self.grad_log_likelihood(theta)

    def hessian_diag(self, theta) -> np.ndarray:
        theta = self._check(theta)
        return self.prior_temper * self.hess_diag_log_prior(theta) + self.hess_diag_log_likelihood(theta)

    def hessian_trace(self, theta) -> float:
        return float(np.sum(self.hessian_diag(theta)))

    def with_shard(self, shard: DataShard, prior_temper: float | None = None) -> ModelSpec:
        """Same model and hyperparameters on another shard."""
        raise NotImplementedError

    def _check(self, theta) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (self.dim,):
            raise ValueError(f"theta must have shape ({self.dim},), got {theta.shape}")
        return theta
