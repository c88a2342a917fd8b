"""Topographic latent source analysis (TLSA).

Observations ``U (N x V)`` are a covariate-weighted superposition of L
spatial radial-basis sources::

    lambda_l ~ Exponential(rho)
    rbar_ld  ~ Beta(1, 1)                      d = 1..D
    w_cl     ~ N(0, sigma_w^2)
    u_nv     ~ N(sum_c x_nc sum_l w_cl g_lv, 1/tau)
    g_lv     = exp(-||r_v - rbar_l||^2 / lambda_l)

``r_v`` is a fixed grid location for output dimension v. Inference runs on
theta = (W, t, s) with lambda = exp(t) and rbar = sigmoid(s).

``positive_exponent=True`` drops the minus sign in the basis exponent. That basis
grows without bound away from its centre and exists only for comparison.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .base import DataShard, DataValidationError, ModelSpec

LOG_2PI = np.log(2.0 * np.pi)


def grid_locations(V: int, D: int) -> np.ndarray:
    """``V`` points on a regular grid in the unit cube ``[0, 1]^D``."""
    side = int(np.ceil(V ** (1.0 / D) - 1e-9))
    axes = [np.linspace(0.0, 1.0, side)] * D
    pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, D)
    return np.ascontiguousarray(pts[:V])


@dataclass(frozen=True)
class TlsaModelConfig:
    L: int = 4
    C: int = 4
    V: int = 50
    D: int = 1
    rho: float = 1.0
    sigma_w2: float = 5.0
    tau: float = 1.0
    positive_exponent: bool = False

    def __post_init__(self):
        if min(self.rho, self.sigma_w2, self.tau) <= 0:
            raise ValueError("TLSA hyperparameters must be positive")
        if min(self.L, self.C, self.V, self.D) < 1:
            raise ValueError("L, C, V and D must be at least 1")

    @property
    def dim(self) -> int:
        return self.C * self.L + self.L + self.L * self.D

    @property
    def locations(self) -> np.ndarray:
        return grid_locations(self.V, self.D)


class TlsaModel(ModelSpec):
    name = "tlsa"

    def __init__(self, config: TlsaModelConfig, shard: DataShard, prior_temper: float = 1.0):
        super().__init__(shard, prior_temper)
        X, U = shard.X, shard.Y
        if X is None or X.ndim != 2 or X.shape[1] != config.C:
            raise DataValidationError(f"expected a covariate matrix with {config.C} columns")
        if U.ndim != 2 or U.shape != (X.shape[0], config.V):
            raise DataValidationError(f"expected outputs of shape ({X.shape[0]}, {config.V})")
        self.config = config
        self.dim = config.dim
        self._X = np.ascontiguousarray(X, dtype=float)
        self._U = np.ascontiguousarray(U, dtype=float)
        self._r = config.locations
        self._x2 = np.sum(self._X**2, axis=0)
        self._sign = 1.0 if config.positive_exponent else -1.0

    def with_shard(self, shard, prior_temper=None):
        return TlsaModel(self.config, shard, self.prior_temper if prior_temper is None else prior_temper)

    def unpack(self, theta):
        c = self.config
        CL, L = c.C * c.L, c.L
        W = theta[:CL].reshape(c.C, L)
        t = theta[CL : CL + L]
        s = theta[CL + L :].reshape(L, c.D)
        return W, t, s

    def pack(self, W, t, s) -> np.ndarray:
        return np.concatenate([np.ravel(W), np.ravel(t), np.ravel(s)])

    def basis(self, t, s):
        """Basis matrix G (L x V) and the pieces its derivatives reuse."""
        rbar = expit(s)  # (L, D)
        diff = self._r[None, :, :] - rbar[:, None, :]  # (L, V, D)
        sqdist = np.sum(diff**2, axis=-1)  # (L, V)
        inv_lam = np.exp(-t)[:, None]
        expo = self._sign * inv_lam * sqdist
        return np.exp(expo), expo, diff, rbar, inv_lam

    # priors -----------------------------------------------------------

    def log_prior(self, theta):
        c = self.config
        W, t, s = self.unpack(theta)
        lw = -0.5 * W.size * (LOG_2PI + np.log(c.sigma_w2)) - 0.5 * np.sum(W**2) / c.sigma_w2
        lt = np.sum(np.log(c.rho) - c.rho * np.exp(t) + t)
        ls = np.sum(-np.logaddexp(0.0, -s) - np.logaddexp(0.0, s))
        return float(lw + lt + ls)

    def grad_log_prior(self, theta):
        c = self.config
        W, t, s = self.unpack(theta)
        return self.pack(-W / c.sigma_w2, 1.0 - c.rho * np.exp(t), 1.0 - 2.0 * expit(s))

    def hess_diag_log_prior(self, theta):
        c = self.config
        W, t, s = self.unpack(theta)
        q = expit(s) * expit(-s)
        return self.pack(np.full(W.shape, -1.0 / c.sigma_w2), -c.rho * np.exp(t), -2.0 * q)

    # likelihood -------------------------------------------------------

    def _residual(self, theta):
        W, t, s = self.unpack(theta)
        G, expo, diff, rbar, inv_lam = self.basis(t, s)
        A = self._X @ W  # (n, L)
        E = self._U - A @ G
        return W, t, s, G, expo, diff, rbar, inv_lam, A, E

    def log_likelihood(self, theta):
        tau = self.config.tau
        E = self._residual(theta)[-1]
        return float(0.5 * E.size * (np.log(tau) - LOG_2PI) - 0.5 * tau * np.sum(E**2))

    def grad_log_likelihood(self, theta):
        tau, sgn = self.config.tau, self._sign
        W, t, s, G, expo, diff, rbar, inv_lam, A, E = self._residual(theta)
        gW = tau * (self._X.T @ (E @ G.T))
        Gam = tau * (A.T @ E)  # d loglik / d G, (L, V)
        gt = np.sum(Gam * G * (-expo), axis=1)
        # d g_lv / d rbar_ld = g_lv * k_lvd
        k = sgn * inv_lam[:, :, None] * (-2.0) * diff
        q = rbar * (1.0 - rbar)
        gs = np.einsum("lv,lv,lvd->ld", Gam, G, k) * q
        return self.pack(gW, gt, gs)

    def hess_diag_log_likelihood(self, theta):
        tau, sgn = self.config.tau, self._sign
        W, t, s, G, expo, diff, rbar, inv_lam, A, E = self._residual(theta)
        hW = -tau * np.outer(self._x2, np.sum(G**2, axis=1))
        Gam = tau * (A.T @ E)
        a = np.sum(A**2, axis=0)[:, None]  # (L, 1)
        h = -expo
        # G underflows to 0 where h is huge; those entries contribute nothing
        live = G > 0
        with np.errstate(over="ignore", invalid="ignore"):
            dg_t = np.where(live, G * h, 0.0)
            d2g_t = np.where(live, G * (h**2 - h), 0.0)
        ht = np.sum(-tau * a * dg_t**2 + Gam * d2g_t, axis=1)
        k = sgn * inv_lam[:, :, None] * (-2.0) * diff  # (L, V, D)
        q = (rbar * (1.0 - rbar))[:, None, :]  # (L, 1, D)
        dq = q * (1.0 - 2.0 * rbar[:, None, :])
        g3 = G[:, :, None]
        with np.errstate(over="ignore", invalid="ignore"):
            dg_s = np.where(live[:, :, None], g3 * k * q, 0.0)
            d2g_s = np.where(
                live[:, :, None],
                g3 * (k**2 + 2.0 * sgn * inv_lam[:, :, None]) * q**2 + g3 * k * dq,
                0.0,
            )
        hs = np.sum(-tau * a[:, :, None] * dg_s**2 + Gam[:, :, None] * d2g_s, axis=1)
        return self.pack(hW, ht, hs)

    def predict_mean(self, theta, X) -> np.ndarray:
        W, t, s = self.unpack(np.asarray(theta, dtype=float))
        G = self.basis(t, s)[0]
        return X @ W @ G

    def pointwise_log_likelihood(self, thetas, shard):
        tau = self.config.tau
        thetas = np.atleast_2d(thetas)
        out = np.empty((thetas.shape[0], shard.n))
        const = 0.5 * self.config.V * (np.log(tau) - LOG_2PI)
        for i, th in enumerate(thetas):
            E = shard.Y - self.predict_mean(th, shard.X)
            out[i] = const - 0.5 * tau * np.sum(E**2, axis=1)
        return out


def tlsa_model(config: TlsaModelConfig, shard: DataShard, prior_temper: float = 1.0) -> TlsaModel:
    return TlsaModel(config, shard, prior_temper)


def generate_tlsa(config: TlsaModelConfig, N: int, seed: int):
    rng = np.random.default_rng(seed)
    lam = rng.exponential(1.0 / config.rho, size=config.L)
    rbar = rng.random((config.L, config.D))
    W = np.sqrt(config.sigma_w2) * rng.standard_normal((config.C, config.L))
    X = rng.standard_normal((N, config.C))
    sqdist = np.sum((config.locations[None] - rbar[:, None]) ** 2, axis=-1)
    sign = 1.0 if config.positive_exponent else -1.0
    G = np.exp(sign * sqdist / lam[:, None])
    U = X @ W @ G + rng.standard_normal((N, config.V)) / np.sqrt(config.tau)
    truth = {"lambda": lam.tolist(), "rbar": rbar.tolist(), "W": W.tolist()}
    return DataShard(X, U), truth
