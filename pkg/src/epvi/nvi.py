"""Nonparametric variational inference: fit a uniform isotropic mixture.

The objective is a second-order surrogate for the evidence lower bound::

    L = (1/K) sum_k [log f(mu_k) + sigma_k^2 / 2 * tr H(mu_k)] + H_lb

    H_lb = -(1/K) sum_k log[(1/K) sum_j N(mu_k | mu_j, (sigma_k^2 + sigma_j^2) I)]

where ``f`` is the (tempered) joint density and ``H_lb`` is a lower bound on
the mixture entropy. Only the gradient and Hessian diagonal of ``log f`` are
needed. The mean-gradient drops the third-derivative term coming from
``tr H(mu_k)``.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .mixture import LOG_2PI, MixtureApprox
from .models.base import ModelSpec


class FitError(RuntimeError):
    pass


class InitializationError(FitError):
    pass


@dataclass
class VariationalParams:
    means: np.ndarray  # (K, d)
    log_sigma2: np.ndarray  # (K,)

    def __post_init__(self):
        self.means = np.atleast_2d(np.asarray(self.means, dtype=float))
        self.log_sigma2 = np.atleast_1d(np.asarray(self.log_sigma2, dtype=float))
        if self.log_sigma2.shape != (self.means.shape[0],):
            raise ValueError("need one log-variance per component")

    @property
    def K(self) -> int:
        return self.means.shape[0]

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    @property
    def sigma2(self) -> np.ndarray:
        return np.exp(self.log_sigma2)

    def flat(self) -> np.ndarray:
        return np.concatenate([self.means.ravel(), self.log_sigma2])

    @classmethod
    def from_flat(cls, x: np.ndarray, K: int, d: int) -> VariationalParams:
        return cls(x[: K * d].reshape(K, d).copy(), x[K * d :].copy())

    def to_mixture(self, **meta) -> MixtureApprox:
        return MixtureApprox(self.means.copy(), self.sigma2, meta=meta)


@dataclass(frozen=True)
class FitConfig:
    K: int = 4
    max_iters: int = 5000
    rel_tol: float = 1e-6
    patience: int = 5
    init_seed: int = 0
    init_scale: float = 2.0
    max_halvings: int = 30
    max_step: float = 1.0
    n_init: int = 1
    keep_trace: bool = False

    def __post_init__(self):
        if self.K < 1:
            raise ValueError("K must be at least 1")
        if self.rel_tol <= 0:
            raise ValueError("rel_tol must be positive")
        if self.max_iters < 1 or self.n_init < 1:
            raise ValueError("max_iters and n_init must be positive")


@dataclass
class FitReport:
    objective: float
    iterations: int
    converged: bool
    wall_time: float
    reason: str = ""
    trace: list[float] = field(default_factory=list)

    def to_dict(self) -> dict:
        out = {
            "objective": self.objective,
            "iterations": self.iterations,
            "converged": self.converged,
            "wall_time": self.wall_time,
            "reason": self.reason,
        }
        if self.trace:
            out["trace"] = list(self.trace)
        return out


def entropy_bound(means: np.ndarray, sigma2: np.ndarray) -> float:
    """Pairwise-convolution lower bound on the entropy of a uniform mixture."""
    return _entropy_terms(means, sigma2)[0]


def _entropy_terms(means, sigma2):
    K, d = means.shape
    diff = means[:, None, :] - means[None, :, :]
    sq = np.sum(diff**2, axis=-1)
    v = sigma2[:, None] + sigma2[None, :]
    logN = -0.5 * d * (LOG_2PI + np.log(v)) - 0.5 * sq / v
    row = logsumexp(logN, axis=1)
    value = -np.mean(row - np.log(K))
    return value, diff, sq, v, logN, row


def _model_terms(params: VariationalParams, model: ModelSpec, strict: bool, with_diag: bool = False):
    """log f and tr H at every component mean (and optionally the Hessian diagonals)."""
    K = params.K
    logf = np.empty(K)
    diag = np.empty((K, params.dim)) if with_diag else None
    trace = np.empty(K)
    for k, mu in enumerate(params.means):
        logf[k] = model.log_joint(mu)
        if with_diag:
            diag[k] = model.hessian_diag(mu)
            trace[k] = diag[k].sum()
        else:
            trace[k] = model.hessian_trace(mu)
        if not (np.isfinite(logf[k]) and np.isfinite(trace[k])):
            if strict:
                raise FitError(f"non-finite model evaluation at component {k}")
            return None
    return logf, trace, diag


def surrogate_elbo(params: VariationalParams, model: ModelSpec, frozen_trace=None) -> float:
    """Surrogate ELBO of ``params`` under ``model``.

    ``frozen_trace`` substitutes fixed Hessian traces for the ones at the
    current means; this is the functional whose mean-gradient the fitter uses.
    """
    if params.dim != model.dim:
        raise ValueError(f"params have dimension {params.dim}, model has {model.dim}")
    logf, trace, _ = _model_terms(params, model, strict=True)
    if frozen_trace is not None:
        trace = np.asarray(frozen_trace, dtype=float)
    return _combine(params, logf, trace)


def _combine(params, logf, trace):
    s2 = params.sigma2
    return float(np.mean(logf + 0.5 * s2 * trace) + _entropy_terms(params.means, s2)[0])


def surrogate_elbo_grad(params: VariationalParams, model: ModelSpec) -> VariationalParams:
    """Gradient with respect to ``(means, log_sigma2)``, returned in the same container."""
    if params.dim != model.dim:
        raise ValueError(f"params have dimension {params.dim}, model has {model.dim}")
    _, trace, _ = _model_terms(params, model, strict=True)
    grads = np.stack([model.grad(mu) for mu in params.means])
    if not np.all(np.isfinite(grads)):
        k = int(np.argwhere(~np.all(np.isfinite(grads), axis=1))[0, 0])
        raise FitError(f"non-finite model gradient at component {k}")
    return _gradient(params, grads, trace)


def _gradient(params, grads, trace) -> VariationalParams:
    K, d = params.means.shape
    s2 = params.sigma2
    _, diff, sq, v, logN, row = _entropy_terms(params.means, s2)
    P = np.exp(logN - row[:, None])  # row-normalized responsibilities
    S = P + P.T
    dlogN_dv = -0.5 * d / v + 0.5 * sq / v**2
    g_mu = grads / K + np.einsum("kj,kjd->kd", S / v, diff) / K
    g_s2 = 0.5 * trace / K - np.sum(S * dlogN_dv, axis=1) / K
    return VariationalParams(g_mu, g_s2 * s2)


def _preconditioner(params, diag, trace):
    """Positive per-coordinate scales approximating inverse curvature."""
    K, d = params.means.shape
    absd = np.abs(diag)
    floor = np.maximum(1e-3 * absd.max(axis=1, keepdims=True), 1e-8)
    p_mu = K / np.maximum(absd, floor)
    c_s = 0.5 * params.sigma2 * np.abs(trace) / K
    p_s = 1.0 / np.maximum(c_s, 1e-3 * d / (2 * K))
    return VariationalParams(p_mu, p_s)


def initial_params(K: int, d: int, rng: np.random.Generator, scale: float = 2.0) -> VariationalParams:
    """Means from N(0, scale^2 I), each component independently; unit variances."""
    return VariationalParams(scale * rng.standard_normal((K, d)), np.zeros(K))


def fit(model: ModelSpec, config: FitConfig = FitConfig(), rng: np.random.Generator | None = None):
    """Maximize the surrogate ELBO by preconditioned gradient ascent with backtracking.

    Returns ``(MixtureApprox, FitReport)``. With ``config.n_init > 1`` the
    best of several random restarts is kept. Deterministic given the rng
    (defaults to ``config.init_seed``).
    """
    if rng is None:
        rng = np.random.default_rng(config.init_seed)
    start = time.perf_counter()
    best = None
    for _ in range(config.n_init):
        params, report = _fit_once(model, config, rng)
        if best is None or report.objective > best[1].objective:
            best = (params, report)
    params, report = best
    report.wall_time = time.perf_counter() - start
    meta = {"prior_temper": model.prior_temper, "shard_id": int(model.shard.shard_id)}
    return params.to_mixture(**meta), report


def _fit_once(model, config, rng):
    d, K = model.dim, config.K
    for attempt in range(20):
        params = initial_params(K, d, rng, config.init_scale)
        with np.errstate(over="ignore", invalid="ignore"):
            terms = _model_terms(params, model, strict=False, with_diag=True)
        if terms is not None:
            value = _combine(params, terms[0], terms[1])
            if np.isfinite(value):
                break
    else:
        raise InitializationError("non-finite surrogate objective after 20 initializations")

    trace_log = [value] if config.keep_trace else []
    step = config.max_step
    quiet = 0
    converged, reason = False, "max_iters"
    it = 0
    while it < config.max_iters:
        it += 1
        logf, trace, diag = terms
        grads = np.stack([model.grad(mu) for mu in params.means])
        g = _gradient(params, grads, trace)
        pre = _preconditioner(params, diag, trace)
        direction = pre.flat() * g.flat()
        x0 = params.flat()
        accepted = False
        for _ in range(config.max_halvings + 1):
            trial = VariationalParams.from_flat(x0 + step * direction, K, d)
            # an overflowing trial point is simply rejected
            with np.errstate(over="ignore", invalid="ignore"):
                t_terms = _model_terms(trial, model, strict=False, with_diag=True)
            if t_terms is not None:
                t_value = _combine(trial, t_terms[0], t_terms[1])
                if np.isfinite(t_value) and t_value > value:
                    accepted = True
                    break
            step *= 0.5
        if not accepted:
            converged, reason = True, "no ascent along search direction"
            break
        change = abs(t_value - value) / max(abs(value), 1e-300)
        params, terms, value = trial, t_terms, t_value
        if config.keep_trace:
            trace_log.append(value)
        step = min(2.0 * step, config.max_step)
        quiet = quiet + 1 if change < config.rel_tol else 0
        if quiet >= config.patience:
            converged, reason = True, "relative change below tolerance"
            break
    report = FitReport(float(value), it, converged, 0.0, reason, trace_log)
    return params, report
