"""Isotropic Gaussian mixtures and the closed-form product of M of them.

Every subposterior approximation is a uniformly weighted mixture of K
isotropic Gaussians. The product of M such mixtures is again a Gaussian
mixture with K**M components, indexed by one component choice per factor.
All weights are carried as natural logs.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np
from scipy.special import logsumexp

FORMAT_VERSION = 1
DEFAULT_CAP = 10**6
LOG_2PI = np.log(2.0 * np.pi)


class ExponentialBlowupError(ValueError):
    """Raised when an exact product would exceed the component cap."""


@dataclass(frozen=True)
class GaussianComponent:
    mean: np.ndarray
    variance: float

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=float))
        if mean.ndim != 1 or not np.all(np.isfinite(mean)):
            raise ValueError("component mean must be a finite vector")
        var = float(self.variance)
        if not (np.isfinite(var) and var > 0):
            raise ValueError(f"component variance must be positive and finite, got {var}")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "variance", var)

    @property
    def dim(self) -> int:
        return self.mean.shape[0]


@dataclass(frozen=True)
class MixtureApprox:
    """Uniform mixture ``(1/K) sum_k N(theta | means[k], variances[k] I)``.

    ``meta`` carries provenance (shard id, machine count, prior temper) and
    is serialized alongside the parameters.
    """

    means: np.ndarray
    variances: np.ndarray
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        means = np.asarray(self.means, dtype=float)
        if means.ndim == 1:
            means = means[:, None]
        variances = np.atleast_1d(np.asarray(self.variances, dtype=float))
        if means.ndim != 2 or means.shape[0] < 1:
            raise ValueError("means must have shape (K, d) with K >= 1")
        if variances.shape != (means.shape[0],):
            raise ValueError(
                f"expected {means.shape[0]} variances, got shape {variances.shape}"
            )
        if not np.all(np.isfinite(means)):
            raise ValueError("means must be finite")
        if not np.all(np.isfinite(variances) & (variances > 0)):
            raise ValueError("variances must be positive and finite")
        means.setflags(write=False)
        variances.setflags(write=False)
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "variances", variances)

    @classmethod
    def from_components(cls, components: Sequence[GaussianComponent], **meta) -> MixtureApprox:
        dims = {c.dim for c in components}
        if len(dims) != 1:
            raise ValueError(f"components disagree on dimension: {sorted(dims)}")
        return cls(
            np.stack([c.mean for c in components]),
            np.array([c.variance for c in components]),
            meta=dict(meta),
        )

    @property
    def K(self) -> int:
        return self.means.shape[0]

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    @property
    def components(self) -> list[GaussianComponent]:
        return [GaussianComponent(m, v) for m, v in zip(self.means, self.variances)]

    @property
    def payload_size(self) -> int:
        """Scalars communicated for this mixture: K means, K variances, K weights."""
        return self.K * (self.dim + 2)

    def log_density(self, theta) -> np.ndarray | float:
        return mixture_log_density(self, theta)

    def to_dict(self) -> dict:
        return {
            "version": FORMAT_VERSION,
            "dim": self.dim,
            "K": self.K,
            "means": self.means.tolist(),
            "variances": self.variances.tolist(),
            "weights": [1.0 / self.K] * self.K,
            "meta": dict(self.meta),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> MixtureApprox:
        if doc.get("version") != FORMAT_VERSION:
            raise ValueError(f"unsupported mixture format version {doc.get('version')!r}")
        means = np.asarray(doc["means"], dtype=float).reshape(doc["K"], doc["dim"])
        weights = np.asarray(doc.get("weights", [1.0 / doc["K"]] * doc["K"]))
        if not np.allclose(weights, 1.0 / doc["K"], rtol=0, atol=1e-12):
            raise ValueError("only uniformly weighted mixtures are supported")
        return cls(means, np.asarray(doc["variances"], dtype=float), meta=doc.get("meta", {}))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1) + "\n")

    @classmethod
    def load(cls, path) -> MixtureApprox:
        return cls.from_dict(json.loads(Path(path).read_text()))


def gaussian_log_pdf(x, mean, variance) -> np.ndarray:
    """Log of ``N(x | mean, variance I)``; broadcasts over leading axes."""
    x = np.asarray(x, dtype=float)
    d = x.shape[-1]
    sq = np.sum((x - mean) ** 2, axis=-1)
    return -0.5 * d * (LOG_2PI + np.log(variance)) - 0.5 * sq / variance


def mixture_log_density(q: MixtureApprox, theta) -> np.ndarray | float:
    """Log density of a uniform isotropic mixture.

    ``theta`` may be a single point of shape ``(d,)`` or a batch ``(n, d)``.
    """
    theta = np.asarray(theta, dtype=float)
    single = theta.ndim == 1
    pts = np.atleast_2d(theta)
    if pts.shape[-1] != q.dim:
        raise ValueError(f"theta has dimension {pts.shape[-1]}, mixture has {q.dim}")
    # (n, K)
    comp = gaussian_log_pdf(pts[:, None, :], q.means[None], q.variances[None])
    out = logsumexp(comp, axis=1) - np.log(q.K)
    return float(out[0]) if single else out


@dataclass(frozen=True)
class ProductComponent:
    """One component of the product mixture, with unnormalized log-weight."""

    index: tuple[int, ...]
    log_weight: float
    mean: np.ndarray
    variance: float

    @property
    def dim(self) -> int:
        return self.mean.shape[0]


def _check_compatible(mixtures: Sequence[MixtureApprox]) -> int:
    if len(mixtures) == 0:
        raise ValueError("need at least one mixture")
    dims = {q.dim for q in mixtures}
    if len(dims) != 1:
        raise ValueError(f"mixtures disagree on dimension: {sorted(dims)}")
    return dims.pop()


def product_component(mixtures: Sequence[MixtureApprox], index: Sequence[int]) -> ProductComponent:
    """Mean, variance and log-weight of the product component picked by ``index``.

    ``index[m]`` is a zero-based component index into ``mixtures[m]``.
    """
    d = _check_compatible(mixtures)
    index = tuple(int(k) for k in index)
    if len(index) != len(mixtures):
        raise ValueError(f"index has length {len(index)}, expected {len(mixtures)}")
    for m, (q, k) in enumerate(zip(mixtures, index)):
        if not 0 <= k < q.K:
            raise IndexError(f"component {k} out of range for mixture {m} with K={q.K}")
    mus = np.stack([q.means[k] for q, k in zip(mixtures, index)])
    vs = np.array([q.variances[k] for q, k in zip(mixtures, index)])
    prec = 1.0 / vs
    var = 1.0 / prec.sum()
    mean = var * (prec @ mus)
    log_w = float(
        np.sum(gaussian_log_pdf(mus, mean, vs)) + 0.5 * d * (LOG_2PI + np.log(var))
    )
    return ProductComponent(index, log_w, mean, float(var))


@dataclass(frozen=True)
class ProductMixture:
    """All K**M product components as stacked arrays.

    Indexing or iterating yields :class:`ProductComponent` objects.
    """

    indices: np.ndarray  # (C, M) int
    log_weights: np.ndarray  # (C,)
    means: np.ndarray  # (C, d)
    variances: np.ndarray  # (C,)

    def __len__(self) -> int:
        return self.log_weights.shape[0]

    def __getitem__(self, i) -> ProductComponent:
        return ProductComponent(
            tuple(int(k) for k in self.indices[i]),
            float(self.log_weights[i]),
            self.means[i],
            float(self.variances[i]),
        )

    def __iter__(self) -> Iterator[ProductComponent]:
        return (self[i] for i in range(len(self)))

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    def normalized_log_weights(self) -> np.ndarray:
        return self.log_weights - logsumexp(self.log_weights)

    def weights(self) -> np.ndarray:
        return np.exp(self.normalized_log_weights())

    def log_density(self, theta) -> np.ndarray | float:
        """Log of the normalized product mixture density."""
        theta = np.asarray(theta, dtype=float)
        single = theta.ndim == 1
        pts = np.atleast_2d(theta)
        comp = gaussian_log_pdf(pts[:, None, :], self.means[None], self.variances[None])
        out = logsumexp(comp + self.normalized_log_weights()[None], axis=1)
        return float(out[0]) if single else out


def enumerate_product(
    mixtures: Sequence[MixtureApprox], cap: int = DEFAULT_CAP, chunk: int = 65536
) -> ProductMixture:
    """Enumerate every component of the product of ``mixtures``.

    Costs O(d M K**M). Refuses with :class:`ExponentialBlowupError` when the
    component count exceeds ``cap``.
    """
    d = _check_compatible(mixtures)
    Ks = [q.K for q in mixtures]
    total = int(np.prod(Ks, dtype=object))
    if total > cap:
        K = max(Ks)
        raise ExponentialBlowupError(
            f"exponential blowup: exact product of M={len(mixtures)} mixtures with K={K} "
            f"has {total} components, above cap={cap}"
        )
    M = len(mixtures)
    indices = np.empty((total, M), dtype=np.int64)
    for m, k in enumerate(np.unravel_index(np.arange(total), Ks)):
        indices[:, m] = k
    log_w = np.empty(total)
    means = np.empty((total, d))
    variances = np.empty(total)
    for lo in range(0, total, chunk):
        idx = indices[lo : lo + chunk]
        prec_sum = np.zeros(len(idx))
        wsum = np.zeros((len(idx), d))
        for m, q in enumerate(mixtures):
            p = 1.0 / q.variances[idx[:, m]]
            prec_sum += p
            wsum += p[:, None] * q.means[idx[:, m]]
        var = 1.0 / prec_sum
        mu = var[:, None] * wsum
        lw = 0.5 * d * (LOG_2PI + np.log(var))
        for m, q in enumerate(mixtures):
            lw += gaussian_log_pdf(q.means[idx[:, m]], mu, q.variances[idx[:, m]])
        log_w[lo : lo + chunk] = lw
        means[lo : lo + chunk] = mu
        variances[lo : lo + chunk] = var
    return ProductMixture(indices, log_w, means, variances)


def iter_indices(mixtures: Sequence[MixtureApprox]) -> Iterator[tuple[int, ...]]:
    return itertools.product(*(range(q.K) for q in mixtures))


def sample_theta(component: ProductComponent | GaussianComponent, rng: np.random.Generator) -> np.ndarray:
    """Draw one point from ``N(mean, variance I)``."""
    return component.mean + np.sqrt(component.variance) * rng.standard_normal(component.mean.shape[0])
