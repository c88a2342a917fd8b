"""Combining subposterior mixtures into draws from their product.

Three routes are provided:

* exact enumeration of all K**M product components (``mixture.enumerate_product``),
* a Metropolis-within-Gibbs chain over component index vectors
  (:func:`sample_components`), whose stationary distribution is the
  categorical over product components with probabilities proportional to
  their weights,
* sequential pairwise products (:func:`pairwise_reduce`), sampling R
  components from each pair product and recursing on the resulting uniform
  mixtures.
"""

from __future__ import annotations

import json
import math
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numba
import numpy as np

from .mixture import LOG_2PI, MixtureApprox, ProductMixture, product_component


class ChainValidityError(AssertionError):
    pass


@dataclass(frozen=True)
class SamplerConfig:
    R: int = 500
    burn_in: int = 1000
    seed: int = 0
    debug: bool = False
    parallel: bool = False

    def __post_init__(self):
        if self.R < 1:
            raise ValueError("R must be at least 1")
        if self.burn_in < 0:
            raise ValueError("burn_in must be non-negative")


@dataclass
class ChainState:
    index: np.ndarray
    log_weight: float


@dataclass
class ComponentSampleSet:
    """R sampled product components, each an isotropic Gaussian."""

    means: np.ndarray  # (R, d)
    variances: np.ndarray  # (R,)
    indices: np.ndarray | None = None  # (R, M)
    log_weights: np.ndarray | None = None  # (R,)
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        self.means = np.atleast_2d(np.asarray(self.means, dtype=float))
        self.variances = np.atleast_1d(np.asarray(self.variances, dtype=float))
        if self.variances.shape != (self.means.shape[0],):
            raise ValueError("need one variance per sampled component")
        if np.any(self.variances <= 0):
            raise ValueError("sampled variances must be positive")

    def __len__(self) -> int:
        return self.means.shape[0]

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    def to_mixture(self, **meta) -> MixtureApprox:
        return MixtureApprox(self.means, self.variances, meta=meta)

    def save(self, path) -> None:
        cols = ["variance"] + [f"mean_{i}" for i in range(self.dim)]
        blocks = [self.variances[:, None], self.means]
        if self.log_weights is not None:
            cols.insert(0, "log_weight")
            blocks.insert(0, self.log_weights[:, None])
        if self.indices is not None:
            cols = [f"k_{m}" for m in range(self.indices.shape[1])] + cols
            blocks.insert(0, self.indices.astype(float))
        header = json.dumps({"provenance": self.provenance, "columns": cols})
        np.savetxt(path, np.hstack(blocks), header=header, fmt="%.17g")

    @classmethod
    def load(cls, path) -> ComponentSampleSet:
        path = Path(path)
        with path.open() as fh:
            header = json.loads(fh.readline().lstrip("#").strip())
        table = np.loadtxt(path, ndmin=2)
        cols = header["columns"]
        kcols = [i for i, c in enumerate(cols) if c.startswith("k_")]
        mcols = [i for i, c in enumerate(cols) if c.startswith("mean_")]
        lw = table[:, cols.index("log_weight")] if "log_weight" in cols else None
        return cls(
            table[:, mcols],
            table[:, cols.index("variance")],
            table[:, kcols].astype(np.int64) if kcols else None,
            lw,
            header.get("provenance", {}),
        )


def _pad(mixtures: Sequence[MixtureApprox]):
    dims = {q.dim for q in mixtures}
    if len(mixtures) == 0 or len(dims) != 1:
        raise ValueError("need at least one mixture, all of the same dimension")
    d = dims.pop()
    Ks = np.array([q.K for q in mixtures], dtype=np.int64)
    means = np.zeros((len(mixtures), Ks.max(), d))
    variances = np.ones((len(mixtures), Ks.max()))
    for m, q in enumerate(mixtures):
        means[m, : q.K] = q.means
        variances[m, : q.K] = q.variances
    return means, variances, Ks


@numba.njit(cache=True, nogil=True)
def _component(means, variances, idx, out_mean):
    """Product component for ``idx``: writes its mean, returns (log_weight, variance)."""
    M, _, d = means.shape
    prec = 0.0
    for j in range(d):
        out_mean[j] = 0.0
    for m in range(M):
        p = 1.0 / variances[m, idx[m]]
        prec += p
        for j in range(d):
            out_mean[j] += p * means[m, idx[m], j]
    var = 1.0 / prec
    for j in range(d):
        out_mean[j] *= var
    lw = 0.5 * d * (LOG_2PI + math.log(var))
    for m in range(M):
        v = variances[m, idx[m]]
        sq = 0.0
        for j in range(d):
            diff = means[m, idx[m], j] - out_mean[j]
            sq += diff * diff
        lw += -0.5 * d * (LOG_2PI + math.log(v)) - 0.5 * sq / v
    return lw, var


@numba.njit(cache=True, nogil=True)
def _run_chain(means, variances, Ks, init, m_draw, c_unif, log_u, burn_in, offset,
               out_idx, out_mean, out_var, out_lw):
    M, _, d = means.shape
    k = init.copy()
    c = init.copy()
    mu_k = np.empty(d)
    mu_c = np.empty(d)
    lw_k, var_k = _component(means, variances, k, mu_k)
    lw_k += offset
    for s in range(m_draw.shape[0]):
        m = m_draw[s]
        for i in range(M):
            c[i] = k[i]
        c[m] = int(c_unif[s] * Ks[m])
        lw_c, var_c = _component(means, variances, c, mu_c)
        lw_c += offset
        if log_u[s] < lw_c - lw_k:
            for i in range(M):
                k[i] = c[i]
            for j in range(d):
                mu_k[j] = mu_c[j]
            var_k = var_c
            lw_k = lw_c
        if s >= burn_in:
            r = s - burn_in
            for i in range(M):
                out_idx[r, i] = k[i]
            for j in range(d):
                out_mean[r, j] = mu_k[j]
            out_var[r] = var_k
            out_lw[r] = lw_k - offset
    return lw_k - offset


def _chain(mixtures, R, burn_in, rng, offset=0.0):
    means, variances, Ks = _pad(mixtures)
    M, _, d = means.shape
    n = burn_in + R
    init = np.floor(rng.random(M) * Ks).astype(np.int64)
    m_draw = rng.integers(0, M, size=n)
    c_unif = rng.random(n)
    log_u = np.log1p(-rng.random(n))
    out_idx = np.empty((R, M), dtype=np.int64)
    out_mean = np.empty((R, d))
    out_var = np.empty(R)
    out_lw = np.empty(R)
    _run_chain(means, variances, Ks, init, m_draw, c_unif, log_u, burn_in, float(offset),
               out_idx, out_mean, out_var, out_lw)
    return out_idx, out_mean, out_var, out_lw


def warm_up() -> None:
    """Compile the chain kernel so later timings exclude JIT cost."""
    q = MixtureApprox(np.zeros((1, 1)), np.ones(1))
    _chain([q, q], 1, 0, np.random.default_rng(0))


def sample_components(mixtures: Sequence[MixtureApprox], config: SamplerConfig = SamplerConfig(),
                      rng: np.random.Generator | None = None) -> ComponentSampleSet:
    """Sample R product components by Metropolis-within-Gibbs over index vectors.

    Each step picks a factor m uniformly, proposes a uniform new component for
    it, and accepts with probability ``min(1, w_new / w_old)``. After
    ``burn_in`` steps the current component is recorded every step.
    Indices in the result are zero-based.
    """
    if rng is None:
        rng = np.random.default_rng(config.seed)
    idx, means, variances, lw = _chain(mixtures, config.R, config.burn_in, rng)
    out = ComponentSampleSet(
        means, variances, idx, lw,
        provenance={
            "method": "sample",
            "seed": config.seed,
            "R": config.R,
            "burn_in": config.burn_in,
            "M": len(mixtures),
            "K": [q.K for q in mixtures],
        },
    )
    if config.debug:
        check_chain(mixtures, out)
    return out


def check_chain(mixtures, samples: ComponentSampleSet, every: int = 1000) -> None:
    """Recompute cached log-weights at every ``every``-th retained step."""
    for r in range(0, len(samples), every):
        fresh = product_component(mixtures, samples.indices[r]).log_weight
        if not np.isclose(fresh, samples.log_weights[r], rtol=1e-9, atol=1e-9):
            raise ChainValidityError(
                f"cached log-weight {samples.log_weights[r]} != recomputed {fresh} at step {r}"
            )


def step_cost_probe(mixtures: Sequence[MixtureApprox], config: SamplerConfig = SamplerConfig(),
                    repeats: int = 3) -> dict:
    """Per-step cost of the chain: nominal operation count and measured seconds.

    Every step recomputes one candidate product component, touching d*M numbers.
    """
    warm_up()
    rng = np.random.default_rng(config.seed)
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        _chain(mixtures, config.R, config.burn_in, rng)
        times.append(time.perf_counter() - t0)
    steps = config.R + config.burn_in
    d, M = mixtures[0].dim, len(mixtures)
    return {
        "ops_per_step": d * M,
        "steps": steps,
        "seconds": float(np.median(times)),
        "seconds_per_step": float(np.median(times)) / steps,
    }


def pairing_schedule(M: int) -> list[list[tuple[int, int]]]:
    """Pairs formed in each round when M mixtures are reduced pairwise."""
    if M < 2:
        raise ValueError("pairwise reduction needs at least two mixtures")
    rounds = []
    count = M
    while count > 1:
        rounds.append([(2 * i, 2 * i + 1) for i in range(count // 2)])
        count = count // 2 + count % 2
    return rounds


def pairwise_reduce(mixtures: Sequence[MixtureApprox], R: int | None = None,
                    config: SamplerConfig = SamplerConfig()) -> ComponentSampleSet:
    """Reduce M mixtures by sampling R components from each pair product per round.

    Mixtures are paired in order (0,1), (2,3), ...; an odd one out passes to
    the next round unchanged. Each pair product becomes a uniform mixture of
    its R sampled components. Runs ceil(log2 M) rounds.
    """
    R = config.R if R is None else R
    M = len(mixtures)
    schedule = pairing_schedule(M)
    if R < max(q.K for q in mixtures):
        warnings.warn(
            f"R={R} is below the component count K={max(q.K for q in mixtures)}; "
            "intermediate mixtures may under-represent components",
            stacklevel=2,
        )
    seeds = np.random.SeedSequence(config.seed).spawn(len(schedule))
    pair_cfg = SamplerConfig(R=R, burn_in=config.burn_in, seed=config.seed)
    current = list(mixtures)
    last = None
    for pairs, round_seed in zip(schedule, seeds):
        pair_seeds = round_seed.spawn(len(pairs))

        def run(job):
            (a, b), ss = job
            return sample_components([current[a], current[b]], pair_cfg, np.random.default_rng(ss))

        jobs = list(zip(pairs, pair_seeds))
        if config.parallel and len(jobs) > 1:
            with ThreadPoolExecutor() as pool:
                results = list(pool.map(run, jobs))
        else:
            results = [run(job) for job in jobs]
        nxt = [res.to_mixture() for res in results]
        if len(current) % 2:
            nxt.append(current[-1])
        current = nxt
        last = results[-1] if len(current) == 1 else None
    out = last
    out.indices = None
    out.log_weights = None
    out.provenance = {
        "method": "pairwise",
        "seed": config.seed,
        "R": R,
        "burn_in": config.burn_in,
        "M": M,
        "K": [q.K for q in mixtures],
        "rounds": len(schedule),
    }
    return out


def draw_posterior_samples(source, S: int, rng: np.random.Generator) -> np.ndarray:
    """Draw ``S`` parameter vectors from a combined posterior representation.

    ``source`` is a :class:`ComponentSampleSet` (components picked uniformly,
    since they already occur at their stationary frequency), a
    :class:`ProductMixture` (components picked by normalized weight), or a
    :class:`MixtureApprox` (uniform over its components).
    """
    if S == 0:
        return np.empty((0, source.dim))
    if isinstance(source, ProductMixture):
        comp = rng.choice(len(source), size=S, p=source.weights())
    elif isinstance(source, (ComponentSampleSet, MixtureApprox)):
        n = len(source) if isinstance(source, ComponentSampleSet) else source.K
        if n == 0:
            raise ValueError("cannot draw from an empty component set")
        comp = rng.integers(0, n, size=S)
    else:
        raise TypeError(f"unsupported posterior source {type(source).__name__}")
    sd = np.sqrt(source.variances[comp])
    return source.means[comp] + sd[:, None] * rng.standard_normal((S, source.dim))
