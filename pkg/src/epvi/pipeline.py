"""One-shot embarrassingly parallel pipeline.

partition -> independent subposterior fits (one worker per shard, no
communication) -> a single collection of the fitted parameter files ->
combination of the collected mixtures.

Machines are simulated by worker processes exchanging files in a run
directory::

    run_dir/manifest.json
    run_dir/shards/shard_###.txt     data block, read only by its own fit
    run_dir/params/shard_###.json    fitted mixture, written only by its own fit
    run_dir/ledger.json
"""

from __future__ import annotations

import dataclasses
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import io
from .combine import ComponentSampleSet, SamplerConfig, pairwise_reduce, sample_components, warm_up
from .mixture import DEFAULT_CAP, MixtureApprox, ProductMixture, enumerate_product
from .models import DataShard, build_model, make_config
from .nvi import FitConfig, fit

METHODS = ("exact", "sample", "pairwise")


class ConfigurationError(ValueError):
    pass


class PipelineError(RuntimeError):
    pass


class CollectionError(PipelineError):
    pass


@dataclass
class ShardManifest:
    M: int
    N: int
    seed: int
    ranges: list[tuple[int, int]]
    rows: list[np.ndarray] = field(repr=False)
    family: str = ""
    model_config: dict = field(default_factory=dict)
    fit_config: dict = field(default_factory=dict)
    data_files: list[str] = field(default_factory=list)
    param_files: list[str] = field(default_factory=list)

    @property
    def prior_temper(self) -> float:
        return 1.0 / self.M

    @property
    def sizes(self) -> list[int]:
        return [b - a for a, b in self.ranges]

    def to_dict(self) -> dict:
        return {
            "M": self.M,
            "N": self.N,
            "seed": self.seed,
            "prior_temper": self.prior_temper,
            "ranges": [list(r) for r in self.ranges],
            "rows": [r.tolist() for r in self.rows],
            "family": self.family,
            "model_config": self.model_config,
            "fit_config": self.fit_config,
            "data_files": self.data_files,
            "param_files": self.param_files,
        }

    @classmethod
    def from_dict(cls, doc) -> ShardManifest:
        return cls(
            doc["M"], doc["N"], doc["seed"], [tuple(r) for r in doc["ranges"]],
            [np.asarray(r, dtype=np.int64) for r in doc["rows"]],
            doc.get("family", ""), doc.get("model_config", {}), doc.get("fit_config", {}),
            doc.get("data_files", []), doc.get("param_files", []),
        )

    def save(self, path) -> None:
        io.write_json(path, self.to_dict())

    @classmethod
    def load(cls, path) -> ShardManifest:
        return cls.from_dict(io.read_json(path))


@dataclass
class RunLedger:
    fit_reports: dict = field(default_factory=dict)
    fit_times: dict = field(default_factory=dict)
    scalars_communicated: int = 0
    bytes_communicated: int = 0
    transfer_time: float = 0.0
    combine_time: float = 0.0
    method: str | None = None
    access_log: dict = field(default_factory=dict)

    @property
    def max_fit_time(self) -> float:
        return max(self.fit_times.values(), default=0.0)

    @property
    def parallel_time(self) -> float:
        """Cost of the parallel route: slowest fit + transfer + combine."""
        return self.max_fit_time + self.transfer_time + self.combine_time

    def to_dict(self) -> dict:
        return {
            "fit_reports": self.fit_reports,
            "fit_times": self.fit_times,
            "max_fit_time": self.max_fit_time,
            "scalars_communicated": self.scalars_communicated,
            "bytes_communicated": self.bytes_communicated,
            "transfer_time": self.transfer_time,
            "combine_time": self.combine_time,
            "parallel_time": self.parallel_time,
            "method": self.method,
            "access_log": self.access_log,
        }

    @classmethod
    def from_dict(cls, doc) -> RunLedger:
        return cls(
            doc.get("fit_reports", {}), doc.get("fit_times", {}),
            doc.get("scalars_communicated", 0), doc.get("bytes_communicated", 0),
            doc.get("transfer_time", 0.0), doc.get("combine_time", 0.0),
            doc.get("method"), doc.get("access_log", {}),
        )

    def save(self, path) -> None:
        io.write_json(path, self.to_dict())

    @classmethod
    def load(cls, path) -> RunLedger:
        return cls.from_dict(io.read_json(path))


def partition(data: DataShard | int, M: int, seed: int = 0) -> ShardManifest:
    """Random permutation cut into M contiguous blocks.

    When M does not divide N the first ``N % M`` shards get one extra row.
    """
    N = data if isinstance(data, int) else data.n
    if M < 1 or M > N:
        raise ConfigurationError(f"need 1 <= M <= N, got M={M}, N={N}")
    perm = np.random.default_rng(seed).permutation(N)
    base, extra = divmod(N, M)
    ranges, rows, start = [], [], 0
    for m in range(M):
        stop = start + base + (1 if m < extra else 0)
        ranges.append((start, stop))
        rows.append(np.sort(perm[start:stop]))
        start = stop
    return ShardManifest(M, N, seed, ranges, rows)


_OPENED: list | None = None
_HOOKED = False


def _audit(event, args):
    if event == "open" and _OPENED is not None and isinstance(args[0], (str, os.PathLike)):
        mode = args[1] if isinstance(args[1], str) else "r"
        _OPENED.append((os.path.abspath(args[0]), mode))


def _record_opens():
    global _HOOKED, _OPENED
    if not _HOOKED:
        sys.addaudithook(_audit)
        _HOOKED = True
    _OPENED = []
    return _OPENED


def _fit_worker(job) -> dict:
    """Fit one shard. Sees only its own data file and writes only its own params file.

    Every file the fit opens inside the run directory is recorded through an
    audit hook and returned as the access log.
    """
    global _OPENED
    shard_id, data_path, param_path, family, model_config, fit_config, M, run_dir = job
    opened = _record_opens()
    try:
        shard, _ = io.load_dataset(data_path)
        config = make_config(family, **model_config)
        model = build_model(family, config, shard, prior_temper=1.0 / M)
        q, report = fit(model, FitConfig(**fit_config))
        meta = {"shard_id": shard_id, "M": M, "prior_temper": 1.0 / M}
        MixtureApprox(q.means, q.variances, meta=meta).save(param_path)
        result = {"shard_id": shard_id, "report": report.to_dict()}
    except Exception as exc:  # reported back to the orchestrator by shard id
        result = {"shard_id": shard_id, "error": f"{type(exc).__name__}: {exc}"}
    finally:
        _OPENED = None
    root = os.path.abspath(run_dir)
    inside = [(p, mode) for p, mode in opened if p.startswith(root + os.sep)]
    result["access"] = {
        "read": sorted({p for p, mode in inside if not set(mode) & set("wax+")}),
        "write": sorted({p for p, mode in inside if set(mode) & set("wax+")}),
    }
    return result


def run_parallel_fits(manifest: ShardManifest, data: DataShard, family: str, model_config,
                      fit_config: FitConfig, run_dir, workers: int | None = None) -> RunLedger:
    """Write shard files, fit every shard independently, and record per-shard timings.

    All shards share ``fit_config.init_seed``, so their optimizers start from
    the same point without exchanging anything. The ledger's parallel cost
    uses the slowest shard's fit time.
    """
    run_dir = Path(run_dir)
    (run_dir / "shards").mkdir(parents=True, exist_ok=True)
    (run_dir / "params").mkdir(parents=True, exist_ok=True)
    manifest.family = family
    manifest.model_config = dataclasses.asdict(model_config)
    manifest.fit_config = dataclasses.asdict(fit_config)
    manifest.data_files, manifest.param_files = [], []
    jobs = []
    for m, rows in enumerate(manifest.rows):
        dpath = os.path.abspath(run_dir / "shards" / f"shard_{m:03d}.txt")
        ppath = os.path.abspath(run_dir / "params" / f"shard_{m:03d}.json")
        io.save_dataset(dpath, data.take(rows, shard_id=m), family)
        manifest.data_files.append(dpath)
        manifest.param_files.append(ppath)
        jobs.append((m, dpath, ppath, family, manifest.model_config, manifest.fit_config, manifest.M,
                     str(run_dir)))
    manifest.save(run_dir / "manifest.json")

    workers = workers or min(manifest.M, os.cpu_count() or 1)
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_fit_worker, jobs))
    else:
        results = [_fit_worker(job) for job in jobs]

    failed = [r["shard_id"] for r in results if "error" in r]
    if failed:
        msgs = "; ".join(f"shard {r['shard_id']}: {r['error']}" for r in results if "error" in r)
        raise PipelineError(f"fits failed for shards {failed}: {msgs}")
    ledger = RunLedger()
    for r in results:
        key = str(r["shard_id"])
        ledger.fit_reports[key] = r["report"]
        ledger.fit_times[key] = r["report"]["wall_time"]
        ledger.access_log[key] = r["access"]
    ledger.save(run_dir / "ledger.json")
    return ledger


def collect(manifest: ShardManifest) -> tuple[list[MixtureApprox], int, int]:
    """Load every shard's fitted mixture. Returns (mixtures, scalar count, byte count)."""
    mixtures, scalars, nbytes = [], 0, 0
    for m, path in enumerate(manifest.param_files):
        try:
            q = MixtureApprox.load(path)
            nbytes += Path(path).stat().st_size
        except FileNotFoundError:
            raise CollectionError(f"missing parameter file for shard {m}: {path}") from None
        except (ValueError, KeyError, TypeError) as exc:
            raise CollectionError(f"corrupt parameter file for shard {m}: {path} ({exc})") from None
        mixtures.append(q)
        scalars += q.payload_size
    return mixtures, scalars, nbytes


def combine_mixtures(mixtures: Sequence[MixtureApprox], method: str,
                     sampler: SamplerConfig = SamplerConfig(), cap: int = DEFAULT_CAP):
    if method == "exact":
        return enumerate_product(mixtures, cap=cap)
    if method == "sample":
        return sample_components(mixtures, sampler)
    if method == "pairwise":
        if len(mixtures) == 1:
            return sample_components(mixtures, sampler)
        return pairwise_reduce(mixtures, sampler.R, sampler)
    raise ConfigurationError(f"unknown combination method {method!r}; choose from {METHODS}")


def collect_and_combine(manifest: ShardManifest, method: str, sampler: SamplerConfig = SamplerConfig(),
                        cap: int = DEFAULT_CAP, run_dir=None, ledger: RunLedger | None = None):
    """The single communication point: gather all parameter files, then combine.

    Returns ``(ProductMixture | ComponentSampleSet, RunLedger)``.
    """
    if method not in METHODS:
        raise ConfigurationError(f"unknown combination method {method!r}; choose from {METHODS}")
    if ledger is None:
        path = Path(run_dir) / "ledger.json" if run_dir is not None else None
        ledger = RunLedger.load(path) if path is not None and path.exists() else RunLedger()
    warm_up()
    t0 = time.perf_counter()
    mixtures, scalars, nbytes = collect(manifest)
    ledger.transfer_time = time.perf_counter() - t0
    ledger.scalars_communicated = scalars
    ledger.bytes_communicated = nbytes
    t0 = time.perf_counter()
    result = combine_mixtures(mixtures, method, sampler, cap)
    ledger.combine_time = time.perf_counter() - t0
    ledger.method = method
    if run_dir is not None:
        ledger.save(Path(run_dir) / "ledger.json")
    return result, ledger


def save_combined(result, path) -> None:
    """Write a combined posterior as a columnar table with a provenance header."""
    if isinstance(result, ProductMixture):
        out = ComponentSampleSet(result.means, result.variances, result.indices,
                                 result.normalized_log_weights(), {"method": "exact"})
        out.save(path)
    else:
        result.save(path)


def load_combined(path):
    sampled = ComponentSampleSet.load(path)
    if sampled.provenance.get("method") == "exact":
        return ProductMixture(sampled.indices, sampled.log_weights, sampled.means, sampled.variances)
    return sampled


def run_pipeline(data: DataShard, family: str, model_config, M: int, fit_config: FitConfig,
                 run_dir, method: str = "sample", sampler: SamplerConfig = SamplerConfig(),
                 seed: int = 0, cap: int = DEFAULT_CAP, workers: int | None = None):
    """partition -> fits -> collect -> combine. Returns (result, manifest, ledger)."""
    manifest = partition(data, M, seed)
    ledger = run_parallel_fits(manifest, data, family, model_config, fit_config, run_dir, workers)
    result, ledger = collect_and_combine(manifest, method, sampler, cap, run_dir, ledger)
    return result, manifest, ledger
