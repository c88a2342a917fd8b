"""Held-out evaluation and method comparisons."""

from __future__ import annotations

import csv
import dataclasses
import traceback
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import logsumexp

from .combine import SamplerConfig, draw_posterior_samples
from .mixture import DEFAULT_CAP, ExponentialBlowupError
from .models import DataShard, ModelSpec, build_model
from .nvi import FitConfig, fit
from .pipeline import collect, collect_and_combine, partition, run_parallel_fits

METHOD_NAMES = {
    "exact": "EPVI_exact",
    "sample": "EPVI_sample",
    "pairwise": "EPVI_subset",
}


@dataclass
class EvalResult:
    method: str
    nll: float
    nll_se: float
    accuracy: float | None = None
    times: dict = field(default_factory=dict)
    config: dict = field(default_factory=dict)
    pointwise_nll: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        if not np.isfinite(self.nll):
            raise ValueError(f"{self.method}: held-out NLL is not finite")
        if self.accuracy is not None and not 0.0 <= self.accuracy <= 1.0:
            raise ValueError("accuracy must lie in [0, 1]")

    @property
    def time(self) -> float:
        return self.times.get("total", float("nan"))

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        out.pop("pointwise_nll")
        return out


def predictive_log_likelihood(draws: np.ndarray, test: DataShard, model: ModelSpec) -> np.ndarray:
    """Per test point ``log[(1/S) sum_s p(y* | x*, theta_s)]``."""
    ll = model.pointwise_log_likelihood(draws, test)  # (S, n)
    return logsumexp(ll, axis=0) - np.log(ll.shape[0])


def heldout_metrics(draws: np.ndarray, test: DataShard, model: ModelSpec, method: str = "",
                    times: dict | None = None, config: dict | None = None) -> EvalResult:
    """Held-out NLL per datum (with its standard error) and, for logistic, accuracy."""
    draws = np.atleast_2d(draws)
    if draws.shape[0] < 1:
        raise ValueError("need at least one posterior draw")
    pointwise = -predictive_log_likelihood(draws, test, model)
    acc = None
    if model.name == "logistic":
        p = model.prob_positive(draws, test.X).mean(axis=0)
        acc = float(np.mean((p >= 0.5) == (test.Y == 1)))
    return EvalResult(
        method,
        float(pointwise.mean()),
        float(pointwise.std(ddof=1) / np.sqrt(len(pointwise))) if len(pointwise) > 1 else 0.0,
        acc,
        dict(times or {}),
        dict(config or {}),
        pointwise,
    )


def combined_se(a: EvalResult, b: EvalResult) -> float:
    return float(np.hypot(a.nll_se, b.nll_se))


def full_data_nvi(train: DataShard, test: DataShard, family: str, model_config, fit_config: FitConfig,
                  S: int = 1000, seed: int = 0):
    """Non-parallel baseline: one fit on all training rows with the untempered prior."""
    model = build_model(family, model_config, train, 1.0)
    q, report = fit(model, fit_config)
    draws = draw_posterior_samples(q, S, np.random.default_rng(seed))
    res = heldout_metrics(draws, test, model, "NVI", {"fit": report.wall_time, "total": report.wall_time},
                          {"M": 1, "K": fit_config.K})
    return res, q


def compare_methods(train: DataShard, test: DataShard, family: str, model_config, M: int,
                    fit_config: FitConfig, run_dir, methods=("exact", "sample", "pairwise"),
                    sampler: SamplerConfig = SamplerConfig(), S: int = 1000, seed: int = 0,
                    cap: int = DEFAULT_CAP, include_nvi: bool = False,
                    include_subposteriors: bool = False) -> list[EvalResult]:
    """Fit M subposteriors once, then evaluate each combination method on the test split.

    Exact products with more than ``cap`` components are skipped and
    reported with ``nll = nan`` in ``skipped``.
    """
    results = []
    run_dir = Path(run_dir)
    manifest = partition(train, M, seed)
    ledger = run_parallel_fits(manifest, train, family, model_config, fit_config, run_dir)
    eval_model = build_model(family, model_config, train, 1.0)
    base = {"M": M, "K": fit_config.K, "R": sampler.R, "burn_in": sampler.burn_in}
    if family == "tlsa":
        base["L"] = model_config.L
    for method in methods:
        try:
            result, ledger = collect_and_combine(manifest, method, sampler, cap, run_dir, ledger)
        except ExponentialBlowupError:
            continue
        draws = draw_posterior_samples(result, S, np.random.default_rng(seed))
        times = {
            "max_fit": ledger.max_fit_time,
            "transfer": ledger.transfer_time,
            "combine": ledger.combine_time,
            "total": ledger.parallel_time,
        }
        config = dict(base, scalars_communicated=ledger.scalars_communicated)
        results.append(heldout_metrics(draws, test, eval_model, METHOD_NAMES[method], times, config))
    if include_subposteriors:
        mixtures, _, _ = collect(manifest)
        rng = np.random.default_rng(seed)
        subs = [heldout_metrics(draw_posterior_samples(q, S, rng), test, eval_model) for q in mixtures]
        pointwise = np.mean([r.pointwise_nll for r in subs], axis=0)
        results.append(EvalResult(
            "Subposteriors", float(pointwise.mean()),
            float(pointwise.std(ddof=1) / np.sqrt(len(pointwise))),
            None if subs[0].accuracy is None else float(np.mean([r.accuracy for r in subs])),
            {"total": ledger.max_fit_time}, dict(base), pointwise,
        ))
    if include_nvi:
        results.append(full_data_nvi(train, test, family, model_config, fit_config, S, seed)[0])
    return results


def sweep(axis: str, values, train: DataShard, test: DataShard, family: str, model_config,
          base_M: int, fit_config: FitConfig, out_dir, sampler: SamplerConfig = SamplerConfig(),
          methods=("sample",), S: int = 1000, seed: int = 0, cap: int = DEFAULT_CAP,
          include_nvi: bool = True) -> list[dict]:
    """Run the pipeline for each value along ``axis`` (``M``, ``K`` or ``L``).

    Writes ``results.tsv`` (one row per cell and method, with the config echo)
    and ``plot_nll_vs_time.tsv`` (method, time, nll) into ``out_dir``. Failing
    cells are recorded with their error and the sweep continues.
    """
    if axis not in ("M", "K", "L"):
        raise ValueError("axis must be one of M, K, L")
    values = list(values)
    if not values:
        raise ValueError("sweep needs at least one value")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = []
    for value in values:
        M, fcfg, mcfg = base_M, fit_config, model_config
        if axis == "M":
            M = int(value)
        elif axis == "K":
            fcfg = dataclasses.replace(fit_config, K=int(value))
        else:
            mcfg = dataclasses.replace(model_config, L=int(value))
        cell_dir = out_dir / f"{axis}_{value}"
        try:
            results = compare_methods(train, test, family, mcfg, M, fcfg, cell_dir, methods, sampler, S,
                                      seed, cap, include_nvi=include_nvi)
            reported = {r.method for r in results}
            for method in methods:
                if METHOD_NAMES[method] not in reported:
                    rows.append({"axis": axis, "value": value, "method": METHOD_NAMES[method],
                                 "status": "skipped", "M": M, "K": fcfg.K})
            for r in results:
                rows.append({"axis": axis, "value": value, "method": r.method, "status": "ok",
                             "nll": r.nll, "nll_se": r.nll_se, "accuracy": r.accuracy,
                             "time": r.time, "M": r.config.get("M", M), "K": fcfg.K,
                             "L": getattr(mcfg, "L", None), "R": sampler.R, "seed": seed})
        except Exception as exc:
            rows.append({"axis": axis, "value": value, "method": "*", "status": "failed",
                         "error": f"{type(exc).__name__}: {exc}", "traceback": traceback.format_exc(limit=3)})
    _write_table(out_dir / "results.tsv", rows)
    plot_rows = [{"method": r["method"], axis: r["value"], "time": r["time"], "nll": r["nll"]}
                 for r in rows if r["status"] == "ok"]
    _write_table(out_dir / "plot_nll_vs_time.tsv", plot_rows)
    return rows


def _write_table(path, rows) -> None:
    path = Path(path)
    if path.exists() and path.stat().st_size:
        with path.open() as fh:
            cols = fh.readline().rstrip("\n").split("\t")
    else:
        cols = []
        for r in rows:
            cols.extend(k for k in r if k not in cols and k != "traceback")
    with path.open("a", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=cols, delimiter="\t", extrasaction="ignore")
        if fh.tell() == 0:
            writer.writeheader()
        writer.writerows(rows)
