"""Command-line front end: ``epvi <subcommand> ...``."""

from __future__ import annotations

import argparse
import dataclasses
import sys
import time
from pathlib import Path

import numpy as np

from . import io
from .combine import SamplerConfig, draw_posterior_samples, pairing_schedule, step_cost_probe
from .evaluate import METHOD_NAMES, heldout_metrics, sweep
from .mixture import DEFAULT_CAP, MixtureApprox, enumerate_product
from .models import FAMILIES, build_model, generate_synthetic, holdout_split, make_config
from .nvi import FitConfig, fit
from .pipeline import (
    ShardManifest,
    collect_and_combine,
    load_combined,
    partition,
    run_parallel_fits,
    save_combined,
)


def _model_args(p):
    g = p.add_argument_group("model")
    g.add_argument("--model", choices=sorted(FAMILIES), default="logistic")
    g.add_argument("--V", type=int, help="features (logistic) or output dims (tlsa)")
    g.add_argument("--L", type=int, help="latent sources (tlsa)")
    g.add_argument("--C", type=int, help="covariates (tlsa)")
    g.add_argument("--D", type=int, help="spatial dims (tlsa)")
    g.add_argument("--dim", type=int, help="parameter dimension (gaussian)")
    g.add_argument("--tau", type=float)
    g.add_argument("--sigma-w2", dest="sigma_w2", type=float)
    g.add_argument("--rho", type=float)
    g.add_argument("--prior-shape", dest="prior_shape", type=float)
    g.add_argument("--prior-rate", dest="prior_rate", type=float)
    g.add_argument("--positive-exponent", dest="positive_exponent", action="store_true", default=None,
                   help="tlsa: use the unbounded positive-exponent basis")


def _fit_args(p):
    p.add_argument("--K", type=int, default=4)
    p.add_argument("--max-iters", type=int, default=5000)
    p.add_argument("--rel-tol", type=float, default=1e-6)
    p.add_argument("--n-init", type=int, default=1)
    p.add_argument("--trace", action="store_true", help="keep the objective trace in fit reports")


def _sampler_args(p):
    p.add_argument("--method", choices=["exact", "sample", "pairwise"], default="sample")
    p.add_argument("--R", type=int, default=500)
    p.add_argument("--burn-in", type=int, default=1000)
    p.add_argument("--cap", type=int, default=DEFAULT_CAP)
    p.add_argument("--S", type=int, default=1000, help="posterior draws to write")
    p.add_argument("--parallel-rounds", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="epvi", description="Embarrassingly parallel variational inference.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate a synthetic dataset with a train/test split")
    _model_args(p)
    p.add_argument("--N", type=int, default=None)
    p.add_argument("--holdout", type=float, default=0.1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)

    p = sub.add_parser("fit", help="fit one shard (M=1: full-data NVI)")
    p.add_argument("--data", required=True)
    p.add_argument("--M", type=int, default=1)
    p.add_argument("--shard", type=int, default=0)
    _fit_args(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)

    p = sub.add_parser("fit-all", help="partition the training split and fit every shard")
    p.add_argument("--data", required=True)
    p.add_argument("--M", type=int, required=True)
    _fit_args(p)
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)

    p = sub.add_parser("combine", help="collect the fitted shard mixtures and combine them")
    p.add_argument("--run", required=True)
    _sampler_args(p)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("evaluate", help="held-out metrics for a combined posterior")
    p.add_argument("--run", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--method", choices=["exact", "sample", "pairwise", "nvi"], default="sample")
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("bench", help="scaling benchmarks of the combiners")
    p.add_argument("--what", choices=["sampler", "enumerate"], default="sampler")
    p.add_argument("--axis", choices=["R", "M", "d"], default="M")
    p.add_argument("--values", type=int, nargs="+", default=[4, 8, 16, 32])
    p.add_argument("--M", type=int, default=8)
    p.add_argument("--K", type=int, default=4)
    p.add_argument("--d", type=int, default=20)
    p.add_argument("--R", type=int, default=20000)
    p.add_argument("--burn-in", type=int, default=0)
    p.add_argument("--cap", type=int, default=DEFAULT_CAP)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)

    p = sub.add_parser("compare", help="sweep M, K or L and compare methods on held-out data")
    p.add_argument("--data", required=True)
    p.add_argument("--axis", choices=["M", "K", "L"], default="M")
    p.add_argument("--values", type=int, nargs="+", required=True)
    p.add_argument("--M", type=int, default=10)
    _fit_args(p)
    p.add_argument("--methods", nargs="+", choices=["exact", "sample", "pairwise"], default=["sample"])
    p.add_argument("--R", type=int, default=500)
    p.add_argument("--burn-in", type=int, default=1000)
    p.add_argument("--cap", type=int, default=DEFAULT_CAP)
    p.add_argument("--S", type=int, default=1000)
    p.add_argument("--no-nvi", action="store_true", help="skip the full-data NVI baseline")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    return parser


def _fit_config(args) -> FitConfig:
    return FitConfig(K=args.K, max_iters=args.max_iters, rel_tol=args.rel_tol, init_seed=args.seed,
                     n_init=args.n_init, keep_trace=args.trace)


DEFAULT_N = {"gaussian": 1000, "logistic": 20000, "tlsa": 1000}


def _load_data(data_dir):
    data_dir = Path(data_dir)
    meta_path = data_dir / "dataset.json"
    if not meta_path.exists():
        raise FileNotFoundError(f"no dataset.json in {data_dir}; run gen-data first")
    meta = io.read_json(meta_path)
    config = make_config(meta["family"], **meta["config"])
    train, _ = io.load_dataset(data_dir / "train.txt")
    test, _ = io.load_dataset(data_dir / "test.txt")
    return meta["family"], config, train, test


def cmd_gen_data(args) -> int:
    kwargs = {k: getattr(args, k) for k in
              ("V", "L", "C", "D", "dim", "tau", "sigma_w2", "rho", "prior_shape", "prior_rate", "positive_exponent")}
    config = make_config(args.model, **kwargs)
    N = args.N or DEFAULT_N[args.model]
    data, truth = generate_synthetic(args.model, config, N, args.seed)
    train, test = holdout_split(data, args.holdout, args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    io.save_dataset(out / "train.txt", train, args.model)
    io.save_dataset(out / "test.txt", test, args.model)
    io.write_json(out / "truth.json", truth)
    io.write_json(out / "dataset.json", {
        "family": args.model, "config": dataclasses.asdict(config), "N": N,
        "holdout": args.holdout, "seed": args.seed, "n_train": train.n, "n_test": test.n,
    })
    print(f"wrote {train.n} train / {test.n} test rows to {out}")
    return 0


def cmd_fit(args) -> int:
    family, config, train, _ = _load_data(args.data)
    manifest = partition(train, args.M, args.seed)
    if not 0 <= args.shard < args.M:
        raise ValueError(f"--shard must lie in [0, {args.M})")
    shard = train.take(manifest.rows[args.shard], shard_id=args.shard)
    model = build_model(family, config, shard, 1.0 / args.M)
    q, report = fit(model, _fit_config(args))
    out = Path(args.out)
    (out / "params").mkdir(parents=True, exist_ok=True)
    meta = {"shard_id": args.shard, "M": args.M, "prior_temper": 1.0 / args.M}
    MixtureApprox(q.means, q.variances, meta=meta).save(out / "params" / f"shard_{args.shard:03d}.json")
    io.write_json(out / "params" / f"shard_{args.shard:03d}.report.json", report.to_dict())
    print(f"shard {args.shard}/{args.M}: objective {report.objective:.6g} after {report.iterations} "
          f"iterations ({report.reason}), {report.wall_time:.2f}s")
    return 0


def cmd_fit_all(args) -> int:
    family, config, train, _ = _load_data(args.data)
    manifest = partition(train, args.M, args.seed)
    ledger = run_parallel_fits(manifest, train, family, config, _fit_config(args), args.out, args.workers)
    print(f"fitted {args.M} shards; slowest fit {ledger.max_fit_time:.2f}s")
    return 0


def cmd_combine(args) -> int:
    run = Path(args.run)
    manifest = ShardManifest.load(run / "manifest.json")
    sampler = SamplerConfig(R=args.R, burn_in=args.burn_in, seed=args.seed, parallel=args.parallel_rounds)
    result, ledger = collect_and_combine(manifest, args.method, sampler, args.cap, run)
    save_combined(result, run / f"combined_{args.method}.txt")
    draws = draw_posterior_samples(result, args.S, np.random.default_rng(args.seed))
    io.save_draws(run / f"draws_{args.method}.txt", draws, {
        "method": args.method, "seed": args.seed, "R": args.R, "burn_in": args.burn_in,
        "M": manifest.M, "K": manifest.fit_config.get("K"), "S": args.S,
    })
    print(f"{args.method}: combined in {ledger.combine_time:.4f}s, "
          f"{ledger.scalars_communicated} scalars collected")
    return 0


def cmd_evaluate(args) -> int:
    run = Path(args.run)
    family, config, train, test = _load_data(args.data)
    times = {}
    if args.method == "nvi":
        q = MixtureApprox.load(run / "params" / "shard_000.json")
        draws = draw_posterior_samples(q, 1000, np.random.default_rng(args.seed))
        name = "NVI"
    else:
        path = run / f"draws_{args.method}.txt"
        if not path.exists():
            raise FileNotFoundError(f"missing combine output {path}; run `epvi combine --method {args.method}` first")
        draws, _ = io.load_draws(path)
        name = METHOD_NAMES[args.method]
        ledger = io.read_json(run / "ledger.json")
        times = {k: ledger[k] for k in ("max_fit_time", "transfer_time", "combine_time", "parallel_time")}
    model = build_model(family, config, train, 1.0)
    result = heldout_metrics(draws, test, model, name, times)
    io.write_json(run / f"eval_{args.method}.json", result.to_dict())
    acc = "" if result.accuracy is None else f", accuracy {result.accuracy:.4f}"
    print(f"{name}: held-out NLL {result.nll:.4f} +- {result.nll_se:.4f}{acc}")
    return 0


def _random_mixtures(M, K, d, rng):
    return [MixtureApprox(rng.standard_normal((K, d)), rng.uniform(0.5, 2.0, K)) for _ in range(M)]


def cmd_bench(args) -> int:
    rng = np.random.default_rng(args.seed)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    rows = []
    for v in args.values:
        M, d, R = args.M, args.d, args.R
        if args.what == "sampler":
            M, d, R = (v if args.axis == "M" else M), (v if args.axis == "d" else d), (v if args.axis == "R" else R)
            probe = step_cost_probe(_random_mixtures(M, args.K, d, rng), SamplerConfig(R=R, burn_in=args.burn_in))
            rows.append((v, M, args.K, d, R, probe["seconds"]))
        else:
            mixtures = _random_mixtures(v, args.K, d, rng)
            t0 = time.perf_counter()
            try:
                enumerate_product(mixtures, cap=args.cap)
                elapsed = time.perf_counter() - t0
            except ValueError:
                elapsed = float("nan")
            rows.append((v, v, args.K, d, args.K**v, elapsed))
    last = "R" if args.what == "sampler" else "components"
    with out.open("w") as fh:
        fh.write(f"value\tM\tK\td\t{last}\tseconds\n")
        for r in rows:
            fh.write("\t".join(str(x) for x in r) + "\n")
    for r in rows:
        print("\t".join(str(x) for x in r))
    return 0


def cmd_compare(args) -> int:
    family, config, train, test = _load_data(args.data)
    sampler = SamplerConfig(R=args.R, burn_in=args.burn_in, seed=args.seed)
    rows = sweep(args.axis, args.values, train, test, family, config, args.M, _fit_config(args), args.out,
                 sampler, tuple(args.methods), args.S, args.seed, args.cap, include_nvi=not args.no_nvi)
    for r in rows:
        if r["status"] == "ok":
            acc = "" if r["accuracy"] is None else f"  acc {r['accuracy']:.4f}"
            print(f"{args.axis}={r['value']:<4} {r['method']:<12} nll {r['nll']:.4f}  time {r['time']:.2f}s{acc}")
        else:
            print(f"{args.axis}={r['value']:<4} {r['method']:<12} {r['status']} {r.get('error', '')}")
    return 0


COMMANDS = {
    "gen-data": cmd_gen_data,
    "fit": cmd_fit,
    "fit-all": cmd_fit_all,
    "combine": cmd_combine,
    "evaluate": cmd_evaluate,
    "bench": cmd_bench,
    "compare": cmd_compare,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except Exception as exc:
        print(f"epvi {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
