"""Held-out NLL against time while varying M, K or L.

    python3 scripts/run_sweeps.py --model logistic --axis M --values 2 5 10 20
    python3 scripts/run_sweeps.py --model tlsa --axis L --values 2 4 6 --M 5

Writes results.tsv and plot_nll_vs_time.tsv under --out.
"""

import argparse

from epvi.combine import SamplerConfig
from epvi.evaluate import sweep
from epvi.models import generate_synthetic, holdout_split, make_config
from epvi.nvi import FitConfig

DEFAULT_N = {"logistic": 20000, "tlsa": 1000, "gaussian": 1000}


def main():
    p = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--model", choices=sorted(DEFAULT_N), default="logistic")
    p.add_argument("--axis", choices=["M", "K", "L"], default="M")
    p.add_argument("--values", type=int, nargs="+", default=[2, 5, 10, 20])
    p.add_argument("--M", type=int, default=10)
    p.add_argument("--K", type=int, default=4)
    p.add_argument("--N", type=int)
    p.add_argument("--methods", nargs="+", default=["sample", "pairwise"])
    p.add_argument("--R", type=int, default=500)
    p.add_argument("--burn-in", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="results/sweep")
    args = p.parse_args()

    config = make_config(args.model)
    data, _ = generate_synthetic(args.model, config, args.N or DEFAULT_N[args.model], args.seed)
    train, test = holdout_split(data, 0.1, args.seed)
    rows = sweep(args.axis, args.values, train, test, args.model, config, args.M,
                 FitConfig(K=args.K, init_seed=args.seed), f"{args.out}/{args.model}_{args.axis}",
                 SamplerConfig(R=args.R, burn_in=args.burn_in, seed=args.seed), tuple(args.methods),
                 seed=args.seed)
    for r in rows:
        if r["status"] == "ok":
            acc = "" if r["accuracy"] is None else f"  acc {r['accuracy']:.4f}"
            print(f"{args.axis}={r['value']:<3} {r['method']:<12} nll {r['nll']:.4f}  time {r['time']:7.2f}s{acc}")
        else:
            print(f"{args.axis}={r['value']:<3} {r['method']:<12} {r['status']}")


if __name__ == "__main__":
    main()
