"""Wall-time scaling of the component sampler (in R, M and d) and of exact enumeration (in K**M)."""

import argparse
import time

import numpy as np
from scipy import stats

from epvi.combine import SamplerConfig, step_cost_probe, warm_up
from epvi.mixture import ExponentialBlowupError, MixtureApprox, enumerate_product


def mixtures(rng, M, K, d):
    return [MixtureApprox(rng.standard_normal((K, d)), rng.uniform(0.5, 2.0, K)) for _ in range(M)]


def slope(x, t):
    fit = stats.linregress(np.log(x), np.log(t))
    return fit.slope, fit.rvalue**2


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--K", type=int, default=4)
    p.add_argument("--d", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args()
    rng = np.random.default_rng(args.seed)
    warm_up()

    grids = {
        "R": [(8, args.d, R) for R in (10_000, 20_000, 40_000, 80_000, 160_000)],
        "M": [(M, args.d, 20_000) for M in (4, 8, 16, 32, 64)],
        "d": [(8, d, 20_000) for d in (50, 100, 200, 400, 800)],
    }
    for axis, grid in grids.items():
        times = [step_cost_probe(mixtures(rng, M, args.K, d), SamplerConfig(R=R, burn_in=0))["seconds"]
                 for M, d, R in grid]
        xs = [g[{"M": 0, "d": 1, "R": 2}[axis]] for g in grid]
        s, r2 = slope(xs, times)
        print(f"sampler vs {axis}: " + "  ".join(f"{x}:{t:.4f}s" for x, t in zip(xs, times))
              + f"  slope {s:.2f} R2 {r2:.3f}")

    sizes, times = [], []
    for M in range(4, 11):
        qs = mixtures(rng, M, args.K, 2)
        t0 = time.perf_counter()
        try:
            enumerate_product(qs)
        except ExponentialBlowupError as exc:
            print(f"enumeration M={M}: {exc}")
            continue
        sizes.append(args.K**M)
        times.append(time.perf_counter() - t0)
    s, r2 = slope(sizes, times)
    print("enumeration: " + "  ".join(f"{n}:{t:.4f}s" for n, t in zip(sizes, times))
          + f"  slope vs K^M {s:.2f} R2 {r2:.3f}")


if __name__ == "__main__":
    main()
