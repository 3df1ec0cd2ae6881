"""Repeated failure-sample runs on a benchmark: mean and c.o.v. of every index.

Example::

    python scripts/repeat_study.py nonlinear --method ice --reps 20 --out results/nl_ice.csv
    python scripts/repeat_study.py nonlinear --method pick-freeze --reps 5 --n 1e6
"""

import argparse
import time

import numpy as np

from fsrsa import benchmarks
from fsrsa.io import write_rows_csv
from fsrsa.kde import RatioVarianceConfig
from fsrsa.rare_event import improved_cross_entropy, monte_carlo, subset_simulation
from fsrsa.sensitivity import KINDS, SensitivityOptions, fs_indices, pick_freeze_reference, \
    transform_failure_samples


def one_run(prob, args, seed, opts):
    lsf = prob.fresh_lsf()
    if args.method == "pick-freeze":
        rep = pick_freeze_reference(prob.model, lsf, int(args.n), seed=seed, B=0)
        return rep, lsf.n_calls
    if args.method == "mc":
        res = monte_carlo(prob.model, lsf, int(args.n), seed=seed)
    elif args.method == "ice":
        res = improved_cross_entropy(prob.model, lsf, int(args.n_per_level), seed=seed,
                                     max_levels=args.max_levels or 50)
    else:
        res = subset_simulation(prob.model, lsf, int(args.n_per_level), 0.1, seed=seed,
                                n_failure_out=int(args.n_per_level))
    fsu = transform_failure_samples(res, prob.model)
    return fs_indices(fsu, res.pf_hat, opts), res.n_calls


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("benchmark", choices=sorted(benchmarks.REGISTRY))
    ap.add_argument("--method", choices=("mc", "ice", "sus", "pick-freeze"), default="mc")
    ap.add_argument("--reps", type=int, default=20)
    ap.add_argument("--n", type=float, default=1e6, help="MC / pick-freeze sample size")
    ap.add_argument("--n-per-level", type=float, default=1e4)
    ap.add_argument("--max-levels", type=int)
    ap.add_argument("--no-totals", action="store_true")
    ap.add_argument("--n-eval", type=float, default=1e5)
    ap.add_argument("--seed0", type=int, default=0)
    ap.add_argument("--out", help="CSV with one row per run, variable and index")
    args = ap.parse_args()

    prob = benchmarks.get(args.benchmark)
    opts = SensitivityOptions(compute_totals=not args.no_totals,
                              variance=RatioVarianceConfig(n_eval=int(args.n_eval)))
    rows, values, calls = [], {}, []
    t0 = time.perf_counter()
    for k in range(args.reps):
        seed = args.seed0 + k
        rep, nc = one_run(prob, args, seed, opts)
        calls.append(nc)
        for v in rep.names:
            for kind in KINDS:
                val = rep.value(kind, v)
                values.setdefault((v, kind), []).append(np.nan if val is None else val)
                rows.append({"seed": seed, "variable": v, "index": kind, "value": val,
                             "n_calls": nc})
        print(f"run {k + 1}/{args.reps} seed {seed}: {nc} calls, "
              f"{time.perf_counter() - t0:.0f}s elapsed", flush=True)

    print(f"\n{prob.name}, {args.method}, {args.reps} runs, mean calls {np.mean(calls):.3g}")
    print(f"{'variable':>10} {'index':>7} {'mean':>9} {'c.o.v.':>8}")
    for (v, kind), vals in values.items():
        a = np.asarray(vals, dtype=float)
        a = a[np.isfinite(a)]
        if a.size == 0:
            print(f"{v:>10} {kind:>7} {'-':>9} {'-':>8}")
            continue
        m = a.mean()
        cov = a.std(ddof=1) / m if a.size > 1 and m > 0 else float("nan")
        print(f"{v:>10} {kind:>7} {m:9.4f} {cov:8.3f}")
    if args.out:
        write_rows_csv(args.out, rows)


if __name__ == "__main__":
    main()
