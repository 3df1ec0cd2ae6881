"""Capacity ``h_cap`` of the synthetic (A, B, H) load limit state.

Solves ``P(H > h_cap) = target`` on the quadrature marginal of ``H`` and
checks it against a pilot Monte Carlo run through the closed-form first
ordering.  The frozen value lives in ``fsrsa.benchmarks.H_CAP``.
"""

import argparse

import numpy as np
from scipy import optimize

from fsrsa import benchmarks
from fsrsa.joint_model import load_model_abh
from fsrsa.marginals import Family, from_moments


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--target", type=float, default=1e-3)
    ap.add_argument("--n", type=float, default=1e7, help="pilot Monte Carlo size")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    a = from_moments(Family.LOGNORMAL, *benchmarks.LOAD_A)
    b = from_moments(Family.LOGNORMAL, *benchmarks.LOAD_B)
    chain = load_model_abh(a, b).chain

    def excess(h):
        return chain.h_marginal(np.array([h]))[1][0] - args.target

    h_cap = optimize.brentq(excess, 2500.0, 20_000.0, xtol=1e-10, rtol=1e-15)
    print(f"quadrature h_cap      = {h_cap!r}")
    print(f"frozen H_CAP         = {benchmarks.H_CAP!r}")

    n = int(args.n)
    rng = np.random.default_rng(args.seed)
    hits = 0
    for start in range(0, n, 1_000_000):
        m = min(1_000_000, n - start)
        av = a.from_normal(rng.standard_normal(m))
        bv = b.from_normal(rng.standard_normal(m))
        h = av - bv * np.log(-np.log(rng.uniform(size=m)))
        hits += int(np.sum(h > h_cap))
    p = hits / n
    se = np.sqrt(p * (1 - p) / n)
    print(f"pilot MC P(H > h_cap) = {p:.4e} +- {se:.1e} (n = {n:.0e}), "
          f"{(p - args.target) / se:+.2f} SE from target")


if __name__ == "__main__":
    main()
