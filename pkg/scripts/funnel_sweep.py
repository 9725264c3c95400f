"""Sweep constant and sampled perturbations for y' = 2 sqrt|y|, y(0) = 0.

Every rule lands in the funnel between the zero solution and x^2; the
constant family approaches x^2 as c shrinks.  Writes a long-format CSV and
an SVG of all members.

    python3 scripts/funnel_sweep.py --out results/funnel.csv --svg results/funnel.svg
"""
import argparse

import numpy as np

from shadow_ode import SolveOptions, funnel, parse, parse_rule
from shadow_ode import svg


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--rules", default="zero,const:1e-2,const:1e-3,const:1e-4,const:1e-5,random:1e-2:1")
    ap.add_argument("--out", default=None)
    ap.add_argument("--svg", default=None)
    args = ap.parse_args()

    rules = [parse_rule(r) for r in args.rules.split(",")]
    fun = funnel(parse("2*sqrt(abs(y))", 1), 0.0, 0.0, rules, SolveOptions(t_max=1.0))
    for rule, sol in zip(fun.rules, fun.solutions):
        gap_top = float(np.max(np.abs(sol.values[:, 0] - sol.qs**2)))
        gap_zero = float(np.max(np.abs(sol.values[:, 0])))
        print(f"{rule.describe():>16}  sup|y - x^2| = {gap_top:.3e}  sup|y| = {gap_zero:.3e}")
    print("clusters:", fun.clusters)
    if args.out:
        fun.to_csv(args.out)
    if args.svg:
        series = [(r.describe(), s.qs, s.values[:, 0]) for r, s in zip(fun.rules, fun.solutions)]
        svg.write(args.svg, series, title="funnel of y' = 2 sqrt|y|")


if __name__ == "__main__":
    main()
