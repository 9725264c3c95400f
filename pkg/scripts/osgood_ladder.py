"""Epsilon-ladder diagnostics for maximal solutions.

Prints, per ladder member, the distance of u_eps to the classical maximal
solution and the Cauchy gap to the next member.

    python3 scripts/osgood_ladder.py --field "3*abs(y)^(2/3)" --exact "x^3"
"""
import argparse

import numpy as np

from shadow_ode import SolveOptions, maximal, parse


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--field", default="2*sqrt(abs(y))")
    ap.add_argument("--exact", default="x^2")
    ap.add_argument("--eps0", type=float, default=1e-2)
    ap.add_argument("--jeps", type=int, default=12)
    args = ap.parse_args()

    exact = parse(args.exact, 1, state=False)
    ext = maximal(parse(args.field, 1), 0.0, 0.0, args.eps0, args.jeps, SolveOptions(t_max=1.0))
    for n, ladder in enumerate(ext.ladders):
        gaps = ladder.cauchy_gaps() + [float("nan")]
        print(f"segment {n} starting at x = {ext.segments[n][0]}")
        for eps, sol, gap in zip(ladder.eps_values, ladder.solutions, gaps):
            err = float(np.max(np.abs(sol.values[:, 0] - exact.evaluate_array(sol.qs)[0])))
            print(f"  eps={eps:.3e}  sup|u - exact|={err:.3e}  gap to next={gap:.3e}")
    final = float(np.max(np.abs(ext.values[:, 0] - exact.evaluate_array(ext.qs)[0])))
    print(f"glued maximal solution: sup error {final:.3e}, domination margin {ext.domination_margin:.2e}")


if __name__ == "__main__":
    main()
