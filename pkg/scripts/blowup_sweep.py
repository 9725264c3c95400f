"""Blow-up localization for y' = y^p, y(0) = 1, against the closed form 1/(p-1).

    python3 scripts/blowup_sweep.py --out results/blowup.csv
"""
import argparse
import csv
import time

from shadow_ode import SolveOptions, parse, solve_global


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--powers", default="2,3,4")
    ap.add_argument("--refinements", type=int, default=8)
    ap.add_argument("--refine-rounds", type=int, default=6)
    ap.add_argument("--out", default=None)
    args = ap.parse_args()

    rows = []
    for p in (int(v) for v in args.powers.split(",")):
        opts = SolveOptions(refinements=args.refinements, t_max=2.0, refine_rounds=args.refine_rounds)
        start = time.perf_counter()
        sol = solve_global(parse(f"y^{p}", 1), 0.0, 1.0, opts)
        exact = 1.0 / (p - 1)
        rows.append({
            "p": p,
            "a_exact": exact,
            "a_est": sol.a_est,
            "abs_err": abs(sol.a_est - exact),
            "blow_up": sol.blow_up,
            "samples": len(sol.qs),
            "seconds": round(time.perf_counter() - start, 3),
        })
        print(rows[-1])
    if args.out:
        with open(args.out, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=list(rows[0]))
            w.writeheader()
            w.writerows(rows)


if __name__ == "__main__":
    main()
