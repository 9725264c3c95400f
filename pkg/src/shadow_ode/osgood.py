"""Maximal and minimal solutions from the superequation ``z' = F(x, z) + eps``.

Solutions ``u_j`` of the superequation for ``eps_j = eps0 * 2**-j`` decrease
(up to ``3*tol``) towards the maximal solution.  Where the last two ladder
members agree to ``tol`` their limit is accepted; when agreement is lost
before the horizon or a blow-up, the construction is restarted from the last
accepted point and the segments are glued.  ``minimal`` is the mirror image
with ``z' = F - eps``.

Every superequation solve keeps its finest step at most ``eps / 4``
(extra refinement levels are added for small ``eps``).  Without that
separation the Euler recursion can step over the tiny equilibrium
``z = -eps**2/4`` of ``z' = 2 sqrt|z| - eps`` and land on another branch.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .errors import LadderNonMonotone, SystemsUnsupported
from .expr import VectorField
from .grid import ConstantRule, check_bound
from .peano import SolveOptions, solve_ladder
from .shadow import Solution

MAX_SEGMENTS = 64
MONOTONE_SLACK = 3.0
SCALE_SEPARATION = 4.0


def solve_super(field: VectorField, x0: float, y0, eps: float, opts: Optional[SolveOptions] = None) -> Solution:
    """Solve ``z' = F + eps``: exactly ``solve_global`` with ``Constant(eps)``.

    The returned solution carries a ``bound`` certificate for the finest
    trajectory anchored at ``x0`` (local existence rectangle).
    """
    if not eps >= 0:
        raise ValueError("eps must be >= 0")
    return _solve_shifted(field, x0, y0, eps, opts or SolveOptions())


def solve_sub(field: VectorField, x0: float, y0, eps: float, opts: Optional[SolveOptions] = None) -> Solution:
    """Solve ``z' = F - eps`` (the minimal-solution counterpart)."""
    if not eps >= 0:
        raise ValueError("eps must be >= 0")
    return _solve_shifted(field, x0, y0, -eps, opts or SolveOptions())


def _solve_shifted(field, x0, y0, shift, opts):
    sol, ladder = solve_ladder(field, x0, y0, opts.with_rule(ConstantRule(shift)))
    sol.bound = check_bound(ladder.finest, 0, field)
    return sol


@dataclass
class EpsilonLadder:
    eps_values: list
    solutions: list

    def cauchy_gaps(self) -> list:
        """sup |u_{j+1} - u_j| over the common converged prefix, per j."""
        out = []
        for a, b in zip(self.solutions, self.solutions[1:]):
            n = min(len(a.qs), len(b.qs))
            out.append(float(np.max(np.abs(a.values[:n] - b.values[:n]))))
        return out


@dataclass
class MaximalSolution:
    base: Solution
    segments: list  # (start x, restart value) per segment
    domination_margin: float
    kind: str = "max"
    not_globally_resolved: bool = False
    ladders: list = field(default_factory=list)

    @property
    def qs(self):
        return self.base.qs

    @property
    def values(self):
        return self.base.values

    @property
    def tol(self):
        return self.base.tol


def maximal(field, x0, y0, eps0: float = 1e-2, j_eps: int = 12, opts: Optional[SolveOptions] = None) -> MaximalSolution:
    return _extremal(field, x0, y0, eps0, j_eps, opts or SolveOptions(), +1)


def minimal(field, x0, y0, eps0: float = 1e-2, j_eps: int = 12, opts: Optional[SolveOptions] = None) -> MaximalSolution:
    return _extremal(field, x0, y0, eps0, j_eps, opts or SolveOptions(), -1)


def _extremal(field, x0, y0, eps0, j_eps, opts, sign):
    if field.dim != 1:
        raise SystemsUnsupported("maximal/minimal solutions are defined for scalar problems")
    if not eps0 > 0:
        raise ValueError("eps0 must be positive")
    if j_eps < 3:
        raise ValueError("j_eps must be >= 3")
    tol = opts.tol
    horizon_end = x0 + opts.t_max
    eps_values = [eps0 * 2.0**-j for j in range(j_eps + 1)]
    solver = solve_super if sign > 0 else solve_sub

    start_x, start_y = float(x0), float(np.atleast_1d(y0)[0])
    segments, pieces, ladders = [], [], []
    margin = math.inf
    last = None
    unresolved = True
    for _ in range(MAX_SEGMENTS):
        remaining = horizon_end - start_x
        if remaining < opts.query_spacing:
            unresolved = False
            break
        seg_opts = replace(opts, t_max=remaining)
        sols = [solver(field, start_x, start_y, e, separated(seg_opts, e)) for e in eps_values]
        _check_monotone(sols, sign, tol)
        ladders.append(EpsilonLadder(eps_values, sols))

        fine, prev = sols[-1], sols[-2]
        n = min(len(fine.qs), len(prev.qs))
        agree = np.max(np.abs(fine.values[:n] - prev.values[:n]), axis=1) <= tol
        end = int(np.argmin(agree)) if not agree.all() else n
        piece = (fine.qs[:end], fine.values[:end], fine.errs[:end])
        segments.append((start_x, start_y))
        pieces.append(piece if not pieces else tuple(a[1:] for a in piece))
        for s in sols:
            m = min(len(s.qs), end)
            gap = sign * (s.values[:m, 0] - fine.values[:m, 0])
            margin = min(margin, float(np.min(gap)))
        last = fine

        if end == len(fine.qs) and end == n and (fine.capped or fine.blow_up):
            unresolved = False
            break
        if end <= 1:
            break
        start_x, start_y = float(fine.qs[end - 1]), float(fine.values[end - 1, 0])

    qs = np.concatenate([p[0] for p in pieces])
    values = np.concatenate([p[1] for p in pieces])
    errs = np.concatenate([p[2] for p in pieces])
    finished = not unresolved
    base = replace(
        last,
        x0=float(x0),
        qs=qs,
        values=values,
        errs=errs,
        horizon=opts.t_max,
        blow_up=bool(finished and last.blow_up),
        capped=bool(finished and last.capped),
        a_est=last.a_est if finished else float(0.5 * (qs[-1] + qs[-1] + opts.query_spacing)),
        provenance=f"{'maximal' if sign > 0 else 'minimal'}:eps0={eps0!r}:jeps={j_eps}",
    )
    return MaximalSolution(base, segments, margin, "max" if sign > 0 else "min", unresolved, ladders)


def separated(opts: SolveOptions, eps: float) -> SolveOptions:
    """Options whose finest step ``1/(n0 * 2**J)`` is at most ``eps / SCALE_SEPARATION``."""
    if eps <= 0:
        return opts
    need = math.ceil(math.log2(SCALE_SEPARATION / (eps * opts.n0)))
    return replace(opts, refinements=max(opts.refinements, need))


def _check_monotone(sols, sign, tol):
    for j, (a, b) in enumerate(zip(sols, sols[1:])):
        n = min(len(a.qs), len(b.qs))
        gap = sign * (a.values[:n, 0] - b.values[:n, 0])
        if n and np.min(gap) < -MONOTONE_SLACK * tol:
            i = int(np.argmin(gap))
            raise LadderNonMonotone(
                f"superequation ladder not monotone between eps levels {j} and {j + 1} "
                f"at x = {a.qs[i]} (gap {gap[i]:.3g})",
                level=j,
                query=float(a.qs[i]),
                gap=float(gap[i]),
            )


def domination_check(extremal, candidate) -> tuple[bool, float]:
    """Does ``extremal`` dominate ``candidate`` on their common queries?

    For a maximal solution the gap is ``y_max - candidate``; for a minimal
    one it is ``candidate - y_min``.  Dominates when the worst gap is
    ``>= -3*tol``.
    """
    sign = -1 if getattr(extremal, "kind", "max") == "min" else 1
    qa, va = extremal.qs, extremal.values
    qb, vb = candidate.qs, candidate.values
    common, ia, ib = np.intersect1d(qa, qb, return_indices=True)
    if not len(common):
        raise ValueError("no common query points")
    gap = np.min(sign * (va[ia] - vb[ib]), axis=1)
    worst = float(np.min(gap))
    return worst >= -MONOTONE_SLACK * extremal.tol, worst
