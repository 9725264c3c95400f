"""Perturbations that reproduce a known solution, and solution funnels.

``recover`` builds, for a closed-form solution ``y`` on ``[x0, c]``, the
sequence ``eps_k = F(t_k, y(t_k)) - F(x_k, y(x_k))`` where ``t_k`` is the
least mean-value point of ``y`` on ``[x_k, x_{k+1}]``.  Feeding it back to
the Euler recursion reproduces ``y`` on the grid up to rounding.
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import NoMeanValuePoint, SystemsUnsupported
from .expr import VectorField, parse
from .grid import GridSpec, Perturbation, integrate
from .peano import SolveOptions, solve_global
from .shadow import Solution

SCAN_POINTS = 64
GATE_TOL = 1e-10
GATE_PROBES = 100


@dataclass(frozen=True, eq=False)
class KnownSolution:
    y: VectorField
    y_prime: VectorField
    c: float

    @classmethod
    def from_text(cls, y: str, y_prime: str, c: float, dim: int = 1):
        return cls(parse(y, dim, state=False), parse(y_prime, dim, state=False), float(c))

    def value(self, t) -> np.ndarray:
        return self.y.evaluate_array(t)

    def slope(self, t) -> np.ndarray:
        return self.y_prime.evaluate_array(t)

    def check(self, field: VectorField, x0: float, y0, probes: int = GATE_PROBES, tol: float = GATE_TOL):
        """Sanity gate: ``y(x0) = y0`` and ``y' = F(x, y)`` at probe points."""
        y0 = np.atleast_1d(np.asarray(y0, dtype=float))
        start = self.value(np.array([x0]))[:, 0]
        if np.max(np.abs(start - y0)) > tol * (1 + np.max(np.abs(y0))):
            raise ValueError(f"known solution has y({x0}) = {start.tolist()}, IVP needs {y0.tolist()}")
        t = np.linspace(x0, self.c, probes)
        lhs = self.slope(t)
        rhs = field.evaluate_array(t, list(self.value(t)))
        gap = np.abs(lhs - rhs) / (1 + np.abs(lhs))
        if np.max(gap) > tol:
            i = int(np.argmax(np.max(gap, axis=0)))
            raise ValueError(f"known solution violates y' = F(x, y) at x = {t[i]} (gap {np.max(gap):.3g})")


def recover(field: VectorField, known: KnownSolution, spec: GridSpec, check: bool = True) -> Perturbation:
    """Recorded perturbation realizing ``known`` on the grid up to ``known.c``.

    The least mean-value point is located by scanning 64 subintervals for
    the first sign change of ``g(t) = y'(t) h - (y(x_{k+1}) - y(x_k))`` and
    bisecting the bracket down to floating resolution (well below
    ``h * 2**-20``).  Steps with ``x_{k+1} > c`` get ``eps_k = 0`` and
    ``t_k = NaN``.
    """
    if field.dim != 1 or spec.dim != 1:
        raise SystemsUnsupported("mean-value recovery needs a scalar problem (one t_k per step)")
    if check:
        known.check(field, spec.x0, spec.y0)
    budget, h, hs = spec.budget, spec.h, spec.direction * spec.h
    k = np.arange(budget)
    xk = spec.x0 + k * hs
    xk1 = spec.x0 + (k + 1) * hs
    active = np.nonzero((xk1 - known.c) * spec.direction <= 0)[0]
    if spec.direction < 0:
        raise ValueError("recovery is defined for forward grids")
    eps = np.zeros(budget)
    tk = np.full(budget, np.nan)
    if len(active):
        t_act = _mean_value_points(known, xk[active], xk1[active], h, active)
        y_t = known.value(t_act)
        y_x = known.value(xk[active])
        f_t = field.evaluate_array(t_act, list(y_t))[0]
        f_x = field.evaluate_array(xk[active], list(y_x))[0]
        eps[active] = f_t - f_x
        tk[active] = t_act
    return Perturbation.recorded(eps, tk, label=f"recorded:c={known.c!r}")


def _mean_value_points(known, lo_x, hi_x, h, index):
    yl = known.value(lo_x)[0]
    yr = known.value(hi_x)[0]
    delta = yr - yl
    frac = np.arange(SCAN_POINTS + 1) / SCAN_POINTS
    ts = lo_x[:, None] + (hi_x - lo_x)[:, None] * frac[None, :]
    slopes = known.slope(ts)[0]
    g = slopes * h - delta[:, None]

    zero = g == 0
    change = np.sign(g[:, :-1]) * np.sign(g[:, 1:]) < 0
    hit = zero[:, :-1] | change
    hit = np.concatenate([hit, zero[:, -1:]], axis=1)
    has = hit.any(axis=1)
    first = np.argmax(hit, axis=1)

    missing = np.nonzero(~has)[0]
    if len(missing):
        # a touching root can hide between scan points: accept the best scan
        # point when |g| is within the variation of g over one subinterval
        slack = h * np.max(np.abs(np.diff(slopes, axis=1)), axis=1)
        slack += 8 * np.finfo(float).eps * (np.abs(delta) + np.max(np.abs(slopes), axis=1) * h)
        best = np.argmin(np.abs(g), axis=1)
        ok = np.abs(g[np.arange(len(g)), best]) <= slack
        bad = missing[~ok[missing]]
        if len(bad):
            i = int(bad[0])
            raise NoMeanValuePoint(
                f"no mean-value point on [{lo_x[i]}, {hi_x[i]}]; is y C^1 on the grid?",
                index=int(index[i]),
            )
        first[missing] = best[missing]

    rows = np.arange(len(g))
    lo = ts[rows, first]
    hi = ts[rows, np.minimum(first + 1, SCAN_POINTS)]
    g_lo = g[rows, first]
    settled = (g_lo == 0) | ~has
    t = lo.copy()
    work = np.nonzero(~settled)[0]
    a, b, ga = lo[work], hi[work], g_lo[work]
    d = delta[work]
    for _ in range(64):
        mid = 0.5 * (a + b)
        if not np.any((mid != a) & (mid != b)):
            break
        gm = known.slope(mid)[0] * h - d
        left = np.sign(gm) != np.sign(ga)
        # keep the left sub-bracket whenever it still holds a root
        b = np.where(left, mid, b)
        a = np.where(left, a, mid)
        ga = np.where(left, ga, gm)
    t[work] = 0.5 * (a + b)
    return t


def verify_roundtrip(field: VectorField, known: KnownSolution, recovered: Perturbation, spec: GridSpec) -> float:
    """``max |y_k - y(x_k)|`` over steps with ``x_{k+1} <= c`` after replaying ``recovered``."""
    traj = integrate(field, spec, recovered, escape_radius=math.inf)
    active = spec.x0 + (traj.ks + 1) * spec.h <= known.c
    # y_k = y(x_k) holds for every k up to and including the last active step + 1
    upto = int(np.sum(active)) + 1
    ks = traj.ks[:upto]
    ref = known.value(traj.xs[:upto]).T
    if not len(ks):
        return 0.0
    return float(np.max(np.abs(traj.ys[:upto] - ref)))


# --------------------------------------------------------------------------
# funnels


@dataclass
class Funnel:
    rules: list
    solutions: list
    clusters: list  # lists of indices into solutions
    tol: float

    def labels(self):
        return [r.describe() for r in self.rules]

    def cluster_of(self, i: int) -> int:
        return next(c for c, members in enumerate(self.clusters) if i in members)

    def to_csv(self, path):
        """Long format: ``rule,cluster,q,y0,...,y{n-1},err_est``."""
        dim = self.solutions[0].dim
        with open(path, "w", newline="") as fh:
            fh.write(",".join(["rule", "cluster", "q"] + [f"y{i}" for i in range(dim)] + ["err_est"]) + "\n")
            for i, (rule, sol) in enumerate(zip(self.rules, self.solutions)):
                head = [rule.describe(), str(self.cluster_of(i))]
                for q, v, e in zip(sol.qs, sol.values, sol.errs):
                    cells = head + [repr(float(q))] + [repr(float(c)) for c in v] + [repr(float(e))]
                    fh.write(",".join(cells) + "\n")


def sup_distance(a: Solution, b: Solution) -> float:
    """Sup-distance over the common query prefix of two solutions."""
    n = min(len(a.qs), len(b.qs))
    if n == 0:
        return math.inf
    if not np.array_equal(a.qs[:n], b.qs[:n]):
        raise ValueError("solutions do not share a query grid")
    return float(np.max(np.abs(a.values[:n] - b.values[:n])))


def _solve_rule(args):
    field, x0, y0, opts = args
    return solve_global(field, x0, y0, opts)


def funnel(field: VectorField, x0: float, y0, rules: Sequence, opts: Optional[SolveOptions] = None) -> Funnel:
    """One global solve per perturbation rule, then cluster within 3*tol."""
    if not rules:
        raise ValueError("funnel needs at least one perturbation rule")
    opts = opts or SolveOptions()
    jobs = [(field, x0, y0, opts.with_rule(r)) for r in rules]
    workers = min(len(jobs), max(1, int(os.environ.get("SHADOW_ODE_THREADS", "1") or 1)))
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            sols = list(pool.map(_solve_rule, jobs))
    else:
        sols = [_solve_rule(j) for j in jobs]
    clusters: list[list[int]] = []
    for i, s in enumerate(sols):
        for members in clusters:
            if sup_distance(sols[members[0]], s) <= 3 * opts.tol:
                members.append(i)
                break
        else:
            clusters.append([i])
    return Funnel(list(rules), sols, clusters, opts.tol)
