"""Global solver: refinement ladder -> shadow table -> certified solution."""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .expr import VectorField
from .grid import ZeroRule, is_power_of_two, parse_rule
from .quad import integrate_certified
from .shadow import (
    MIN_LEVELS,
    Solution,
    build_ladder,
    close,
    extract,
    refine_blowup,
)


@dataclass(frozen=True)
class SolveOptions:
    n0: int = 1024
    refinements: int = 8
    t_max: float = 2.0
    tol: float = 1e-4
    query_spacing: float = 2.0**-7
    escape_radius: float = 1e6
    rule: object = field(default_factory=ZeroRule)
    two_sided: bool = False
    refine_rounds: int = 0

    def __post_init__(self):
        if not is_power_of_two(self.n0):
            raise ValueError(f"n0 must be a power of two, got {self.n0}")
        if self.refinements < MIN_LEVELS - 1:
            raise ValueError(f"refinements must be >= {MIN_LEVELS - 1}")
        for name in ("t_max", "tol", "query_spacing", "escape_radius"):
            v = getattr(self, name)
            if not (v > 0 and math.isfinite(v)):
                raise ValueError(f"{name} must be positive and finite, got {v!r}")
        if isinstance(self.rule, str):
            object.__setattr__(self, "rule", parse_rule(self.rule))

    def with_rule(self, rule) -> "SolveOptions":
        return replace(self, rule=rule)


def solve_ladder(field: VectorField, x0: float, y0, opts: SolveOptions, direction: int = 1):
    """One-sided solve returning the ladder as well (callers may inspect it)."""
    ladder = build_ladder(
        field, x0, y0, opts.n0, opts.refinements, opts.t_max, opts.rule,
        opts.escape_radius, direction,
    )
    sol = close(extract(ladder, opts.query_spacing, opts.tol))
    if opts.refine_rounds:
        sol = refine_blowup(ladder, sol, opts.refine_rounds)
    return sol, ladder


def solve_global(field: VectorField, x0: float, y0, opts: Optional[SolveOptions] = None) -> Solution:
    """Certified noncontinuable solution of ``y' = F(x, y)``, ``y(x0) = y0``.

    Global-ness is certified only up to ``opts.t_max`` or a detected blow-up.
    With ``two_sided`` the backward recursion (step ``-h``) is run too and the
    two branches are stitched at ``x0``; ``a_minus``/``blow_up_left``
    describe the left end.
    """
    opts = opts or SolveOptions()
    y0 = tuple(float(v) for v in np.atleast_1d(y0))
    right, _ = solve_ladder(field, x0, y0, opts, 1)
    if not opts.two_sided:
        return right
    left, _ = solve_ladder(field, x0, y0, opts, -1)
    return stitch(left, right)


def stitch(left: Solution, right: Solution) -> Solution:
    """Join a backward and a forward solution sharing the sample at x0."""
    qs = np.concatenate([left.qs[:0:-1], right.qs])
    values = np.concatenate([left.values[:0:-1], right.values])
    errs = np.concatenate([left.errs[:0:-1], right.errs])
    out = replace(right, qs=qs, values=values, errs=errs)
    out.a_minus = left.a_est
    out.blow_up_left = left.blow_up
    out.capped_left = left.capped
    return out


def residual_check(
    sol: Solution,
    field: VectorField,
    pair_count: int = 50,
    seed: int = 0,
    eps: float = 0.0,
    quad_tol: float = 1e-4,
) -> float:
    """max over random sample pairs of ``|Y(z) - Y(x) - int_x^z (F(t, Y(t)) + eps) dt|``.

    ``Y`` is the piecewise-linear interpolant of the samples and the
    integral is taken with ``integrate_certified``.
    """
    if len(sol.qs) < 2:
        raise ValueError("residual check needs at least two samples")
    rng = np.random.default_rng(seed)
    order = np.argsort(sol.qs)
    qs, vals = sol.qs[order], sol.values[order]

    def integrand(t):
        return field.evaluate_array(t, list(sol(t))) + eps

    worst = 0.0
    for _ in range(pair_count):
        i, k = sorted(rng.choice(len(qs), size=2, replace=False))
        value, _ = integrate_certified(integrand, qs[i], qs[k], quad_tol)
        gap = np.max(np.abs(vals[k] - vals[i] - np.atleast_1d(value)))
        worst = max(worst, float(gap))
    return worst
