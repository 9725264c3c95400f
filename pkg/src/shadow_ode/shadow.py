"""Collapse a refinement ladder of Euler trajectories into one certified solution.

Level ``j`` runs on ``N_j = N0 * 2**j`` with escape radius ``R_j = R0 * 4**j``.
Each query point ``q = x0 + s`` (``s`` a multiple of the query spacing) is
classified from the values ``v_j(q)`` of the trajectories:

* Converged: the last three levels are finite and ``|v_J - v_{J-1}| <= tol``;
* Diverged: some level exceeded its radius before ``q``, the finest two
  levels both did, and ``|v_J| >= |v_{J-1}|``;
* Undefined: anything else (bounded but not yet Cauchy, or no data).
"""
from __future__ import annotations

import enum
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .errors import InsufficientLadder, OriginDiverged, TooFewSamples
from .expr import VectorField
from .grid import (
    EulerTrajectory,
    GridSpec,
    StopReason,
    ZeroRule,
    integrate,
)

MIN_LEVELS = 4
RADIUS_GROWTH = 4.0


@dataclass(eq=False)
class RefinementLadder:
    field: VectorField
    trajectories: list  # EulerTrajectory per level, coarse to fine
    escape_radii: list
    rule_label: str = "zero"

    def __post_init__(self):
        for a, b in zip(self.trajectories, self.trajectories[1:]):
            if b.spec.N != 2 * a.spec.N:
                raise ValueError("ladder levels must double N")
        if any(r1 <= r0 for r0, r1 in zip(self.escape_radii, self.escape_radii[1:])):
            raise ValueError("escape radii must increase strictly")

    @property
    def levels(self):
        return [(t.spec, t.perturbation, t) for t in self.trajectories]

    @property
    def finest(self) -> EulerTrajectory:
        return self.trajectories[-1]

    @property
    def base(self) -> GridSpec:
        return self.trajectories[0].spec


def _worker_count() -> int:
    try:
        return max(1, int(os.environ.get("SHADOW_ODE_THREADS", "1")))
    except ValueError:
        return 1


def _integrate_level(args):
    fld, spec, rule, radius = args
    return integrate(fld, spec, rule.realize(spec), radius)


def build_ladder(
    field: VectorField,
    x0: float,
    y0,
    n0: int = 1024,
    refinements: int = 8,
    t_max: float = 2.0,
    rule=None,
    escape_radius: float = 1e6,
    direction: int = 1,
) -> RefinementLadder:
    """Integrate levels ``j = 0..refinements`` (parallel if SHADOW_ODE_THREADS > 1)."""
    rule = rule if rule is not None else ZeroRule()
    jobs = []
    for j in range(refinements + 1):
        spec = GridSpec(x0, tuple(np.atleast_1d(y0)), n0, j, t_max, direction=direction)
        jobs.append((field, spec, rule, escape_radius * RADIUS_GROWTH**j))
    workers = min(_worker_count(), len(jobs))
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            trajectories = list(pool.map(_integrate_level, jobs))
    else:
        trajectories = [_integrate_level(job) for job in jobs]
    return RefinementLadder(field, trajectories, [job[3] for job in jobs], rule.describe())


class Status(enum.IntEnum):
    UNDEFINED = 0
    CONVERGED = 1
    DIVERGED = 2


def level_values(traj: EulerTrajectory, s: np.ndarray) -> np.ndarray:
    """Trajectory interpolated at distances ``s`` from x0; shape ``(len(s), dim)``.

    Past an escape the value is ``±inf``; past any other stop it is NaN.
    """
    spec = traj.spec
    dist = traj.ks * spec.h  # exact: ks integer, h a power of two
    out = np.empty((len(s), spec.dim))
    for i in range(spec.dim):
        out[:, i] = np.interp(s, dist, traj.ys[:, i])
    beyond = s > dist[-1]
    if beyond.any():
        if traj.stop_reason is StopReason.ESCAPED:
            last = traj.ys[-1]
            out[beyond] = np.where(last < 0, -np.inf, np.inf)
        else:
            out[beyond] = np.nan
    return out


@dataclass(eq=False)
class ShadowTable:
    x0: float
    direction: int
    spacing: float
    tol: float
    s: np.ndarray  # distances from x0
    values: np.ndarray  # (levels, queries, dim)
    status: np.ndarray  # Status codes
    err: np.ndarray  # |v_J - v_{J-1}|_inf (NaN where undefined)
    diverged_level: np.ndarray  # -1 where not diverged
    bounded: np.ndarray  # last three levels finite
    escape_radii: list
    horizon: float
    rule_label: str = "zero"
    field: Optional[VectorField] = None

    @property
    def q(self) -> np.ndarray:
        return self.x0 + self.direction * self.s

    @property
    def n_levels(self) -> int:
        return self.values.shape[0]

    @property
    def finest(self) -> np.ndarray:
        return self.values[-1]

    def describe(self, i: int):
        st = Status(self.status[i])
        if st is Status.CONVERGED:
            return ("Converged", tuple(self.finest[i]), float(self.err[i]))
        if st is Status.DIVERGED:
            return ("Diverged", int(self.diverged_level[i]))
        return ("Undefined",)


def classify(ladder: RefinementLadder, s: np.ndarray, tol: float):
    vals = np.stack([level_values(t, s) for t in ladder.trajectories])
    radii = np.asarray(ladder.escape_radii)[:, None]
    with np.errstate(invalid="ignore"):
        mag = np.max(np.abs(vals), axis=2)  # NaN propagates
        bounded = np.all(np.isfinite(vals[-3:]), axis=(0, 2))
        err = np.max(np.abs(vals[-1] - vals[-2]), axis=1)
        converged = bounded & (err <= tol)
        beyond = mag > radii
        diverged = (
            ~converged
            & beyond[-1]
            & beyond[-2]
            & (mag[-1] >= mag[-2])
        )
    first_beyond = np.where(beyond.any(axis=0), np.argmax(beyond, axis=0), -1)
    status = np.full(len(s), Status.UNDEFINED, dtype=np.int8)
    status[converged] = Status.CONVERGED
    status[diverged] = Status.DIVERGED
    err = np.where(bounded, err, np.nan)
    return vals, status, err, np.where(diverged, first_beyond, -1), bounded


def query_distances(spacing: float, horizon: float) -> np.ndarray:
    count = int(math.floor(horizon / spacing + 1e-9))
    return np.arange(count + 1) * spacing


def extract(ladder: RefinementLadder, query_spacing: float, tol: float) -> ShadowTable:
    """Classify dyadic queries ``x0 + i*spacing`` up to the ladder horizon."""
    if len(ladder.trajectories) < MIN_LEVELS:
        raise InsufficientLadder(
            f"need at least {MIN_LEVELS} levels (J >= 3), got {len(ladder.trajectories)}"
        )
    base = ladder.base
    if not query_spacing >= base.h:
        raise ValueError(f"query spacing {query_spacing} below the coarsest step {base.h}")
    if not tol > 0:
        raise ValueError("tol must be positive")
    s = query_distances(query_spacing, base.t_max)
    vals, status, err, div_level, bounded = classify(ladder, s, tol)
    return ShadowTable(
        base.x0, base.direction, query_spacing, tol, s, vals, status, err, div_level,
        bounded, list(ladder.escape_radii), base.t_max, ladder.rule_label, ladder.field,
    )


def estimate_order(table: ShadowTable) -> float:
    """Median of ``log2(|v_{J-1}-v_{J-2}| / |v_J-v_{J-1}|)`` over Converged queries.

    Returns ``inf`` when every usable delta vanishes (exact on all levels).
    """
    conv = table.status == Status.CONVERGED
    if table.n_levels < 3 or conv.sum() < 5:
        raise TooFewSamples(
            f"order estimate needs >= 3 levels and >= 5 converged queries "
            f"(have {table.n_levels} levels, {int(conv.sum())} queries)"
        )
    v = table.values[-3:, conv]
    coarse = np.max(np.abs(v[1] - v[0]), axis=1)
    fine = np.max(np.abs(v[2] - v[1]), axis=1)
    usable = (coarse > 0) & (fine > 0)
    if not usable.any():
        return math.inf
    return float(np.median(np.log2(coarse[usable] / fine[usable])))


@dataclass(eq=False)
class Solution:
    """Certified continuous-limit object on a contiguous query range from x0."""

    field: Optional[VectorField]
    x0: float
    direction: int
    a_est: float  # right end (left end when direction < 0); inf when capped
    blow_up: bool
    capped: bool
    horizon: float
    qs: np.ndarray
    values: np.ndarray  # (samples, dim)
    errs: np.ndarray
    tol: float
    levels: int
    spacing: float
    order: Optional[float] = None
    provenance: str = "zero"
    tail_qs: np.ndarray = field(default_factory=lambda: np.empty(0))
    tail_values: np.ndarray = field(default_factory=lambda: np.empty((0, 1)))
    tail_errs: np.ndarray = field(default_factory=lambda: np.empty(0))
    # left end of a two-sided solve
    a_minus: Optional[float] = None
    blow_up_left: bool = False
    capped_left: bool = False
    bound: Optional[object] = None  # grid.BoundCertificate when requested

    @property
    def domain_left(self) -> float:
        return self.x0

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    @property
    def max_err(self) -> float:
        return float(np.max(self.errs)) if len(self.errs) else 0.0

    @property
    def a_bound(self) -> float:
        """a_est, or the horizon cap when no finite endpoint was found."""
        return self.x0 + self.direction * self.horizon if self.capped else self.a_est

    @property
    def samples(self):
        return [(float(q), tuple(map(float, v)), float(e)) for q, v, e in zip(self.qs, self.values, self.errs)]

    def __call__(self, t) -> np.ndarray:
        """Linear interpolation of the samples; shape ``(dim, *t.shape)``."""
        t = np.asarray(t, dtype=float)
        order = np.argsort(self.qs)
        qs = self.qs[order]
        return np.stack([np.interp(t, qs, self.values[order, i]) for i in range(self.dim)])

    def header(self) -> dict:
        return {
            "a_est": None if math.isinf(self.a_est) else self.a_est,
            "blow_up": self.blow_up,
            "capped": self.capped,
            "horizon": self.horizon,
            "order": None if self.order is None or math.isinf(self.order) else self.order,
            "tol": self.tol,
            "levels": self.levels,
            "provenance": self.provenance,
        }

    def to_csv(self, path_or_file):
        """``# {json header}`` line, then ``q,y0,...,y{n-1},err_est`` rows."""
        if not hasattr(path_or_file, "write"):
            with open(path_or_file, "w", newline="") as fh:
                return self.to_csv(fh)
        fh = path_or_file
        fh.write("# " + json.dumps(self.header(), sort_keys=True) + "\n")
        fh.write(",".join(["q"] + [f"y{i}" for i in range(self.dim)] + ["err_est"]) + "\n")
        for q, v, e in zip(self.qs, self.values, self.errs):
            fh.write(",".join([repr(float(q))] + [repr(float(c)) for c in v] + [repr(float(e))]) + "\n")


def close(table: ShadowTable) -> Solution:
    """Restrict to the Converged prefix and locate the right endpoint.

    Without blow-up, ``a_est`` is the midpoint between the last Converged and
    the first other query (``inf`` with ``capped=True`` if all converged).
    With blow-up, i.e. the prefix is followed by bounded-but-unconverged
    queries and then a Diverged one, ``a_est`` is the midpoint between the
    last non-Diverged and the first Diverged query, and the bounded tail is
    kept (finest-level values) as blow-up evidence.
    """
    st = table.status
    if st[0] != Status.CONVERGED:
        raise OriginDiverged(
            f"query at x0={table.x0} not converged ({table.describe(0)}); "
            "refine the ladder or loosen tol"
        )
    m = len(st)
    nonconv = np.nonzero(st != Status.CONVERGED)[0]
    end = int(nonconv[0]) if len(nonconv) else m
    q = table.q
    tail = slice(end, end)
    if end == m:
        a_est, blow_up, capped = math.inf, False, True
    else:
        j = end
        while j < m and st[j] == Status.UNDEFINED and table.bounded[j]:
            j += 1
        if j < m and st[j] == Status.DIVERGED:
            blow_up, capped = True, False
            a_est = 0.5 * (q[j - 1] + q[j])
            tail = slice(end, j)
        else:
            blow_up, capped = False, False
            a_est = 0.5 * (q[end - 1] + q[end])
    try:
        order = estimate_order(table)
    except TooFewSamples:
        order = None
    return Solution(
        field=table.field,
        x0=table.x0,
        direction=table.direction,
        a_est=float(a_est),
        blow_up=blow_up,
        capped=capped,
        horizon=table.horizon,
        qs=q[:end].copy(),
        values=table.finest[:end].copy(),
        errs=table.err[:end].copy(),
        tol=table.tol,
        levels=table.n_levels,
        spacing=table.spacing,
        order=order,
        provenance=table.rule_label,
        tail_qs=q[tail].copy(),
        tail_values=table.finest[tail].copy(),
        tail_errs=table.err[tail].copy(),
    )


def refine_blowup(ladder: RefinementLadder, sol: Solution, rounds: int = 4) -> Solution:
    """Sharpen a blow-up ``a_est`` by bisecting the boundary query interval.

    Each round re-classifies the midpoint of the current bracket
    ``(last non-Diverged, first Diverged)`` at half the previous spacing.
    """
    if not sol.blow_up or rounds <= 0:
        return sol
    half = sol.spacing / 2
    lo = abs(sol.a_est - sol.x0) - half
    hi = lo + sol.spacing
    for _ in range(rounds):
        mid = 0.5 * (lo + hi)
        _, status, *_ = classify(ladder, np.array([mid]), sol.tol)
        if status[0] == Status.DIVERGED:
            hi = mid
        else:
            lo = mid
    return replace(sol, a_est=float(sol.x0 + sol.direction * 0.5 * (lo + hi)))
