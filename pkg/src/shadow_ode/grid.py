"""Perturbed Euler recursion on one fixed dyadic grid.

The grid has ``N = N0 * 2**j`` points per unit length, so ``h = 1/N`` and every
abscissa ``x_k = x0 + k*h`` is a dyadic rational with a single rounding.
The recursion is

    y_{k+1} = y_k + (F(x_k, y_k) + eps_k) * h

run forwards (``direction=1``) or backwards (``direction=-1``, i.e. with
``-h``).  ``check_bound`` certifies the local Lipschitz-type estimate
``|y_k - y_l| <= (M + eps) |x_k - x_l|`` around an anchor node.
"""
from __future__ import annotations

import csv
import enum
import itertools
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import DomainError
from .expr import VectorField

FLOAT_SLACK = 2.0**-40
BOUND_INFLATION = 1.05
LATTICE_POINTS = 65


def is_power_of_two(n) -> bool:
    return isinstance(n, (int, np.integer)) and n > 0 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class GridSpec:
    x0: float
    y0: tuple
    n0: int = 1024
    j: int = 0
    t_max: float = 1.0
    k_max: Optional[int] = None
    direction: int = 1
    stride: int = 1

    def __post_init__(self):
        object.__setattr__(self, "y0", tuple(float(v) for v in np.atleast_1d(self.y0)))
        if not is_power_of_two(self.n0):
            raise ValueError(f"N0 must be a positive power of two, got {self.n0}")
        if self.j < 0:
            raise ValueError("refinement exponent j must be >= 0")
        if not (self.t_max > 0 and math.isfinite(self.t_max)):
            raise ValueError("t_max must be positive and finite")
        if self.direction not in (1, -1):
            raise ValueError("direction must be +1 or -1")
        if self.stride < 1:
            raise ValueError("stride must be >= 1")
        if self.k_max is not None and not (0 < self.k_max <= self.N * self.N):
            raise ValueError("k_max must lie in (0, N**2]")

    @property
    def N(self) -> int:
        return self.n0 << self.j

    @property
    def h(self) -> float:
        return 1.0 / self.N

    @property
    def dim(self) -> int:
        return len(self.y0)

    @property
    def budget(self) -> int:
        if self.k_max is not None:
            return self.k_max
        return min(self.N * self.N, math.ceil(self.t_max * self.N))

    def x_at(self, k):
        return self.x0 + k * (self.direction * self.h)


# --------------------------------------------------------------------------
# perturbations


@dataclass(frozen=True, eq=False)
class Perturbation:
    """A realized sequence ``eps_k`` (one row per step, one column per component).

    ``zero`` and ``constant`` perturbations are stored symbolically; ``sampled``
    and ``recorded`` ones carry an explicit array.  Steps beyond the end of
    the array use ``eps_k = 0``.  ``recorded`` perturbations also keep the
    mean-value abscissas ``t_k`` they were built from.
    """

    kind: str
    constant: float = 0.0
    values: Optional[np.ndarray] = None
    t_values: Optional[np.ndarray] = None
    label: str = ""

    @classmethod
    def zero(cls):
        return cls("zero", label="zero")

    @classmethod
    def const(cls, c: float):
        return cls("constant", constant=float(c), label=f"const:{float(c)!r}")

    @classmethod
    def sampled(cls, values, label="sampled"):
        values = np.asarray(values, dtype=float)
        if values.ndim == 1:
            values = values[:, None]
        return cls("sampled", values=values, label=label)

    @classmethod
    def recorded(cls, values, t_values, label="recorded"):
        values = np.asarray(values, dtype=float)
        if values.ndim == 1:
            values = values[:, None]
        return cls("recorded", values=values, t_values=np.asarray(t_values, dtype=float), label=label)

    @property
    def eps_max(self) -> float:
        if self.values is None:
            return abs(self.constant)
        return float(np.max(np.abs(self.values))) if self.values.size else 0.0

    def column(self, i: int, count: int) -> list:
        """``count`` per-step values of component ``i`` as Python floats."""
        if self.values is None:
            return [self.constant] * count
        col = self.values[:count, i].tolist()
        return col + [0.0] * (count - len(col))


@dataclass(frozen=True)
class ZeroRule:
    def realize(self, spec: GridSpec) -> Perturbation:
        return Perturbation.zero()

    def describe(self) -> str:
        return "zero"


@dataclass(frozen=True)
class ConstantRule:
    c: float

    def realize(self, spec: GridSpec) -> Perturbation:
        return Perturbation.const(self.c)

    def describe(self) -> str:
        return f"const:{float(self.c)!r}"


@dataclass(frozen=True)
class SampledRule:
    """i.i.d. uniform ``eps_k`` in ``[-amplitude*2**-j, amplitude*2**-j]`` on level j."""

    amplitude: float
    seed: int = 0

    def realize(self, spec: GridSpec) -> Perturbation:
        rng = np.random.default_rng([self.seed, spec.j])
        scale = self.amplitude * 2.0**-spec.j
        values = scale * rng.uniform(-1.0, 1.0, size=(spec.budget, spec.dim))
        return Perturbation.sampled(values, label=self.describe())

    def describe(self) -> str:
        return f"random:{float(self.amplitude)!r}:{self.seed}"


def parse_rule(text: str):
    """``zero`` | ``const:<c>`` | ``random:<amplitude>[:<seed>]``."""
    parts = text.strip().split(":")
    kind = parts[0].lower()
    try:
        if kind == "zero" and len(parts) == 1:
            return ZeroRule()
        if kind == "const" and len(parts) == 2:
            c = float(parts[1])
            if math.isfinite(c):
                return ConstantRule(c)
        if kind == "random" and len(parts) in (2, 3):
            amp = float(parts[1])
            if math.isfinite(amp) and amp >= 0:
                return SampledRule(amp, int(parts[2]) if len(parts) == 3 else 0)
    except ValueError:
        pass
    raise ValueError(f"bad perturbation descriptor {text!r}; use zero, const:<c> or random:<a>[:<seed>]")


# --------------------------------------------------------------------------
# trajectories


class StopReason(enum.Enum):
    BUDGET_EXHAUSTED = "BudgetExhausted"
    ESCAPED = "Escaped"
    NON_FINITE = "NonFinite"
    DOMAIN_ERROR = "DomainError"


@dataclass(eq=False)
class EulerTrajectory:
    spec: GridSpec
    perturbation: Perturbation
    ks: np.ndarray
    xs: np.ndarray
    ys: np.ndarray  # shape (stored steps, dim)
    k_stop: int
    stop_reason: StopReason
    escape_radius: float
    error: Optional[str] = None

    @property
    def x_stop(self) -> float:
        return self.spec.x_at(self.k_stop)

    def to_csv(self, path_or_file):
        header = ["k", "x"] + [f"y{i}" for i in range(self.spec.dim)]
        rows = ([int(k), repr(float(x))] + [repr(float(v)) for v in y] for k, x, y in zip(self.ks, self.xs, self.ys))
        _write_csv(path_or_file, header, rows)


def _write_csv(path_or_file, header, rows):
    if hasattr(path_or_file, "write"):
        w = csv.writer(path_or_file, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
        return
    with open(path_or_file, "w", newline="") as fh:
        _write_csv(fh, header, rows)


def integrate(
    field: VectorField,
    spec: GridSpec,
    pert: Optional[Perturbation] = None,
    escape_radius: float = 1e6,
    on_domain_error: str = "raise",
) -> EulerTrajectory:
    """Run the perturbed Euler recursion until escape, budget or failure.

    Stops at the first ``k`` with ``|y_k|_inf > escape_radius`` (the escaped
    state is stored), when ``k`` reaches the step budget, or when ``F``
    returns a non-finite value.  A DomainError in ``F`` is raised with the
    offending step index unless ``on_domain_error="stop"``.
    """
    pert = pert if pert is not None else Perturbation.zero()
    if field.dim != spec.dim:
        raise ValueError(f"field has dim {field.dim}, initial state has {spec.dim}")
    if not escape_radius > max(abs(v) for v in spec.y0):
        raise ValueError("escape radius must exceed |y0|_inf")
    if on_domain_error not in ("raise", "stop"):
        raise ValueError("on_domain_error must be 'raise' or 'stop'")

    runner = _run_scalar if spec.dim == 1 else _run_system
    stored, k_stop, reason, message = runner(field, spec, pert, float(escape_radius))
    if reason is StopReason.DOMAIN_ERROR and on_domain_error == "raise":
        raise DomainError(f"F undefined at step: {message}", index=k_stop)

    ks, ys = stored
    ks = np.asarray(ks, dtype=np.int64)
    xs = spec.x0 + ks * (spec.direction * spec.h)
    ys = np.asarray(ys, dtype=float).reshape(len(ks), spec.dim)
    return EulerTrajectory(spec, pert, ks, xs, ys, k_stop, reason, float(escape_radius), message)


def _run_scalar(field, spec, pert, R):
    f = field.step_function
    x0, hs, stride, budget = spec.x0, spec.direction * spec.h, spec.stride, spec.budget
    y = spec.y0[0]
    ks, ys = [0], [y]
    eps = None if pert.values is None else pert.column(0, budget)
    c = pert.constant
    reason, message = StopReason.BUDGET_EXHAUSTED, None
    k = 0
    try:
        # One loop per storage pattern keeps the hot path branch-free.
        if stride == 1 and eps is None:
            for k in range(budget):
                d = f(x0 + k * hs, y)
                if d - d != 0.0:
                    reason = StopReason.NON_FINITE
                    break
                y = y + (d + c) * hs
                if not -R <= y <= R:
                    reason = StopReason.ESCAPED if y == y else StopReason.NON_FINITE
                    break
                ys.append(y)
            else:
                k = budget
        else:
            yk = y
            for k in range(budget):
                yk = y
                d = f(x0 + k * hs, y)
                if d - d != 0.0:
                    reason = StopReason.NON_FINITE
                    break
                y = y + (d + (c if eps is None else eps[k])) * hs
                if not -R <= y <= R:
                    reason = StopReason.ESCAPED if y == y else StopReason.NON_FINITE
                    break
                if (k + 1) % stride == 0:
                    ks.append(k + 1)
                    ys.append(y)
            else:
                k = budget
                yk = y
    except OverflowError:
        reason = StopReason.NON_FINITE
    except (ValueError, ZeroDivisionError) as exc:
        reason, message = StopReason.DOMAIN_ERROR, str(exc)

    if stride == 1 and eps is None:
        # fast path stored every state y_0 .. y_k (the escaped one excluded)
        ks = list(range(len(ys)))
        yk = ys[-1]
    if reason is StopReason.ESCAPED:
        k += 1
        yk = y
    if ks[-1] != k:
        ks.append(k)
        ys.append(yk)
    return (ks, ys), k, reason, message


def _run_system(field, spec, pert, R):
    f = field.step_function
    n = spec.dim
    x0, hs, stride, budget = spec.x0, spec.direction * spec.h, spec.stride, spec.budget
    y = spec.y0
    ks, ys = [0], [y]
    if pert.values is None:
        eps_rows = itertools.repeat((pert.constant,) * n)
    else:
        cols = [pert.column(i, budget) for i in range(n)]
        eps_rows = zip(*cols)
    reason, message = StopReason.BUDGET_EXHAUSTED, None
    k = 0
    try:
        yk = y
        for k, e in zip(range(budget), eps_rows):
            yk = y
            d = f(x0 + k * hs, *y)
            if any(v - v != 0.0 for v in d):
                reason = StopReason.NON_FINITE
                break
            y = tuple(yi + (di + ei) * hs for yi, di, ei in zip(y, d, e))
            if not all(-R <= v <= R for v in y):
                reason = StopReason.ESCAPED if all(v == v for v in y) else StopReason.NON_FINITE
                break
            if (k + 1) % stride == 0:
                ks.append(k + 1)
                ys.append(y)
        else:
            k = budget
            yk = y
    except OverflowError:
        reason = StopReason.NON_FINITE
    except (ValueError, ZeroDivisionError) as exc:
        reason, message = StopReason.DOMAIN_ERROR, str(exc)

    if reason is StopReason.ESCAPED:
        k += 1
        yk = y
    if ks[-1] != k:
        ks.append(k)
        ys.append(yk)
    return (ks, ys), k, reason, message


def replay(field: VectorField, traj: EulerTrajectory) -> EulerTrajectory:
    """Recompute a trajectory from its spec and perturbation."""
    return integrate(field, traj.spec, traj.perturbation, traj.escape_radius, on_domain_error="stop")


# --------------------------------------------------------------------------
# local bound certificate


@dataclass
class BoundCertificate:
    """Outcome of checking ``|y_k - y_l| <= (M + eps)|x_k - x_l|`` near an anchor.

    The rectangle is ``[x - c_back, x + c] x prod [y_i - d, y_i + d]``; the
    bound is verified on ``[x, x + e)`` and, for interior anchors, on
    ``(x - e, x]``.
    """

    anchor_index: int
    x: float
    y: tuple
    c: float
    d: float
    e: float
    M: float
    eps_max: float
    satisfied: bool
    two_sided: bool
    violating_index: Optional[int] = None
    failure: Optional[str] = None  # "RegionEscape" or "BoundViolation"
    checked_nodes: int = 0

    @property
    def region(self):
        lo = self.x - (self.e if self.two_sided else 0.0)
        return (lo, self.x + self.e), tuple((v - self.d, v + self.d) for v in self.y)


def sample_field_max(field: VectorField, x_range, y_center, d, points=LATTICE_POINTS, seed=0) -> float:
    """max |F|_inf over a lattice on ``x_range x prod[y_i - d, y_i + d]``.

    A full ``points**(n+1)`` lattice is used while it stays below ~3e5 nodes;
    larger systems fall back to the lattice corners plus a fixed-seed random
    sample of the same size.
    """
    n = len(y_center)
    axes = [np.linspace(x_range[0], x_range[1], points)]
    axes += [np.linspace(c - d, c + d, points) for c in y_center]
    if points ** (n + 1) <= 300_000:
        grids = np.meshgrid(*axes, indexing="ij")
        coords = [g.ravel() for g in grids]
    else:
        rng = np.random.default_rng(seed)
        size = points**2 * (n + 1)
        lows = np.array([a[0] for a in axes])
        highs = np.array([a[-1] for a in axes])
        corners = np.array(list(itertools.product(*zip(lows, highs)))).T
        rand = lows[:, None] + (highs - lows)[:, None] * rng.random((n + 1, size))
        coords = list(np.concatenate([corners, rand], axis=1))
    vals = field.evaluate_array(coords[0], coords[1:])
    finite = np.isfinite(vals)
    if not finite.all():
        return math.inf
    return float(np.max(np.abs(vals)))


def check_bound(
    traj: EulerTrajectory,
    p: int,
    field: VectorField,
    c: Optional[float] = None,
    d: Optional[float] = None,
    M: Optional[float] = None,
) -> BoundCertificate:
    """Certify the Lipschitz-type bound on a window around stored node ``p``.

    Defaults: ``c = 0.5``, ``d = max(1, |y_p|_inf / 2)`` and
    ``M = 1.05 * max|F|`` sampled over the rectangle; then
    ``e = min(c, d / (M + 1))``.  For ``p > 0`` the backward window is
    checked too, with ``c`` capped by the distance to ``x0``.

    The bound is checked between every pair of consecutive stored nodes in
    the window (which implies it for all pairs by the triangle inequality)
    and between the anchor and every node, each with ``2**-40`` slack.
    """
    pos = int(np.searchsorted(traj.ks, p))
    if pos >= len(traj.ks) or traj.ks[pos] != p or p >= traj.k_stop:
        raise ValueError(f"anchor index {p} is not a stored node before k_stop={traj.k_stop}")
    spec = traj.spec
    x = float(traj.xs[pos])
    y = traj.ys[pos]
    two_sided = p > 0
    c = 0.5 if c is None else float(c)
    if two_sided:
        c = min(c, abs(x - spec.x0))
    d = max(1.0, float(np.max(np.abs(y))) / 2) if d is None else float(d)
    lo, hi = (x - c, x + c) if two_sided else (x, x + c)
    if spec.direction < 0:
        lo, hi = (x - c, x + c) if two_sided else (x - c, x)
    if M is None:
        M = BOUND_INFLATION * sample_field_max(field, (lo, hi), y, d)
    e = min(c, d / (M + 1.0))
    eps = traj.perturbation.eps_max

    dist = np.abs(traj.xs - x)
    ahead = (traj.ks >= p) & (dist < e)
    windows = [np.nonzero(ahead)[0]]
    if two_sided:
        windows.append(np.nonzero((traj.ks <= p) & (dist < e))[0][::-1])

    cert = BoundCertificate(p, x, tuple(map(float, y)), c, d, e, M, eps, True, two_sided)
    for idx in windows:
        cert.checked_nodes += len(idx)
        ys, xs = traj.ys[idx], traj.xs[idx]
        outside = np.nonzero(np.max(np.abs(ys - y), axis=1) > d)[0]
        escaped = (
            traj.stop_reason is not StopReason.BUDGET_EXHAUSTED
            and len(idx)
            and traj.ks[idx[-1]] == traj.k_stop
            and abs(spec.x_at(traj.k_stop) - x) < e
        )
        if len(outside) or escaped:
            first = int(traj.ks[idx[outside[0]]]) if len(outside) else int(traj.k_stop)
            cert.satisfied, cert.failure, cert.violating_index = False, "RegionEscape", first
            return cert
        steps = np.max(np.abs(np.diff(ys, axis=0)), axis=1) if len(idx) > 1 else np.empty(0)
        runs = np.abs(np.diff(xs))
        bad = np.nonzero(steps > (M + eps) * runs + FLOAT_SLACK)[0]
        if not len(bad):
            span = np.max(np.abs(ys - y), axis=1)
            bad_anchor = np.nonzero(span > (M + eps) * np.abs(xs - x) + FLOAT_SLACK)[0]
            bad = bad_anchor - 1 if len(bad_anchor) else bad
        if len(bad):
            cert.satisfied, cert.failure = False, "BoundViolation"
            cert.violating_index = int(traj.ks[idx[bad[0] + 1]])
            return cert
    return cert
