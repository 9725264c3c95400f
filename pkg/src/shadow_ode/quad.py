"""Left-endpoint Riemann sums on the dyadic line ``x_i = i*h``.

For ``[a, b]`` the summation range is ``i_a .. i_b`` with
``i_a*h - h < a <= i_a*h`` and ``i_b*h < b <= i_b*h + h``.  Sums are
accumulated with ``math.fsum`` so the rounding error does not grow with the
number of terms.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Union

import numpy as np

from .errors import DomainError, NoConvergence
from .expr import Expression, VectorField, parse
from .grid import is_power_of_two

CHUNK = 1 << 20


@dataclass(frozen=True)
class RiemannSpec:
    a: float
    b: float
    N: int

    def __post_init__(self):
        if not is_power_of_two(self.N):
            raise ValueError(f"N must be a positive power of two, got {self.N}")
        if not self.a <= self.b:
            raise ValueError("need a <= b")

    @property
    def h(self) -> float:
        return 1.0 / self.N

    @property
    def i_a(self) -> int:
        return math.ceil(self.a * self.N)

    @property
    def i_b(self) -> int:
        return math.ceil(self.b * self.N) - 1


Integrand = Union[str, Expression, VectorField, Callable]


def as_array_function(f: Integrand) -> Callable[[np.ndarray], np.ndarray]:
    """Vectorized ``x -> f(x)``; vector-valued integrands return ``(n, m)``."""
    if isinstance(f, str):
        f = parse(f, 1, state=False)
    if isinstance(f, Expression):
        f = VectorField(1, (f,), str(f), state=False, declared_vars=("x",))
    if isinstance(f, VectorField):
        if f.state:
            raise ValueError("integrand must depend on x only")
        fld = f
        return lambda xs: fld.evaluate_array(xs)
    return f


def riemann_sum(f: Integrand, spec: RiemannSpec):
    """``sum_{i=i_a}^{i_b} f(i*h) * h``; a float, or an array for vector integrands."""
    fn = as_array_function(f)
    i_a, i_b, h = spec.i_a, spec.i_b, spec.h
    if i_b < i_a:
        return 0.0
    partials = None
    for start in range(i_a, i_b + 1, CHUNK):
        idx = np.arange(start, min(start + CHUNK, i_b + 1), dtype=np.int64)
        try:
            vals = np.asarray(fn(idx * h), dtype=float)
        except DomainError as exc:
            raise DomainError(f"integrand undefined: {exc}", index=_offending(exc, start)) from None
        vals = np.atleast_2d(vals)
        if partials is None:
            partials = [[] for _ in range(vals.shape[0])]
        for row, acc in zip(vals, partials):
            acc.append(math.fsum(row.tolist()))
    # h is a power of two, so scaling after summation is exact
    totals = [math.fsum(acc) * h for acc in partials]
    return totals[0] if len(totals) == 1 else np.array(totals)


def _offending(exc, start):
    return None if exc.index is None else start + exc.index


@dataclass
class QuadCertificate:
    levels: list = field(default_factory=list)  # N values used
    sums: list = field(default_factory=list)
    deltas: list = field(default_factory=list)

    @property
    def order(self) -> float:
        """Median observed order ``log2(delta_j / delta_{j+1})``."""
        ratios = [
            math.log2(d0 / d1)
            for d0, d1 in zip(self.deltas, self.deltas[1:])
            if d0 > 0 and d1 > 0
        ]
        if not ratios:
            return math.inf
        return float(np.median(ratios))


def integrate_certified(
    f: Integrand,
    a: float,
    b: float,
    tol: float,
    n_start: int = 16,
    max_exponent: int = 24,
):
    """Double ``N`` until two consecutive level deltas are ``<= tol/2``.

    Returns ``(value, certificate)`` where value is the finest sum.  Raises
    NoConvergence once ``N`` would exceed ``2**max_exponent``.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    fn = as_array_function(f)
    cert = QuadCertificate()
    N = n_start
    calm = 0
    while N <= 1 << max_exponent:
        s = riemann_sum(fn, RiemannSpec(a, b, N))
        if cert.sums:
            delta = float(np.max(np.abs(np.asarray(s) - np.asarray(cert.sums[-1]))))
            cert.deltas.append(delta)
            calm = calm + 1 if delta <= tol / 2 else 0
        cert.levels.append(N)
        cert.sums.append(s)
        if calm >= 2:
            return s, cert
        N *= 2
    raise NoConvergence(
        f"Riemann sums on [{a}, {b}] not within tol={tol} by N=2**{max_exponent}; "
        f"last deltas {cert.deltas[-3:]}"
    )
