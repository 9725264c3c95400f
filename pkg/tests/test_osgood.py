import numpy as np
import pytest

from shadow_ode.errors import SystemsUnsupported
from shadow_ode.expr import parse
from shadow_ode.grid import ConstantRule
from shadow_ode.osgood import (
    MaximalSolution,
    domination_check,
    maximal,
    minimal,
    separated,
    solve_sub,
    solve_super,
)
from shadow_ode.peano import SolveOptions, solve_global

FAST = SolveOptions(n0=256, refinements=5, t_max=1.0, tol=1e-3, query_spacing=2**-5)


def test_super_of_zero_field_is_linear():
    sol = solve_super(parse("0", 1), 0.0, 0.0, 0.1, FAST)
    np.testing.assert_allclose(sol.values[:, 0], 0.1 * sol.qs, atol=1e-12)
    assert sol.bound is not None and sol.bound.satisfied


def test_super_linear_closed_form():
    sol = solve_super(parse("y", 1), 0.0, 1.0, 1e-4, FAST)
    exact = np.exp(sol.qs) * (1 + 1e-4) - 1e-4
    assert np.max(np.abs(sol.values[:, 0] - exact)) <= 2e-2


def test_super_is_constant_rule_solve():
    a = solve_super(parse("y", 1), 0.0, 1.0, 1e-2, FAST)
    b = solve_global(parse("y", 1), 0.0, 1.0, FAST.with_rule(ConstantRule(1e-2)))
    np.testing.assert_array_equal(a.values, b.values)
    c = solve_sub(parse("y", 1), 0.0, 1.0, 1e-2, FAST)
    d = solve_global(parse("y", 1), 0.0, 1.0, FAST.with_rule(ConstantRule(-1e-2)))
    np.testing.assert_array_equal(c.values, d.values)


def test_super_sandwich_for_sqrt_field():
    eps = 1e-3
    sol = solve_super(parse("2*sqrt(abs(y))", 1), 0.0, 0.0, eps, FAST)
    q, v = sol.qs[1:], sol.values[1:, 0]
    assert np.all(v > 0)
    assert np.all(v >= q**2 - 3 * FAST.tol)
    assert np.all(v <= (q + 2 * np.sqrt(eps)) ** 2 + 3 * FAST.tol)


def test_separation_adds_levels():
    opts = SolveOptions(n0=1024, refinements=8)
    assert separated(opts, 1e-2).refinements == 8
    small = separated(opts, 1e-6)
    assert 1 / (small.n0 * 2**small.refinements) <= 1e-6 / 4


def test_maximal_unique_problem():
    # u_eps = eps (e^x - 1) for the finest eps = 1e-2 * 2^-6
    ext = maximal(parse("y", 1), 0.0, 0.0, 1e-2, 6, FAST)
    assert isinstance(ext, MaximalSolution)
    assert np.max(np.abs(ext.values)) <= FAST.tol


def test_minimal_zero_field_exact():
    # the finest member is z = -eps_J x, so the limit is zero up to eps_J
    ext = minimal(parse("0", 1), 0.0, 0.0, 1e-2, 4, FAST)
    np.testing.assert_allclose(ext.values[:, 0], -1e-2 / 16 * ext.qs, atol=1e-15)


def test_domination_of_itself():
    ext = maximal(parse("y", 1), 0.0, 1.0, 1e-2, 4, FAST)
    ok, worst = domination_check(ext, ext)
    assert ok and worst == 0.0


def test_segments_are_continuous():
    ext = maximal(parse("3*abs(y)^(2/3)", 1), 0.0, 0.0, 1e-2, 6, FAST)
    qs = list(ext.qs)
    for x, y in ext.segments[1:]:
        i = qs.index(x)
        assert abs(ext.values[i, 0] - y) <= ext.tol


def test_systems_rejected():
    with pytest.raises(SystemsUnsupported):
        maximal(parse("y1; -y0", 2), 0.0, (1.0, 0.0), 1e-2, 4, FAST)


def test_argument_validation():
    with pytest.raises(ValueError):
        maximal(parse("y", 1), 0.0, 0.0, 0.0, 4, FAST)
    with pytest.raises(ValueError):
        maximal(parse("y", 1), 0.0, 0.0, 1e-2, 2, FAST)
    with pytest.raises(ValueError):
        solve_super(parse("y", 1), 0.0, 0.0, -1.0, FAST)
