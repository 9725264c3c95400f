import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from shadow_ode.errors import SystemsUnsupported
from shadow_ode.expr import parse
from shadow_ode.grid import ConstantRule, GridSpec, ZeroRule
from shadow_ode.peano import SolveOptions
from shadow_ode.perturb import KnownSolution, funnel, recover, sup_distance, verify_roundtrip

FAST = SolveOptions(n0=256, refinements=5, t_max=1.0, tol=1e-3, query_spacing=2**-5)


def _exp_case(n0):
    field = parse("y", 1)
    known = KnownSolution.from_text("exp(x)", "exp(x)", 1.0)
    return field, known, GridSpec(0.0, (1.0,), n0=n0, t_max=1.0)


def test_recover_exponential():
    field, known, spec = _exp_case(1024)
    pert = recover(field, known, spec)
    h = spec.h
    t = pert.t_values
    xk = np.arange(spec.budget) * h
    assert np.all((t >= xk) & (t <= xk + h))
    # mean-value identity: y(x_{k+1}) - y(x_k) = y'(t_k) h
    np.testing.assert_allclose(np.exp(t) * h, np.exp(xk + h) - np.exp(xk), rtol=1e-12)
    # eps_k = e^{t_k} - e^{x_k}, so 0 < eps_k < e h
    assert np.all(pert.values[:, 0] > 0) and pert.eps_max <= math.e * h
    assert verify_roundtrip(field, known, pert, spec) <= 1e-12


def test_recover_quadratic_midpoint():
    # y = x^2: mean-value point is exactly the midpoint
    field = parse("2*sqrt(abs(y))", 1)
    known = KnownSolution.from_text("x^2", "2*x", 1.0)
    spec = GridSpec(0.0, (0.0,), n0=256, t_max=1.0)
    pert = recover(field, known, spec)
    xk = np.arange(spec.budget) * spec.h
    np.testing.assert_allclose(pert.t_values, xk + spec.h / 2, atol=1e-15)
    np.testing.assert_allclose(pert.values[:, 0], spec.h, rtol=1e-9)


def test_inactive_steps_past_c():
    field, _, spec = _exp_case(64)
    known = KnownSolution.from_text("exp(x)", "exp(x)", 0.5)
    pert = recover(field, known, spec)
    assert np.all(np.isnan(pert.t_values[32:])) and np.all(pert.values[32:] == 0)


def test_gate_rejects_wrong_solution():
    field, _, spec = _exp_case(64)
    with pytest.raises(ValueError):
        recover(field, KnownSolution.from_text("exp(2*x)", "2*exp(2*x)", 1.0), spec)
    with pytest.raises(ValueError):
        recover(field, KnownSolution.from_text("exp(x) + 1", "exp(x)", 1.0), spec)


def test_systems_unsupported():
    field = parse("y1; -y0", 2)
    known = KnownSolution.from_text("cos(x); -sin(x)", "-sin(x); -cos(x)", 1.0, dim=2)
    with pytest.raises(SystemsUnsupported):
        recover(field, known, GridSpec(0.0, (1.0, 0.0), n0=64, t_max=1.0))


@given(st.floats(0.2, 2.0), st.sampled_from([64, 256]))
def test_roundtrip_property(rate, n0):
    field = parse(f"{rate!r}*y", 1)
    known = KnownSolution.from_text(f"exp({rate!r}*x)", f"{rate!r}*exp({rate!r}*x)", 1.0)
    spec = GridSpec(0.0, (1.0,), n0=n0, t_max=1.0)
    pert = recover(field, known, spec)
    assert verify_roundtrip(field, known, pert, spec) <= 1e-10


def test_funnel_clusters():
    fun = funnel(parse("2*sqrt(abs(y))", 1), 0.0, 0.0, [ZeroRule(), ZeroRule(), ConstantRule(1e-3)], FAST)
    assert fun.clusters == [[0, 1], [2]]
    assert sup_distance(fun.solutions[0], fun.solutions[1]) == 0.0
    assert np.all(fun.solutions[0].values == 0.0)


def test_zero_solution_of_zero_field():
    field = parse("0", 1)
    known = KnownSolution.from_text("0", "0", 1.0)
    spec = GridSpec(0.0, (0.0,), n0=64, t_max=1.0)
    pert = recover(field, known, spec)
    assert np.all(pert.values == 0.0)
    np.testing.assert_array_equal(pert.t_values, np.arange(spec.budget) * spec.h)
