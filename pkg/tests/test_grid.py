import io

import numpy as np
import pytest
from hypothesis import given, strategies as st

from shadow_ode.expr import parse
from shadow_ode.grid import (
    ConstantRule,
    GridSpec,
    Perturbation,
    SampledRule,
    StopReason,
    ZeroRule,
    check_bound,
    integrate,
    parse_rule,
    replay,
)
from shadow_ode.errors import DomainError


def test_gridspec_budget_and_step():
    s = GridSpec(0.0, (1.0,), n0=4, j=2, t_max=1.5)
    assert s.N == 16 and s.h == 1 / 16
    assert s.budget == 24
    # budget never exceeds N^2
    assert GridSpec(0.0, (1.0,), n0=2, j=0, t_max=10.0).budget == 4
    with pytest.raises(ValueError):
        GridSpec(0.0, (1.0,), n0=3)


def test_euler_linear_closed_form():
    # y' = y with h = 1/4: y_k = (5/4)^k exactly
    traj = integrate(parse("y", 1), GridSpec(0.0, (1.0,), n0=4, t_max=1.0))
    assert traj.stop_reason is StopReason.BUDGET_EXHAUSTED
    np.testing.assert_array_equal(traj.ys[:, 0], 1.25 ** np.arange(5))
    np.testing.assert_array_equal(traj.xs, np.arange(5) / 4)


def test_constant_perturbation_is_shifted_field():
    spec = GridSpec(0.0, (0.0,), n0=64, t_max=1.0)
    a = integrate(parse("0", 1), spec, ConstantRule(0.1).realize(spec))
    np.testing.assert_allclose(a.ys[:, 0], 0.1 * a.xs, atol=1e-14)
    b = integrate(parse("y + 0.1", 1), GridSpec(0.0, (1.0,), n0=64, t_max=1.0))
    c = integrate(parse("y", 1), GridSpec(0.0, (1.0,), n0=64, t_max=1.0),
                  ConstantRule(0.1).realize(spec))
    np.testing.assert_array_equal(b.ys, c.ys)


def test_escape_and_nonfinite():
    traj = integrate(parse("y*y", 1), GridSpec(0.0, (1.0,), n0=256, t_max=2.0), escape_radius=100.0)
    assert traj.stop_reason is StopReason.ESCAPED
    assert abs(traj.ys[-1, 0]) > 100.0
    assert np.all(np.abs(traj.ys[:-1, 0]) <= 100.0)
    # Euler lags 1/(1-x), so the escape lands just past the pole
    assert 0.95 < traj.x_stop < 1.05


def test_domain_error_modes():
    f = parse("sqrt(1 - x) * 0 + log(1 - x)", 1)
    spec = GridSpec(0.0, (0.0,), n0=4, t_max=2.0)
    with pytest.raises(DomainError) as info:
        integrate(f, spec)
    assert info.value.index == 4
    traj = integrate(f, spec, on_domain_error="stop")
    assert traj.stop_reason is StopReason.DOMAIN_ERROR and traj.k_stop == 4


def test_backward_direction():
    traj = integrate(parse("y", 1), GridSpec(0.0, (1.0,), n0=4, t_max=1.0, direction=-1))
    np.testing.assert_array_equal(traj.ys[:, 0], 0.75 ** np.arange(5))
    assert traj.xs[-1] == -1.0


def test_system_oscillator_energy_growth():
    # explicit Euler multiplies y0^2 + y1^2 by 1 + h^2 each step
    spec = GridSpec(0.0, (1.0, 0.0), n0=8, t_max=1.0)
    traj = integrate(parse("y1; -y0", 2), spec)
    energy = np.sum(traj.ys**2, axis=1)
    np.testing.assert_allclose(energy, (1 + 1 / 64) ** np.arange(9), rtol=1e-14)


def test_rules_and_parse_rule():
    spec = GridSpec(0.0, (0.0,), n0=16, j=1, t_max=1.0)
    assert parse_rule("zero") == ZeroRule()
    assert parse_rule("const:1e-3") == ConstantRule(1e-3)
    r = parse_rule("random:0.5:7")
    assert isinstance(r, SampledRule)
    p = r.realize(spec)
    assert p.values.shape == (spec.budget, 1)
    assert p.eps_max <= 0.5 * 2**-1
    np.testing.assert_array_equal(p.values, r.realize(spec).values)
    for bad in ("", "const:", "const:x", "foo:1", "random:-1"):
        with pytest.raises(ValueError):
            parse_rule(bad)


def test_csv_schema():
    traj = integrate(parse("y1; -y0", 2), GridSpec(0.0, (1.0, 0.0), n0=2, t_max=1.0))
    buf = io.StringIO()
    traj.to_csv(buf)
    lines = buf.getvalue().splitlines()
    assert lines[0] == "k,x,y0,y1"
    assert lines[1] == "0,0.0,1.0,0.0"
    assert len(lines) == 4


def test_bound_certificate():
    f = parse("y", 1)
    traj = integrate(f, GridSpec(0.0, (1.0,), n0=1024, t_max=1.0))
    cert = check_bound(traj, 0, f)
    assert cert.satisfied and cert.failure is None
    assert cert.e == pytest.approx(min(cert.c, cert.d / (cert.M + 1)))
    # a bound M that is too small must be caught
    bad = check_bound(traj, 0, f, M=0.5)
    assert not bad.satisfied and bad.failure == "BoundViolation"


def test_bound_certificate_region_escape():
    f = parse("y*y", 1)
    traj = integrate(f, GridSpec(0.0, (1.0,), n0=1024, t_max=0.99))
    # understated M widens the window e until y leaves [0, 2]
    cert = check_bound(traj, 0, f, c=0.99, d=1.0, M=0.5)
    assert not cert.satisfied and cert.failure == "RegionEscape"


# -- properties ---------------------------------------------------------------


@given(
    st.floats(-2, 2), st.floats(-2, 2), st.sampled_from([4, 8, 16, 32]),
    st.lists(st.floats(-0.1, 0.1), min_size=1, max_size=40),
)
def test_recursion_identity(x0, y0, n0, eps):
    """Every stored step satisfies y_{k+1} = y_k + (F(x_k, y_k) + eps_k) h exactly."""
    f = parse("sin(x) - y/2", 1)
    spec = GridSpec(x0, (y0,), n0=n0, t_max=1.0)
    pert = Perturbation.sampled(np.resize(np.array(eps), (spec.budget, 1)))
    traj = integrate(f, spec, pert)
    for k in range(len(traj.ks) - 1):
        x, y = traj.xs[k], traj.ys[k, 0]
        step = f.evaluate(x, (y,))[0] + pert.values[k, 0]
        assert traj.ys[k + 1, 0] == y + step * spec.h


@given(st.floats(-1, 1), st.sampled_from([8, 64]), st.integers(0, 3))
def test_replay_is_bit_identical(y0, n0, seed):
    f = parse("y*y - x", 1)
    spec = GridSpec(0.0, (y0,), n0=n0, t_max=1.0)
    traj = integrate(f, spec, SampledRule(0.01, seed).realize(spec), escape_radius=50.0)
    again = replay(f, traj)
    np.testing.assert_array_equal(traj.ys, again.ys)
    assert traj.stop_reason == again.stop_reason


@given(st.floats(1.5, 50.0), st.floats(1.5, 50.0))
def test_escape_is_monotone_in_radius(r1, r2):
    lo, hi = sorted((r1, r2))
    f = parse("y*y", 1)
    spec = GridSpec(0.0, (1.0,), n0=128, t_max=2.0)
    a, b = integrate(f, spec, escape_radius=lo), integrate(f, spec, escape_radius=hi)
    assert a.k_stop <= b.k_stop
