import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lambertdrag.dynamics import State, diagnostics, rhs_cartesian, rhs_with_variational
from lambertdrag.errors import DomainError, StepTooLarge
from lambertdrag.friction import FrictionField
from lambertdrag.integrator import integrate_backward, integrate_variational_backward


@pytest.mark.parametrize(
    "field, x, v, acc",
    [
        (FrictionField.zero(), (1, 0), (0, 1), (-1, 0)),
        (FrictionField.constant(0.1), (1, 0), (0, 1), (-1, -0.1)),
        (FrictionField.zero(), (2, 0), (0, 0), (-0.25, 0)),
    ],
)
def test_rhs_examples(field, x, v, acc):
    xd, xdd = rhs_cartesian(field, State(x, v))
    np.testing.assert_allclose(xd, v)
    np.testing.assert_allclose(xdd, acc, atol=1e-15)


def test_state_rejects_origin():
    with pytest.raises(DomainError):
        State((0, 0), (1, 0))


def test_variational_rhs_circular():
    s = State((1, 0), (0, 1))
    W = np.array([[1.0, 0.0], [0.0, 0.0]])
    _, _, dW, dWdot = rhs_with_variational(FrictionField.zero(), s, W, np.zeros((2, 2)))
    np.testing.assert_allclose(dWdot[:, 0], (2, 0))
    np.testing.assert_allclose(dW, 0.0)


@given(
    x=st.tuples(st.floats(0.2, 3), st.floats(-3, 3)),
    v=st.tuples(st.floats(-2, 2), st.floats(-2, 2)),
)
@settings(max_examples=30, deadline=None)
def test_variational_rhs_is_linear_and_vanishes_at_zero(x, v):
    f = FrictionField.radial_exp(0.3, 0.7)
    s = State(x, v)
    _, _, dW, dWdot = rhs_with_variational(f, s, np.zeros((2, 2)), np.zeros((2, 2)))
    assert np.all(dW == 0) and np.all(dWdot == 0)
    W = np.array([[0.3, -1.0], [0.2, 0.5]])
    _, _, _, a = rhs_with_variational(f, s, W, np.zeros((2, 2)))
    _, _, _, b = rhs_with_variational(f, s, 2 * W, np.zeros((2, 2)))
    np.testing.assert_allclose(b, 2 * a, rtol=1e-12, atol=1e-14)


def test_variational_flow_matches_differences():
    f = FrictionField.constant(0.1)
    s = State((1, 0), (0, 1))
    _, J = integrate_variational_backward(f, s, np.eye(2), 1.0)
    h = 1e-6
    fd = np.empty((2, 2))
    for j in range(2):
        e = np.zeros(2)
        e[j] = h
        p = integrate_backward(f, State(s.x, s.xdot + e), 1.0).final[:2]
        m = integrate_backward(f, State(s.x, s.xdot - e), 1.0).final[:2]
        fd[:, j] = (p - m) / (2 * h)
    np.testing.assert_allclose(J, fd, atol=1e-5)


@pytest.mark.parametrize(
    "x, v, expect",
    [
        ((1, 0), (0, 1), dict(r=1, c=1, h=-0.5, v_pot=-0.5)),
        ((0, 2), (0, 1), dict(r=2, c=0, h=0, rdot=1)),
        ((1, 1), (-1, 1), dict(r=math.sqrt(2), c=2, h=1 - 1 / math.sqrt(2))),
    ],
)
def test_diagnostics_examples(x, v, expect):
    d = diagnostics(FrictionField.zero(), State(x, v))
    for k, val in expect.items():
        assert getattr(d, k) == pytest.approx(val, abs=1e-15)
    assert d.h_polar == pytest.approx(d.h, rel=1e-10, abs=1e-15)


def test_diagnostics_lift_and_guard():
    f = FrictionField.zero()
    d = diagnostics(f, State((-1, -1e-3), (0, 1)), theta_prev=3.1)
    assert d.theta == pytest.approx(2 * math.pi - math.pi + 1e-3, abs=1e-6)
    with pytest.raises(StepTooLarge):
        diagnostics(f, State((0, -1), (1, 0)), theta_prev=0.5)


@given(
    x=st.tuples(st.floats(0.1, 5), st.floats(-5, 5)),
    v=st.tuples(st.floats(-3, 3), st.floats(-3, 3)),
)
@settings(max_examples=50)
def test_polar_energy_agrees(x, v):
    d = diagnostics(FrictionField.zero(), State(x, v))
    assert d.h_polar == pytest.approx(d.h, rel=1e-10, abs=1e-12)


def test_angular_momentum_decay_constant_field():
    f = FrictionField.constant(0.1)
    traj = integrate_backward(f, State((1, 0), (0, 1)), 1.0)
    c = traj.diagnostics.c
    assert c[-1] / c[0] == pytest.approx(math.exp(0.1), abs=1e-8)
    assert np.all(np.sign(c) == 1)


def test_energy_monotone_and_p_bounds():
    f = FrictionField.radial_exp(0.4, 0.5)
    traj = integrate_backward(f, State((1.2, 0.3), (-0.2, 0.9)), 4.0)
    d = traj.diagnostics
    order = np.argsort(d.t)
    h = d.h[order]
    assert np.all(np.diff(h) <= 1e-9 * (1 + np.abs(h[:-1])))
    assert np.all(d.p <= 1.0)
    assert np.all(d.p >= np.exp(f.d_star * d.t) * (1 - 1e-12))
