import math

import numpy as np
import pytest

from lambertdrag.friction import FrictionField
from lambertdrag.rectilinear import (
    CollidedAt,
    RadialProblem,
    Reached,
    find_beta,
    radial_flow,
    solve_rectilinear,
)

from conftest import CBRT_9_2

R_A_PARABOLIC = CBRT_9_2 * 0.5 ** (2 / 3)
V_PARABOLIC = (2 / 3) * CBRT_9_2


def problem(D=0.0, r_A=1.0, r_B=1.0, T=1.0, direction=(1, 0)):
    f = FrictionField.constant(D) if D else FrictionField.zero()
    return RadialProblem(f, direction, r_A, r_B, T)


def test_problem_validation():
    with pytest.raises(ValueError):
        problem(T=0)
    with pytest.raises(ValueError):
        problem(r_A=-1)
    np.testing.assert_allclose(problem(direction=(0, 3)).direction, (0, 1))


def test_flow_parabolic():
    out = radial_flow(problem(r_B=CBRT_9_2, T=0.5), V_PARABOLIC)
    assert isinstance(out, Reached)
    assert out.r == pytest.approx(R_A_PARABOLIC, abs=1e-9)
    assert out.dR_dv < 0


def test_flow_large_negative_speed():
    p = problem()
    rs = [radial_flow(p, v).r for v in (-2.0, -5.0, -10.0)]
    assert rs[0] < rs[1] < rs[2]
    assert rs[2] > 10
    assert radial_flow(p, -1e3).r > 1e2


def test_flow_outgoing_collides():
    out = radial_flow(problem(), 10.0)
    assert isinstance(out, CollidedAt)
    assert -1 < out.t_col < 0


def test_flow_derivative_matches_differences():
    p = problem(D=0.2, T=1.5)
    v, h = -0.4, 1e-6
    d = radial_flow(p, v).dR_dv
    fd = (radial_flow(p, v + h).r - radial_flow(p, v - h).r) / (2 * h)
    assert d == pytest.approx(fd, rel=1e-6)


def test_find_beta_zero_field():
    p = problem()
    lo, hi = find_beta(p, tol=1e-8)
    assert 0 < hi - lo <= 1e-8
    assert isinstance(radial_flow(p, lo), Reached)
    assert isinstance(radial_flow(p, hi), CollidedAt)
    assert radial_flow(p, lo).r < 0.1


def test_find_beta_small_time():
    lo, _ = find_beta(problem(T=1e-3), tol=1e-6)
    assert lo > 10


def test_find_beta_constant_field_membership():
    p = problem(D=0.1)
    lo, hi = find_beta(p, tol=1e-8)
    assert math.isfinite(hi)
    for v in np.linspace(lo - 3, lo, 12)[:-1]:
        assert isinstance(radial_flow(p, v), Reached)


def test_solve_parabolic():
    sol = solve_rectilinear(problem(r_A=R_A_PARABOLIC, r_B=CBRT_9_2, T=0.5))
    assert sol.v_final == pytest.approx(V_PARABOLIC, abs=1e-8)
    assert sol.residual <= 1e-11
    assert sol.nondegenerate


def test_solve_independent_brackets_agree():
    p = problem(r_A=R_A_PARABOLIC, r_B=CBRT_9_2, T=0.5)
    a = solve_rectilinear(p, bracket=(-5.0, -4.0))
    b = solve_rectilinear(p, bracket=(1.5, 1.6))
    assert abs(a.v_final - b.v_final) <= 1e-10


def test_solve_symmetric_short_time():
    p = problem(T=0.1)
    sol = solve_rectilinear(p)
    assert radial_flow(p, sol.v_final).r == pytest.approx(1.0, abs=1e-9)
    # leading order of the up-and-down free fall: the arrival speed is -T / (2 r^2)
    sol3 = solve_rectilinear(problem(T=1e-3))
    assert sol3.v_final == pytest.approx(-0.5e-3, rel=1e-3)


def test_solve_constant_friction():
    p = problem(D=0.2, r_A=2.0, r_B=1.0, T=1.0, direction=(0, 1))
    sol = solve_rectilinear(p)
    assert abs(radial_flow(p, sol.v_final).r - 2.0) < 1e-9
    assert sol.dR_dv < 0
    lo, hi = sol.beta_bracket
    assert lo <= hi


@pytest.mark.parametrize("D", [0.0, 0.2, 0.5])
def test_map_is_strictly_decreasing(D):
    p = problem(D=D)
    lo, _ = find_beta(p, tol=1e-6)
    vs = np.linspace(lo - 4, lo, 25)
    rs = [radial_flow(p, v).r for v in vs]
    assert np.all(np.diff(rs) < 0)


def test_solutions_intersect_at_most_once(rng):
    f = FrictionField.constant(0.15)
    p = RadialProblem(f, (1, 0), 1.0, 1.0, 2.0)
    for _ in range(6):
        v1, v2 = rng.uniform(-2.0, 0.0, 2)
        o1, o2 = radial_flow(p, v1), radial_flow(p, v2)
        if not (isinstance(o1, Reached) and isinstance(o2, Reached)) or o1.lc or o2.lc:
            continue
        t = np.linspace(-2.0, 0.0, 2001)
        r1, r2 = o1.trajectory(t)[:, 0], o2.trajectory(t)[:, 0]
        diff = r1 - r2
        s = np.sign(diff[np.abs(diff) > 1e-12])
        assert np.count_nonzero(np.diff(s)) <= 1
