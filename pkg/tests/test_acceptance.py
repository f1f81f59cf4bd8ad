"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line."""

import math
import time

import numpy as np
import pytest
from scipy.optimize import brentq

from lambertdrag.dynamics import State
from lambertdrag.friction import FrictionField
from lambertdrag.integrator import integrate_backward, warm_up
from lambertdrag.lambert import LambertProblem, solve
from lambertdrag.levi_civita import (
    collision_time,
    extended_position_map,
    goursat_1d,
    goursat_planar,
    integrate_lc_1d_backward,
    integrate_lc_planar_backward,
    lc_to_physical,
)
from lambertdrag.oracle import lambert_universal, propagate_universal
from lambertdrag.rectilinear import CollidedAt, RadialProblem, Reached, find_beta, radial_flow, solve_rectilinear

from conftest import CBRT_9_2

R_A_PARABOLIC = CBRT_9_2 * 0.5 ** (2 / 3)
V_PARABOLIC = (2 / 3) * CBRT_9_2


def verdict(capsys, n, ok, detail):
    with capsys.disabled():
        print(f"\nCRITERION {n}: {'PASS' if ok else 'FAIL'} {detail}")
    assert ok, detail


def h_nonincreasing(traj):
    d = traj.diagnostics
    order = np.argsort(d.t, kind="stable")
    h = d.h[order]
    return bool(np.all(np.diff(h) <= 1e-9 * (1.0 + np.abs(h[:-1]))))


def p_bounds_ok(traj, d_star):
    d = traj.diagnostics
    return bool(np.all(d.p <= 1.0 + 1e-12) and np.all(d.p >= np.exp(d_star * d.t) * (1.0 - 1e-12)))


def sign_c_constant(traj):
    c = traj.diagnostics.c
    return bool(np.all(c > 0) or np.all(c < 0))


@pytest.fixture(scope="module", autouse=True)
def compiled_kernels():
    # compile the kernels before any timed section
    warm_up()


@pytest.fixture(scope="module")
def c1():
    problem = LambertProblem((1, 0), (0, 1), math.pi / 2)
    t0 = time.perf_counter()
    res = solve(problem)
    return res, time.perf_counter() - t0


@pytest.fixture(scope="module")
def c2():
    p = RadialProblem(FrictionField.zero(), (1, 0), R_A_PARABOLIC, CBRT_9_2, 0.5)
    a = solve_rectilinear(p, bracket=(-5.0, -4.0))
    b = solve_rectilinear(p, bracket=(1.5, 1.6))
    planar = solve(LambertProblem((R_A_PARABOLIC, 0), (CBRT_9_2, 0), 0.5))
    return a, b, planar


def random_geometry(rng):
    """Endpoints and a flight time above the parabolic one for both senses."""
    while True:
        a, b = rng.uniform(0, 2 * math.pi, 2)
        dth = (b - a) % (2 * math.pi)
        if min(dth, 2 * math.pi - dth) < 0.1:
            continue
        rA, rB = rng.uniform(0.5, 3, 2)
        A = rA * np.array([math.cos(a), math.sin(a)])
        B = rB * np.array([math.cos(b), math.sin(b)])
        chord = math.hypot(*(B - A))
        s = 0.5 * (rA + rB + chord)
        # parabolic flight time of the long-way transfer bounds both senses
        t_par = math.sqrt(2) / 3 * (s**1.5 + (s - chord) ** 1.5)
        return A, B, t_par * rng.uniform(1.1, 3.0)


@pytest.fixture(scope="module")
def c3():
    rng = np.random.default_rng(3)
    cases = [random_geometry(rng) for _ in range(50)]
    t0 = time.perf_counter()
    results = [solve(LambertProblem(A, B, T)) for A, B, T in cases]
    return cases, results, time.perf_counter() - t0


def test_criterion_1_circular(capsys, c1):
    res, elapsed = c1
    arcs = {a.direction: a for a in res}
    ccw, cw = arcs.get("ccw"), arcs.get("cw")
    ok = (
        ccw is not None
        and cw is not None
        and np.abs(ccw.v0 - (-1, 0)).max() < 1e-8
        and abs(abs(cw.swept) - 1.5 * math.pi) < 1e-8
        and cw.residual_position < 1e-8
        and elapsed < 1.0
    )
    detail = f"ccw v0={ccw.v0 if ccw else None} cw swept={cw.swept if cw else None} t={elapsed:.3f}s"
    verdict(capsys, 1, ok, detail)


def test_criterion_2_rectilinear(capsys, c2):
    a, b, planar = c2
    arc = planar[0]
    ok = (
        abs(a.v_final - V_PARABOLIC) < 1e-8
        and abs(a.v_final - b.v_final) < 1e-7
        and len(planar) == 1
        and abs(arc.v0[0] - V_PARABOLIC) < 1e-8
    )
    verdict(capsys, 2, ok, f"v={a.v_final:.12f} brackets differ by {abs(a.v_final - b.v_final):.2e}")


def test_criterion_3_oracle(capsys, c3):
    cases, results, elapsed = c3
    worst_v, worst_x, missing = 0.0, 0.0, 0
    for (A, B, T), res in zip(cases, results):
        got = {a.direction: a.v0 for a in res}
        for d in ("ccw", "cw"):
            if d not in got:
                missing += 1
                continue
            worst_v = max(worst_v, float(np.abs(got[d] - lambert_universal(A, B, T, d)).max()))
            x, _ = propagate_universal(B, got[d], -T)
            worst_x = max(worst_x, math.hypot(*(x - A)) / math.hypot(*A))
    ok = missing == 0 and worst_v < 1e-6 and worst_x < 1e-7 and elapsed < 60
    verdict(capsys, 3, ok, f"missing={missing} max|dv|={worst_v:.2e} max rel miss={worst_x:.2e} t={elapsed:.1f}s")


def test_criterion_4_energy(capsys, c1, c2, c3):
    trajs = [a.trajectory for a in c1[0]] + [a.trajectory for a in c2[2]]
    trajs += [a.trajectory for res in c3[1] for a in res]
    rng = np.random.default_rng(4)
    for _ in range(20):
        f = FrictionField.constant(rng.uniform(0, 0.5))
        x = rng.uniform(0.7, 2.0) * np.array([1.0, 0.0])
        v = rng.uniform(-0.6, 0.6, 2) + np.array([0, 0.8])
        trajs.append(integrate_backward(f, State(x, v), rng.uniform(0.5, 4)))
    monotone = sum(h_nonincreasing(t) for t in trajs)

    drift = 0.0
    for x, v in [((1, 0), (0, 1)), ((1, 0), (0, 1.3)), ((0.6, 0.2), (-0.4, 1.1))]:
        d = integrate_backward(FrictionField.zero(), State(x, v), 2 * math.pi).diagnostics
        drift = max(drift, float(np.ptp(d.h) / (1 + abs(d.h[0]))))
    ok = monotone == len(trajs) and drift < 1e-9
    verdict(capsys, 4, ok, f"monotone {monotone}/{len(trajs)} runs, zero-field drift {drift:.2e}")


def test_criterion_5_invariants(capsys, c1, c3):
    rng = np.random.default_rng(5)
    p_ok = sign_ok = total = 0
    for _ in range(20):
        f = FrictionField.constant(rng.uniform(0, 0.5))
        x = rng.uniform(0.7, 2.0) * np.array([math.cos(rng.uniform(0, 6)), math.sin(rng.uniform(0, 6))])
        v = rng.uniform(-1, 1, 2)
        traj = integrate_backward(f, State(x, v), rng.uniform(0.5, 3))
        total += 1
        p_ok += p_bounds_ok(traj, f.d_star)
        sign_ok += sign_c_constant(traj)
    for res in [c1[0]] + c3[1]:
        for a in res:
            total += 1
            p_ok += p_bounds_ok(a.trajectory, 0.0)
            sign_ok += sign_c_constant(a.trajectory)
    traj = integrate_backward(FrictionField.constant(0.1), State((1.2, 0.1), (0.2, 0.9)), 1.0)
    ratio_err = abs(traj.state(-1.0).c / traj.state(0.0).c - math.exp(0.1))
    ok = p_ok == total and sign_ok == total and ratio_err < 1e-8
    verdict(capsys, 5, ok, f"p-bounds {p_ok}/{total}, sign(c) {sign_ok}/{total}, c ratio error {ratio_err:.2e}")


def collision_ratio_error(field, d=1e-4):
    run = collision_time(field, (1, 0), 1.0, math.sqrt(2))
    alpha = run.t_collision
    traj = run.trajectory
    s = brentq(lambda s: traj(s)[3] - (alpha + d), traj.nodes[-1], traj.nodes[0], xtol=1e-15)
    u = traj(s)[0]
    return abs(u * u / d ** (2 / 3) - CBRT_9_2)


def test_criterion_6_collision_asymptotics(capsys):
    errs = [collision_ratio_error(FrictionField.zero()), collision_ratio_error(FrictionField.constant(0.2))]
    verdict(capsys, 6, max(errs) < 1e-3, f"ratio errors at t-alpha=1e-4: D=0 {errs[0]:.2e}, D=0.2 {errs[1]:.2e}")


def planar_residuals(traj, s_limit=50.0):
    S, Y = traj.nodes, traj.states
    keep = np.abs(S) <= s_limit
    res = 2 * (Y[:, 2] ** 2 + Y[:, 3] ** 2) - Y[:, 4] * (Y[:, 0] ** 2 + Y[:, 1] ** 2) - 1
    return float(np.abs(res[keep]).max()), float(np.abs(S).max())


def test_criterion_7_manifold(capsys):
    zero = FrictionField.zero()
    circ, s_circ = planar_residuals(integrate_lc_planar_backward(zero, goursat_planar((1, 0), (0, 1)), 60.0).trajectory)
    bounce, s_bounce = planar_residuals(
        integrate_lc_planar_backward(zero, goursat_planar((1, 0), (0.5, 0)), 200.0).trajectory
    )
    # backward in time the damped bounce escapes, so it only reaches |s| ~ 16
    damped, _ = planar_residuals(
        integrate_lc_planar_backward(FrictionField.constant(0.1), goursat_planar((1, 0), (0.5, 0)), 60.0).trajectory
    )
    run1d = integrate_lc_1d_backward(zero, (1, 0), goursat_1d(1.0, 0.5, -0.875), 200.0, stop_at_collision=False)
    S, Y = run1d.trajectory.nodes, run1d.trajectory.states
    keep = np.abs(S) <= 50
    res1d = float(np.abs(2 * Y[keep, 1] ** 2 - Y[keep, 2] * Y[keep, 0] ** 2 - 1).max())
    covered = min(s_circ, s_bounce, float(np.abs(S).max())) >= 50
    worst = max(circ, bounce, damped, res1d)

    f = FrictionField.constant(0.1)
    cross = 0.0
    for x, v in [((1, 0.2), (0.3, 0.8)), ((1.5, 0), (0.1, 0.6)), ((0.4, -0.9), (0.9, 0.2))]:
        for T in (0.5, 1.0, 2.0, 3.0):
            cart = integrate_backward(f, State(x, v), T)
            if cart.terminal.kind != "reached_target":
                continue
            lc = lc_to_physical(integrate_lc_planar_backward(f, goursat_planar(x, v), T).state)
            cross = max(cross, float(np.abs(lc.x - cart.final[:2]).max()), float(np.abs(lc.xdot - cart.final[2:4]).max()))
    ok = covered and worst < 1e-8 and cross < 1e-7
    verdict(capsys, 7, ok, f"max manifold residual {worst:.2e} (|s|<=50 covered: {covered}), chart agreement {cross:.2e}")


def test_criterion_8_extended_map(capsys):
    f = FrictionField.constant(0.1)
    rng = np.random.default_rng(8)
    worst_cross = worst_branch = 0.0
    for _ in range(50):
        a = rng.uniform(0, 2 * math.pi)
        u = np.array([math.cos(a), math.sin(a)])
        r, speed = rng.uniform(0.3, 2.5), rng.uniform(0.1, 2.0)
        alpha = collision_time(f, u, r, speed).t_collision
        T = -alpha * rng.uniform(1.05, 3.0)
        p = extended_position_map(f, r * u, speed * u, T, branch=1)
        m = extended_position_map(f, r * u, speed * u, T, branch=-1)
        worst_cross = max(worst_cross, abs(u[0] * p[1] - u[1] * p[0]))
        worst_branch = max(worst_branch, float(np.abs(p - m).max()))
    back = extended_position_map(FrictionField.zero(), (1, 0), (math.sqrt(2), 0), 2 * math.sqrt(2) / 3)
    bounce_err = abs(math.hypot(*back) - 1.0)
    ok = worst_cross < 1e-9 and worst_branch < 1e-10 and bounce_err < 1e-8
    detail = f"cross {worst_cross:.2e}, branch gap {worst_branch:.2e}, bounce return error {bounce_err:.2e}"
    verdict(capsys, 8, ok, detail)


@pytest.mark.slow
def test_criterion_9_existence_grid(capsys):
    angles = np.linspace(0.1, math.pi - 0.1, 10)
    times = np.linspace(0.5, 5.0, 10)
    t0 = time.perf_counter()
    lines, ok = [], True
    for D in (0.0, 0.1, 0.3):
        f = FrictionField.constant(D)
        counts = {"ccw": 0, "cw": 0}
        bad_arcs = 0
        for phi in angles:
            for T in times:
                res = solve(LambertProblem((1, 0), (1.5 * math.cos(phi), 1.5 * math.sin(phi)), T, f))
                for a in res:
                    counts[a.direction] += 1
                    good = (
                        abs(a.swept) < 2 * math.pi
                        and h_nonincreasing(a.trajectory)
                        and p_bounds_ok(a.trajectory, f.d_star)
                        and sign_c_constant(a.trajectory)
                    )
                    bad_arcs += not good
                for d, exc in res.failures.items():
                    tail = getattr(exc, "trace", None)
                    with capsys.disabled():
                        print(f"\n  stalled: D={D} phi={phi:.4f} T={T:.3f} {d}: {exc}")
                        if tail is not None:
                            print(f"  trace tail: {tail.tail(3)}")
        cells = len(angles) * len(times)
        ok &= min(counts.values()) >= 0.95 * cells and bad_arcs == 0
        lines.append(f"D={D}: ccw {counts['ccw']}/{cells} cw {counts['cw']}/{cells} invariant failures {bad_arcs}")
    elapsed = time.perf_counter() - t0
    ok &= elapsed < 600
    verdict(capsys, 9, ok, "; ".join(lines) + f"; t={elapsed:.1f}s")


def test_criterion_10_monotone_map(capsys):
    details, ok = [], True
    for D in (0.0, 0.2):
        p = RadialProblem(FrictionField.constant(D), (1, 0), 1.0, 1.0, 1.0)
        lo, hi = find_beta(p)
        vs = np.linspace(lo - 5.0, lo, 50)
        outs = [radial_flow(p, v) for v in vs]
        reached = all(isinstance(o, Reached) for o in outs)
        decreasing = reached and bool(np.all(np.diff([o.r for o in outs]) < 0))
        collides = isinstance(radial_flow(p, hi), CollidedAt)
        ok &= reached and decreasing and collides
        details.append(f"D={D}: beta in [{lo:.8f}, {hi:.8f}] decreasing={decreasing} v_hi collides={collides}")
    verdict(capsys, 10, ok, "; ".join(details))
