"""Rectilinear (one-dimensional) Lambert problem along a fixed ray.

Along the ray spanned by a unit vector ``direction`` the motion reduces to
r'' + delta(r) r' = -1/r^2 with delta(r) = D(r * direction). The map
v -> r(-T) for the backward solution with r(0) = r_B, r'(0) = v is strictly
decreasing on (-inf, beta) and maps onto (0, inf), so the boundary value
problem r(-T) = r_A has exactly one solution; it is found here by bisection
followed by a guarded Newton iteration.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels as K
from .errors import CollisionBeforeT
from .friction import FrictionField
from .integrator import DEFAULT_CONFIG, IntegratorConfig, Trajectory, _raise_failure, run_kernel
from .levi_civita import LCRun, _component_event, goursat_1d, integrate_lc_1d_backward


@dataclass(frozen=True)
class RadialProblem:
    field: FrictionField
    direction: np.ndarray
    r_A: float
    r_B: float
    T: float

    def __post_init__(self):
        d = np.asarray(self.direction, dtype=float)
        n = math.hypot(*d)
        if n == 0.0:
            raise ValueError("direction must be nonzero")
        object.__setattr__(self, "direction", d / n)
        if not (self.r_A > 0 and self.r_B > 0):
            raise ValueError("radii must be positive")
        if not self.T > 0:
            raise ValueError("T must be positive")

    def delta(self, r: float) -> float:
        return self.field.delta(r, self.direction)


@dataclass
class Reached:
    """The backward solution survives to -T with r(-T) = ``r``; ``dR_dv`` is
    the derivative of that endpoint with respect to the final speed (nan
    when the run had to pass through the regularized chart)."""

    r: float
    dR_dv: float
    trajectory: Trajectory
    lc: LCRun | None = None


@dataclass
class CollidedAt:
    t_col: float
    trajectory: Trajectory


def radial_flow(problem: RadialProblem, v: float, cfg: IntegratorConfig = DEFAULT_CONFIG):
    """Integrate backward from (r_B, v) and classify the outcome.

    Below ``cfg.r_collision`` the run continues in the regularized chart and
    a collision is declared only when u = sqrt(r) actually reaches zero.
    """
    if not math.isfinite(v):
        raise ValueError("v must be finite")
    T = problem.T
    if problem.r_B <= cfg.r_collision:
        return _lc_tail(problem, problem.r_B, v, 0.0, 0.0, T, None, cfg)
    y0 = np.array([problem.r_B, v, 0.0, 0.0, 1.0])
    traj, status, _ = run_kernel(
        K.RADIAL_VAR,
        problem.field,
        y0,
        T,
        cfg,
        aux=problem.direction,
        stop_events=[(K.EV_COMPONENT, 0, cfg.r_collision)],
    )
    _raise_failure(status, traj, "radial_flow")
    if status == K.REACHED_END:
        y = traj.final
        return Reached(float(y[0]), float(y[3]), traj)
    i = len(traj.steps) - 1
    tau, _ = traj.locate_root(i, *_component_event(0, cfg.r_collision))
    traj.truncate(i, tau - traj.tau[i])
    y = traj.final
    t_c = float(traj.nodes[-1])
    return _lc_tail(problem, float(y[0]), float(y[1]), t_c, float(y[2]), T + t_c, traj, cfg)


def _lc_tail(problem, r, rdot, t_c, Q, T_left, traj, cfg):
    h = 0.5 * rdot * rdot - 1.0 / r
    run = integrate_lc_1d_backward(problem.field, problem.direction, goursat_1d(r, rdot, h, t_c), T_left, cfg)
    if traj is None:
        traj = run.trajectory
    if run.reason == "collision":
        return CollidedAt(float(run.t_collision), traj)
    return Reached(run.state.r, math.nan, traj, run)


def _rmap(problem, v, cfg):
    """r(-T) with collisions mapped to 0, plus the outcome object."""
    out = radial_flow(problem, v, cfg)
    if isinstance(out, Reached):
        return out.r, out
    return 0.0, out


def _rmap_derivative(problem, v, out, cfg):
    if isinstance(out, Reached) and math.isfinite(out.dR_dv):
        return out.dR_dv
    h = 1e-6 * (1.0 + abs(v))
    rp, _ = _rmap(problem, v + h, cfg)
    rm, _ = _rmap(problem, v - h, cfg)
    return (rp - rm) / (2 * h)


def find_beta(problem: RadialProblem, tol: float = 1e-8, cfg: IntegratorConfig = DEFAULT_CONFIG, max_doublings: int = 200):
    """Bracket [v_lo, v_hi] of the collision threshold beta: the backward
    solution from (r_B, v_lo) reaches -T, the one from v_hi collides."""
    if not tol > 0:
        raise ValueError("tol must be positive")

    def reaches(v):
        return isinstance(radial_flow(problem, v, cfg), Reached)

    step = 1.0
    if reaches(0.0):
        lo, hi = 0.0, None
        for _ in range(max_doublings):
            if not reaches(step):
                hi = step
                break
            lo, step = step, 2 * step
    else:
        lo, hi = None, 0.0
        for _ in range(max_doublings):
            if reaches(-step):
                lo = -step
                break
            hi, step = -step, 2 * step
    if lo is None or hi is None:
        raise RuntimeError(f"could not bracket beta within {max_doublings} doublings; is the friction bounded?")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if reaches(mid):
            lo = mid
        else:
            hi = mid
    return lo, hi


@dataclass
class RadialSolution:
    v_final: float
    r_minus_T: float
    residual: float
    dR_dv: float
    trajectory: Trajectory
    beta_bracket: tuple
    iterations: int
    history: list = field(default_factory=list)

    @property
    def nondegenerate(self) -> bool:
        return self.dR_dv < 0.0


def solve_rectilinear(
    problem: RadialProblem,
    tol: float = 1e-11,
    cfg: IntegratorConfig = DEFAULT_CONFIG,
    bracket: tuple | None = None,
    max_iter: int = 200,
) -> RadialSolution:
    """Unique final speed v with r(-T) = r_A.

    ``bracket`` optionally seeds the search with (v_left, v_right); it is
    widened if it does not enclose the root.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    r_A = problem.r_A
    reached_max = -math.inf  # largest speed known to reach -T
    collided_min = math.inf  # smallest speed known to collide
    history = []

    def F(v):
        nonlocal reached_max, collided_min
        r, out = _rmap(problem, v, cfg)
        if isinstance(out, Reached):
            reached_max = max(reached_max, v)
        else:
            collided_min = min(collided_min, v)
        history.append((v, r))
        return r - r_A, out

    # F is decreasing in v; find left with F > 0 and right with F < 0
    if bracket is not None:
        left, right = map(float, bracket)
    else:
        left = right = 0.0
    f_left, out_left = F(left)
    f_right, out_right = (f_left, out_left) if right == left else F(right)
    step = max(1.0, right - left)
    for _ in range(400):
        if f_left > 0:
            break
        right, f_right, out_right = left, f_left, out_left
        left -= step
        step *= 2
        f_left, out_left = F(left)
    else:
        raise RuntimeError("failed to bracket the rectilinear root from the left")
    step = max(1.0, right - left)
    for _ in range(400):
        if f_right < 0 or (f_right == 0 and isinstance(out_right, Reached)):
            break
        left, f_left, out_left = right, f_right, out_right
        right += step
        step *= 2
        f_right, out_right = F(right)
    else:
        raise RuntimeError("failed to bracket the rectilinear root from the right")

    # bisection down to a modest width
    it = 0
    while right - left > 1e-3 * (1.0 + abs(left)) and it < max_iter:
        mid = 0.5 * (left + right)
        fm, om = F(mid)
        if fm > 0:
            left, f_left, out_left = mid, fm, om
        else:
            right, f_right, out_right = mid, fm, om
        it += 1

    # Newton polish, falling back to bisection whenever it leaves the bracket
    v = left if abs(f_left) < abs(f_right) or not isinstance(out_right, Reached) else right
    fv, out = (f_left, out_left) if v == left else (f_right, out_right)
    while it < max_iter:
        it += 1
        if isinstance(out, Reached) and abs(fv) <= tol:
            break
        d = _rmap_derivative(problem, v, out, cfg) if isinstance(out, Reached) else math.nan
        cand = v - fv / d if d < 0 else math.nan
        if not (left < cand < right):
            cand = 0.5 * (left + right)
        if cand == v or right - left <= 4 * np.finfo(float).eps * (1 + abs(v)):
            break
        v = cand
        fv, out = F(v)
        if fv > 0:
            left = v
        else:
            right = v
    if not isinstance(out, Reached):
        raise RuntimeError("rectilinear solver ended on a colliding trial")
    dR = _rmap_derivative(problem, v, out, cfg)
    return RadialSolution(
        v_final=float(v),
        r_minus_T=r_A + fv,
        residual=abs(fv),
        dR_dv=float(dR),
        trajectory=out.trajectory,
        beta_bracket=(reached_max, collided_min),
        iterations=it,
        history=history,
    )


def rectilinear_collision_check(problem: RadialProblem, v: float, cfg: IntegratorConfig = DEFAULT_CONFIG):
    """Raise :class:`CollisionBeforeT` if the rectilinear backward solution
    from (r_B, v) reaches the origin before -T."""
    out = radial_flow(problem, v, cfg)
    if isinstance(out, CollidedAt):
        raise CollisionBeforeT(f"collision at t={out.t_col:.6g} before -T", out.t_col)
    return out
