"""Planar Lambert solver for the damped Kepler problem.

The final velocity v0 at B is found by shooting backward over [-T, 0] and
asking that the polar endpoint (r, theta)(-T) equal (r_A, theta_A). The
start is the rectilinear solution on the ray of B; the target angle is then
moved from theta_B to theta_A (lifted according to the requested rotation
sense) by predictor-corrector continuation.

Example
-------
>>> from lambertdrag import FrictionField, LambertProblem, solve
>>> res = solve(LambertProblem((1, 0), (0, 1), 1.5708, FrictionField.constant(0.1)))
>>> [arc.direction for arc in res]
['ccw', 'cw']
"""

from __future__ import annotations

import cmath
import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .dynamics import State
from .errors import (
    CollisionBeforeT,
    ContinuationStalled,
    IntegrationError,
    VelocityUndefined,
)
from .friction import FrictionField
from .integrator import DEFAULT_CONFIG, IntegratorConfig, Trajectory, integrate_variational_backward
from .levi_civita import LCRun, goursat_planar, integrate_lc_planar_backward
from .rectilinear import RadialProblem, RadialSolution, rectilinear_collision_check, solve_rectilinear

TWO_PI = 2 * math.pi
SAME_RAY_ANGLE = 1e-12
NEAR_RAY_ANGLE = 1e-6


class Direction(str, enum.Enum):
    CW = "cw"
    CCW = "ccw"
    AUTO = "auto"


@dataclass(frozen=True)
class LambertProblem:
    A: np.ndarray
    B: np.ndarray
    T: float
    field: FrictionField = field(default_factory=FrictionField.zero)
    direction: Direction = Direction.AUTO

    def __post_init__(self):
        A = np.asarray(self.A, dtype=float)
        B = np.asarray(self.B, dtype=float)
        if A.shape != (2,) or B.shape != (2,):
            raise ValueError("A and B must be planar points")
        if not (np.any(A) and np.any(B)):
            raise ValueError("A and B must be nonzero")
        if not self.T > 0:
            raise ValueError("T must be positive")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "direction", Direction(self.direction))

    @property
    def r_A(self) -> float:
        return math.hypot(*self.A)

    @property
    def r_B(self) -> float:
        return math.hypot(*self.B)

    @property
    def theta_B(self) -> float:
        return math.atan2(self.B[1], self.B[0])

    @property
    def separation(self) -> float:
        """Unsigned angle between A and B in [0, pi]."""
        A, B = self.A, self.B
        return abs(math.atan2(A[0] * B[1] - A[1] * B[0], float(A @ B)))

    def theta_A(self, direction) -> float:
        """Lift of arg(A) with theta_B - theta_A in (0, 2pi) for CCW and in
        (-2pi, 0) for CW."""
        d = (self.theta_B - math.atan2(self.A[1], self.A[0])) % TWO_PI
        if Direction(direction) is Direction.CCW:
            return self.theta_B - d
        if Direction(direction) is Direction.CW:
            return self.theta_B - d + TWO_PI
        raise ValueError("theta_A needs an explicit rotation sense")


@dataclass(frozen=True)
class SolverOptions:
    tol: float = 1e-10  # corrector tolerance on (r, r_A * theta)
    dl_init: float = 0.25
    dl_min: float = 1e-6
    dl_max: float = 0.25
    max_newton: int = 12
    speed_factor: float = 1e3
    fd_step: float = 1e-6
    verify: bool = True
    cfg: IntegratorConfig = DEFAULT_CONFIG


DEFAULT_OPTIONS = SolverOptions()


def speed_ceiling(problem: LambertProblem, factor: float = 1e3) -> float:
    """Guard on |v0| for corrector trials: ``factor`` times the frictionless
    vis-viva scale sqrt(2/min(|A|,|B|) + (|A|+|B|)^2/T^2)."""
    rmin = min(problem.r_A, problem.r_B)
    return factor * math.sqrt(2.0 / rmin + (problem.r_A + problem.r_B) ** 2 / problem.T**2)


# ---------------------------------------------------------------------------
# shooting map


@dataclass
class ShootResult:
    r_minus_T: float
    theta_minus_T: float
    jacobian: np.ndarray | None  # d(r, theta)(-T)/d v0
    swept: float  # theta(0) - theta(-T)
    trajectory: Trajectory
    lc: LCRun | None = None

    @property
    def position(self) -> np.ndarray:
        return self.r_minus_T * np.array([math.cos(self.theta_minus_T), math.sin(self.theta_minus_T)])

    @property
    def via_lc(self) -> bool:
        return self.lc is not None


def _lc_continuation(problem: LambertProblem, traj: Trajectory, cfg: IntegratorConfig):
    """Finish a backward run that came within r_collision of the origin in
    the regularized chart. Returns (r, theta, LCRun)."""
    term = traj.terminal
    s = term.state
    theta_c = float(traj.diagnostics.theta[-1])
    z = complex(*s.x)
    target = math.sqrt(abs(z)) * cmath.exp(0.5j * theta_c)
    principal = cmath.sqrt(z)
    branch = 1 if abs(target - principal) <= abs(target + principal) else -1
    lc0 = goursat_planar(s.x, s.xdot, branch, t_accum=term.t)
    run = integrate_lc_planar_backward(problem.field, lc0, problem.T + term.t, cfg, angle_guard=True)
    W = run.trajectory.states
    half = np.unwrap(np.arctan2(W[:, 1], W[:, 0]))
    half += TWO_PI * round((0.5 * theta_c - half[0]) / TWO_PI)
    w_end = W[-1, 0:2]
    return float(w_end @ w_end), float(2.0 * half[-1]), run


def _endpoint(problem: LambertProblem, v0, cfg: IntegratorConfig, with_jacobian: bool):
    s0 = State(problem.B, np.asarray(v0, dtype=float))
    traj, J = integrate_variational_backward(problem.field, s0, np.eye(2), problem.T, cfg)
    if traj.terminal.kind == "reached_target":
        x = traj.final[0:2]
        r = math.hypot(*x)
        theta = float(traj.diagnostics.theta[-1])
        Jp = None
        if with_jacobian:
            Jp = np.vstack([x @ J / r, np.array([-x[1], x[0]]) @ J / (r * r)])
        return ShootResult(r, theta, Jp, problem.theta_B - theta, traj)
    s = traj.terminal.state
    if abs(s.c) <= 1e-14 * s.r * math.hypot(*s.xdot):
        # exactly collinear data: the rectilinear solution falls into the origin
        rp = RadialProblem(problem.field, problem.B, problem.r_A, problem.r_B, problem.T)
        rectilinear_collision_check(rp, float(v0 @ problem.B) / problem.r_B, cfg)
    r, theta, run = _lc_continuation(problem, traj, cfg)
    return ShootResult(r, theta, None, problem.theta_B - theta, traj, run)


def shoot(problem: LambertProblem, v0, cfg: IntegratorConfig = DEFAULT_CONFIG, fd_step: float = 1e-6) -> ShootResult:
    """Polar endpoint of the backward solution from (B, v0) at t = -T and its
    Jacobian with respect to v0.

    The angle is lifted continuously from theta(0) = arg(B) in (-pi, pi].
    Runs that approach the origin are completed in the regularized chart,
    and their Jacobian is then taken by central differences.
    """
    v0 = np.asarray(v0, dtype=float)
    res = _endpoint(problem, v0, cfg, True)
    if res.jacobian is None:
        h = fd_step * (1.0 + math.hypot(*v0))
        J = np.empty((2, 2))
        for j in range(2):
            e = np.zeros(2)
            e[j] = h
            p = _endpoint(problem, v0 + e, cfg, False)
            m = _endpoint(problem, v0 - e, cfg, False)
            J[:, j] = [(p.r_minus_T - m.r_minus_T) / (2 * h), (p.theta_minus_T - m.theta_minus_T) / (2 * h)]
        res.jacobian = J
    return res


# ---------------------------------------------------------------------------
# seed and continuation


def seed_from_rectilinear(problem: LambertProblem, cfg: IntegratorConfig = DEFAULT_CONFIG, tol: float = 1e-11):
    """Final velocity of the rectilinear arc on the ray of B from height
    r_A to r_B, returned with the 1-D solution."""
    u = problem.B / problem.r_B
    sol = solve_rectilinear(RadialProblem(problem.field, u, problem.r_A, problem.r_B, problem.T), tol, cfg)
    return sol.v_final * u, sol


@dataclass(frozen=True)
class TraceNode:
    lam: float
    v0: tuple
    residual: float
    step: float
    newton: int


@dataclass
class ContinuationTrace:
    nodes: list = field(default_factory=list)
    rejected: int = 0  # continuation steps that had to be halved
    guard_hits: int = 0  # corrector trials refused by the speed ceiling

    def append(self, node: TraceNode) -> None:
        self.nodes.append(node)

    @property
    def newton_total(self) -> int:
        return sum(n.newton for n in self.nodes)

    def __len__(self):
        return len(self.nodes)

    def tail(self, k: int = 5) -> list:
        return [
            {"lambda": n.lam, "v0": list(n.v0), "residual": n.residual, "step": n.step, "newton": n.newton}
            for n in self.nodes[-k:]
        ]


@dataclass
class ArcSolution:
    v0: np.ndarray
    trajectory: Trajectory
    direction: str  # "ccw", "cw" or "rectilinear"
    residual_position: float
    swept: float
    trace: ContinuationTrace
    rectilinear: bool = False
    near_ray: bool = False
    verified: bool | None = None
    verify_residual: float | None = None
    lc: LCRun | None = None

    @property
    def sign_c(self) -> int:
        c = float(self.trajectory.diagnostics.c[0])
        return 0 if self.rectilinear else int(np.sign(c))

    @property
    def energy_start_end(self) -> tuple:
        """Energy at t = -T and at t = 0 (the regularized tail supplies the
        t = -T value when the run went through it)."""
        h0 = float(self.trajectory.diagnostics.h[0])
        if self.lc is not None:
            return float(self.lc.state.E), h0
        return float(self.trajectory.diagnostics.h[-1]), h0


def _weighted(problem, sr: ShootResult, theta_target: float):
    F = np.array([sr.r_minus_T - problem.r_A, problem.r_A * (sr.theta_minus_T - theta_target)])
    J = None if sr.jacobian is None else sr.jacobian * np.array([[1.0], [problem.r_A]])
    return F, J


def _trial(problem, v, opts, M, sense, trace=None):
    if math.hypot(*v) > M:
        if trace is not None:
            trace.guard_hits += 1
        return None
    try:
        sr = shoot(problem, v, opts.cfg, opts.fd_step)
    except (CollisionBeforeT, IntegrationError, VelocityUndefined, FloatingPointError):
        return None
    if abs(sr.swept) >= TWO_PI or not np.all(np.isfinite(sr.jacobian)):
        return None
    if sense and sr.swept * sense < 0:
        return None
    return sr


def _correct(problem, v, theta_target, opts, M, sense, trace=None):
    """Damped Newton on the weighted residual. Returns (v, shoot, |F|, iters)
    or None on failure."""
    sr = _trial(problem, v, opts, M, 0, trace)
    if sr is None:
        return None
    F, J = _weighted(problem, sr, theta_target)
    nF = float(np.linalg.norm(F))
    for it in range(opts.max_newton + 1):
        if nF <= opts.tol:
            return v, sr, nF, it
        if it == opts.max_newton:
            break
        try:
            dv = -np.linalg.solve(J, F)
        except np.linalg.LinAlgError:
            return None
        a = 1.0
        while a >= 1.0 / 64:
            vt = v + a * dv
            srt = _trial(problem, vt, opts, M, sense, trace)
            if srt is not None:
                Ft, Jt = _weighted(problem, srt, theta_target)
                nFt = float(np.linalg.norm(Ft))
                if nFt <= (1.0 - 1e-4 * a) * nF:
                    v, sr, F, J, nF = vt, srt, Ft, Jt, nFt
                    break
            a *= 0.5
        else:
            # the step no longer decreases the residual; accept a point at the noise floor
            if nF <= 10 * opts.tol:
                return v, sr, nF, it
            return None
    return None


def continue_to_target(
    problem: LambertProblem,
    v0_seed,
    direction,
    options: SolverOptions = DEFAULT_OPTIONS,
    warm_start=None,
) -> ArcSolution:
    """Follow the zeros of Phi(lam, v0) = Psi(v0) - (r_A, (1-lam) theta_B + lam theta_A)
    from lam = 0 (the rectilinear seed) to lam = 1.

    ``warm_start`` is tried first as a direct Newton guess at lam = 1.
    """
    direction = Direction(direction)
    sense = 1.0 if direction is Direction.CCW else -1.0
    th_B = problem.theta_B
    th_A = problem.theta_A(direction)
    M = speed_ceiling(problem, options.speed_factor)
    trace = ContinuationTrace()

    def target(lam):
        return (1.0 - lam) * th_B + lam * th_A

    if warm_start is not None:
        out = _correct(problem, np.asarray(warm_start, dtype=float), th_A, options, M, sense, trace)
        if out is not None and out[1].swept * sense > 0:
            v, sr, nF, it = out
            trace.append(TraceNode(1.0, tuple(v), nF, 1.0, it))
            return _finish(problem, v, sr, direction.value, trace, options)

    out = _correct(problem, np.asarray(v0_seed, dtype=float), target(0.0), options, M, 0, trace)
    if out is None:
        raise ContinuationStalled("corrector failed at lambda = 0 (rectilinear seed)", trace)
    v, sr, nF, it = out
    trace.append(TraceNode(0.0, tuple(v), nF, 0.0, it))
    lam, prev = 0.0, None
    dl = options.dl_init
    while lam < 1.0:
        dl = min(dl, options.dl_max, 1.0 - lam)
        lam_new = lam + dl
        if lam_new > 1.0 - 1e-12:
            lam_new = 1.0
        if prev is None:
            guess = v
        else:
            lam_p, v_p = prev
            guess = v + (v - v_p) * (lam_new - lam) / (lam - lam_p)
        out = _correct(problem, guess, target(lam_new), options, M, sense, trace)
        if out is None and prev is not None:
            out = _correct(problem, v, target(lam_new), options, M, sense, trace)
        if out is None:
            trace.rejected += 1
            dl *= 0.5
            if dl < options.dl_min:
                swept = sr.swept if sr is not None else float("nan")
                raise ContinuationStalled(
                    f"{direction.value}: continuation stalled at lambda={lam:.6g} (swept angle {swept:.6g})", trace
                )
            continue
        prev = (lam, v)
        v, sr, nF, it = out
        lam = lam_new
        trace.append(TraceNode(lam, tuple(v), nF, dl, it))
        if it <= 3:
            dl = min(2 * dl, options.dl_max)
    return _finish(problem, v, sr, direction.value, trace, options)


def _finish(problem, v, sr: ShootResult, direction, trace, options, rectilinear=False):
    res_pos = float(np.linalg.norm(sr.position - problem.A))
    arc = ArcSolution(
        v0=np.asarray(v, dtype=float),
        trajectory=sr.trajectory,
        direction=direction,
        residual_position=res_pos,
        swept=float(sr.swept),
        trace=trace,
        rectilinear=rectilinear,
        lc=sr.lc,
    )
    if options.verify:
        chk = _endpoint(problem, arc.v0, options.cfg.tightened(), False)
        arc.verify_residual = float(np.linalg.norm(chk.position - problem.A))
        arc.verified = arc.verify_residual <= 1e-7 * (1.0 + problem.r_A)
    return arc


# ---------------------------------------------------------------------------
# top level


@dataclass
class SolveResult:
    """Arcs found for a problem plus the failures of directions that did not converge."""

    arcs: list
    failures: dict = field(default_factory=dict)
    rectilinear_seed: RadialSolution | None = None

    def __iter__(self):
        return iter(self.arcs)

    def __len__(self):
        return len(self.arcs)

    def __getitem__(self, i):
        return self.arcs[i]

    @property
    def ok(self) -> bool:
        return not self.failures


def _rectilinear_arc(problem: LambertProblem, options: SolverOptions, near_ray: bool):
    v0, sol = seed_from_rectilinear(problem, options.cfg)
    sr = _endpoint(problem, v0, options.cfg, False)
    trace = ContinuationTrace([TraceNode(0.0, tuple(v0), sol.residual, 0.0, sol.iterations)])
    arc = _finish(problem, v0, sr, "rectilinear", trace, options, rectilinear=True)
    arc.near_ray = near_ray
    return arc, sol


def solve(problem: LambertProblem, options: SolverOptions = DEFAULT_OPTIONS, warm_start: dict | None = None) -> SolveResult:
    """All requested arcs from A to B in time T.

    Same-ray endpoints yield the single rectilinear arc. For endpoints within
    1e-6 rad of the same ray both the rectilinear arc (A projected on the ray)
    and the rotating arcs are returned, flagged ``near_ray``.
    """
    sep = problem.separation
    same_side = float(problem.A @ problem.B) > 0
    if sep < SAME_RAY_ANGLE and same_side:
        arc, sol = _rectilinear_arc(problem, options, False)
        return SolveResult([arc], {}, sol)

    arcs, failures = [], {}
    near = sep < NEAR_RAY_ANGLE and same_side
    if near:
        A_proj = problem.r_A * problem.B / problem.r_B
        p_proj = LambertProblem(A_proj, problem.B, problem.T, problem.field, problem.direction)
        arc, _ = _rectilinear_arc(p_proj, options, True)
        arcs.append(arc)

    try:
        seed, sol = seed_from_rectilinear(problem, options.cfg)
    except (RuntimeError, IntegrationError) as exc:
        return SolveResult(arcs, {"seed": exc})
    dirs = [Direction.CCW, Direction.CW] if problem.direction is Direction.AUTO else [problem.direction]
    for d in dirs:
        ws = None if warm_start is None else warm_start.get(d.value)
        try:
            arc = continue_to_target(problem, seed, d, options, warm_start=ws)
        except (ContinuationStalled, IntegrationError, CollisionBeforeT) as exc:
            failures[d.value] = exc
            continue
        arc.near_ray = near
        arcs.append(arc)
    return SolveResult(arcs, failures, sol)
