"""Adaptive Dormand-Prince 5(4) integration with dense output, run backward
in time, plus event location on the dense output."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import cached_property

import numpy as np

from . import _kernels as K
from .dynamics import State, diagnostic_series
from .errors import MaxStepsExceeded, StepFailure
from .friction import FrictionField


@dataclass(frozen=True)
class IntegratorConfig:
    rtol: float = 1e-10
    atol: float = 1e-12
    h_init: float | None = None
    h_min: float = 1e-14
    max_steps: int = 1_000_000
    r_collision: float = 1e-3
    s_max: float = 1e4  # fictitious-time cap of the regularized flows

    def __post_init__(self):
        if not (self.rtol > 0 and self.atol > 0):
            raise ValueError("rtol and atol must be positive")
        if self.h_init is not None and not self.h_min < self.h_init:
            raise ValueError("h_min must be smaller than h_init")
        if self.max_steps < 1 or self.r_collision <= 0:
            raise ValueError("max_steps and r_collision must be positive")

    def tightened(self, factor: float = 100.0) -> IntegratorConfig:
        return replace(self, rtol=self.rtol / factor, atol=self.atol / factor)


DEFAULT_CONFIG = IntegratorConfig()


# ---------------------------------------------------------------------------
# events


@dataclass(frozen=True)
class RadiusBelow:
    r: float


@dataclass(frozen=True)
class RadiusEquals:
    r: float


@dataclass(frozen=True)
class RdotZero:
    pass


@dataclass(frozen=True)
class AngleSweepExceeds:
    angle: float = 2 * math.pi


@dataclass(frozen=True)
class Terminal:
    """How an integration ended: ``reached_target``, ``collision_handoff``,
    ``event`` or ``step_failure``."""

    kind: str
    t: float
    state: State | None = None


class _EventFn:
    """Scalar event function g(y) on Cartesian rows with its gradient."""

    def __init__(self, kind, theta_start=0.0):
        self.kind = kind
        self.theta_start = theta_start

    def values(self, Y, theta=None):
        k = self.kind
        if isinstance(k, (RadiusBelow, RadiusEquals)):
            return np.hypot(Y[..., 0], Y[..., 1]) - k.r
        if isinstance(k, RdotZero):
            return Y[..., 0] * Y[..., 2] + Y[..., 1] * Y[..., 3]
        return np.abs(theta - self.theta_start) - k.angle

    def grad(self, y):
        g = np.zeros_like(y)
        k = self.kind
        if isinstance(k, (RadiusBelow, RadiusEquals)):
            r = math.hypot(y[0], y[1])
            g[0:2] = y[0:2] / r
        elif isinstance(k, RdotZero):
            g[0:4] = (y[2], y[3], y[0], y[1])
        return g

    def noise_floor(self, Y):
        if isinstance(self.kind, RdotZero):
            return 1e-8 * float(np.max(np.hypot(Y[:, 0], Y[:, 1]) * np.hypot(Y[:, 2], Y[:, 3])))
        return 0.0


# ---------------------------------------------------------------------------
# trajectories


@dataclass(eq=False, repr=False)
class Trajectory:
    """Piecewise dense-output solution.

    The independent variable (physical time t for Cartesian systems,
    fictitious time s for regularized ones) is ``var0 + sign * tau`` where
    ``tau`` runs over the nonnegative node offsets. Segment i covers
    ``[tau[i], tau[i+1]]`` and is evaluated from ``coeffs[i]``.
    """

    system: int
    field: FrictionField
    aux: np.ndarray
    sign: float
    var0: float
    tau: np.ndarray
    states: np.ndarray
    steps: np.ndarray
    coeffs: np.ndarray
    terminal: Terminal | None = None
    events: list = field(default_factory=list)
    stats: dict = field(default_factory=dict)
    theta0: float | None = None

    def __repr__(self):
        end = self.terminal.kind if self.terminal else "open"
        return f"Trajectory(system={self.system}, steps={len(self.steps)}, span=[{self.t_start:.6g}, {self.t_end:.6g}], {end})"

    @property
    def nodes(self) -> np.ndarray:
        return self.var0 + self.sign * self.tau

    @property
    def t_start(self) -> float:
        return float(self.nodes[-1] if self.sign < 0 else self.nodes[0])

    @property
    def t_end(self) -> float:
        return float(self.nodes[0] if self.sign < 0 else self.nodes[-1])

    @property
    def segments(self) -> list:
        v = self.nodes
        return [(min(a, b), max(a, b)) for a, b in zip(v[:-1], v[1:])]

    @property
    def final(self) -> np.ndarray:
        return self.states[-1]

    def __call__(self, var):
        """Dense-output state(s) at independent-variable value(s) ``var``."""
        var = np.asarray(var, dtype=float)
        off = (var - self.var0) / self.sign
        i = np.clip(np.searchsorted(self.tau, off, side="right") - 1, 0, len(self.steps) - 1)
        th = ((off - self.tau[i]) / self.steps[i])[..., None]
        rc = self.coeffs[i]
        th1 = 1.0 - th
        return rc[..., 0, :] + th * (rc[..., 1, :] + th1 * (rc[..., 2, :] + th * (rc[..., 3, :] + th1 * rc[..., 4, :])))

    def state(self, t: float) -> State:
        y = self(t)
        return State(y[0:2].copy(), y[2:4].copy(), float(t), float(y[4]))

    @cached_property
    def diagnostics(self):
        if self.system not in (K.CART, K.CART_VAR):
            raise TypeError("diagnostics are defined for Cartesian trajectories")
        return diagnostic_series(self.nodes, self.states[:, :5], self.theta0)

    def _kernel_args(self):
        code, par, tab = self.field.packed
        return self.system, code, par, tab, self.aux

    def fresh_step(self, i: int, dtau: float):
        """Re-take step i from its start node with length dtau (no error control)."""
        if dtau == 0.0:
            return self.states[i].copy(), None
        return K.single_step(*self._kernel_args(), self.sign_tau, self.states[i], dtau)

    @property
    def sign_tau(self) -> float:
        return float(self.stats.get("sign_tau", -1.0))

    def locate_root(self, i: int, g, grad, theta_ref=None):
        """Root of g inside segment i: dense-output bisection then Newton polish.

        Returns (tau offset from the start of the trajectory, state vector).
        """
        h = float(self.steps[i])
        rc = self.coeffs[i]

        def gd(th):
            y = K.dense_eval(rc, th)
            return g(y)

        lo, hi = 0.0, 1.0
        glo = g(self.states[i])
        while (hi - lo) * h > 1e-13:
            mid = 0.5 * (lo + hi)
            gm = gd(mid)
            if gm == 0.0:
                lo = hi = mid
                break
            if (gm < 0) == (glo < 0):
                lo, glo = mid, gm
            else:
                hi = mid
        dtau = 0.5 * (lo + hi) * h
        y, _ = self.fresh_step(i, dtau)
        args = self._kernel_args()
        for _ in range(6):
            gv = g(y)
            f = K.eval_rhs(*args, y) * self.sign_tau
            slope = float(grad(y) @ f)
            if gv == 0.0 or slope == 0.0:
                break
            new = dtau - gv / slope
            if not 0.0 <= new <= h or abs(new - dtau) < 1e-16 * max(1.0, h):
                if 0.0 <= new <= h:
                    dtau = new
                    y, _ = self.fresh_step(i, dtau)
                break
            dtau = new
            y, _ = self.fresh_step(i, dtau)
        return float(self.tau[i] + dtau), y

    def truncate(self, i: int, dtau: float) -> None:
        """Cut the trajectory inside segment i, after an offset dtau into it."""
        y, rc = self.fresh_step(i, dtau)
        self.tau = np.append(self.tau[: i + 1], self.tau[i] + dtau)
        self.states = np.vstack([self.states[: i + 1], y[None, :]])
        if dtau > 0.0:
            self.steps = np.append(self.steps[:i], dtau)
            self.coeffs = np.concatenate([self.coeffs[:i], rc[None]], axis=0)
        else:
            self.steps = self.steps[:i]
            self.coeffs = self.coeffs[:i]
            self.tau = self.tau[: i + 1]
            self.states = self.states[: i + 1]
        self.__dict__.pop("diagnostics", None)


def run_kernel(
    system,
    field: FrictionField,
    y0,
    span: float,
    cfg: IntegratorConfig,
    *,
    sign: float = -1.0,
    var0: float = 0.0,
    aux=None,
    stop_events=(),
    angle_guard: bool = False,
    project: bool = False,
) -> tuple[Trajectory, int, int]:
    """Integrate a kernel system over ``span`` of the independent variable.

    ``stop_events`` are (code, component, value) triples; the integration
    stops after the first step across which one of them changes sign.
    Returns the trajectory, the kernel status and the index of the event hit.
    """
    code, par, tab = field.packed
    aux = np.zeros(2) if aux is None else np.asarray(aux, dtype=float)
    ev = np.array([e[0] for e in stop_events], dtype=np.int64)
    ei = np.array([e[1] for e in stop_events], dtype=np.int64)
    evv = np.array([e[2] for e in stop_events], dtype=float)
    status, taus, Y, H, RC, hit, nrej, nproj, maxres = K.integrate(
        system,
        code,
        par,
        tab,
        aux,
        sign,
        np.asarray(y0, dtype=float),
        float(span),
        cfg.rtol,
        cfg.atol,
        0.0 if cfg.h_init is None else cfg.h_init,
        cfg.h_min,
        cfg.max_steps,
        ev,
        ei,
        evv,
        angle_guard,
        project,
    )
    traj = Trajectory(
        system=system,
        field=field,
        aux=aux,
        sign=sign,
        var0=var0,
        tau=taus,
        states=Y,
        steps=H,
        coeffs=RC,
        stats={
            "accepted": len(H),
            "rejected": int(nrej),
            "projections": int(nproj),
            "max_manifold_residual": float(maxres),
            "sign_tau": sign,
        },
    )
    return traj, int(status), int(hit)


def _raise_failure(status, traj, what):
    t = float(traj.nodes[-1])
    if status == K.STEP_FAILURE:
        traj.terminal = Terminal("step_failure", t)
        raise StepFailure(f"{what}: step size fell below h_min at t={t:.6g}", traj, t)
    if status == K.MAX_STEPS:
        traj.terminal = Terminal("step_failure", t)
        raise MaxStepsExceeded(f"{what}: step budget exhausted at t={t:.6g}", traj, t)


def _radius_g(r0):
    def g(y):
        return math.hypot(y[0], y[1]) - r0

    def grad(y):
        out = np.zeros_like(y)
        r = math.hypot(y[0], y[1])
        out[0:2] = y[0:2] / r
        return out

    return g, grad


def _integrate_cartesian(system, field, s0: State, y0, T, cfg, events):
    if T <= 0:
        raise ValueError("T must be positive")
    stop = [(K.EV_RADIUS, 0, cfg.r_collision)] if s0.r > cfg.r_collision else []
    traj, status, hit = run_kernel(
        system, field, y0, T, cfg, sign=-1.0, var0=s0.t, stop_events=stop, angle_guard=True
    )
    traj.theta0 = math.atan2(s0.x[1], s0.x[0])
    _raise_failure(status, traj, "integrate_backward")
    if status == K.TERMINAL_EVENT:
        i = len(traj.steps) - 1
        g, grad = _radius_g(cfg.r_collision)
        tau_c, _ = traj.locate_root(i, g, grad)
        traj.truncate(i, tau_c - traj.tau[i])
        t_c = float(traj.nodes[-1])
        traj.terminal = Terminal("collision_handoff", t_c, _row_state(traj.final, t_c))
    else:
        t_end = float(traj.nodes[-1])
        traj.terminal = Terminal("reached_target", t_end, _row_state(traj.final, t_end))
    for kind in events:
        found = locate_event(traj, kind)
        if found is not None:
            traj.events.append((found[0], kind))
    return traj


def _row_state(y, t) -> State:
    return State(y[0:2].copy(), y[2:4].copy(), float(t), float(y[4]))


def integrate_backward(
    field: FrictionField, s0: State, T: float, cfg: IntegratorConfig = DEFAULT_CONFIG, events=()
) -> Trajectory:
    """Integrate the damped Kepler system from ``s0`` (at time s0.t) down to
    s0.t - T. Stops early with a ``collision_handoff`` terminal when |x|
    drops below ``cfg.r_collision``."""
    y0 = np.concatenate([s0.x, s0.xdot, [s0.log_p]])
    return _integrate_cartesian(K.CART, field, s0, y0, T, cfg, events)


def integrate_variational_backward(
    field: FrictionField, s0: State, V0, T: float, cfg: IntegratorConfig = DEFAULT_CONFIG
):
    """Backward integration together with the variational flow.

    Returns ``(trajectory, J)`` where ``J = dx(-T)/dxdot(0) @ V0``; ``J`` is
    ``None`` when the run was handed off near a collision before -T.
    """
    V0 = np.asarray(V0, dtype=float)
    y0 = np.concatenate([s0.x, s0.xdot, [s0.log_p], np.zeros(4), V0.T.ravel()])
    traj = _integrate_cartesian(K.CART_VAR, field, s0, y0, T, cfg, ())
    if traj.terminal.kind != "reached_target":
        return traj, None
    return traj, traj.final[5:9].reshape(2, 2).T.copy()


def integrate_fixed_steps(field: FrictionField, s0: State, T: float, n_steps: int) -> np.ndarray:
    """Fixed-step Dormand-Prince propagation (no error control), for order studies."""
    code, par, tab = field.packed
    y0 = np.concatenate([s0.x, s0.xdot, [s0.log_p]])
    return K.fixed_steps(K.CART, code, par, tab, np.zeros(2), -1.0, y0, T / n_steps, n_steps)


def locate_event(traj: Trajectory, kind):
    """Earliest (most negative time) occurrence of ``kind`` on a Cartesian
    trajectory, or ``None`` when the event function never changes sign."""
    theta = traj.diagnostics.theta
    ev = _EventFn(kind, theta_start=float(theta[0]))
    G = ev.values(traj.states, theta)
    floor = ev.noise_floor(traj.states)
    cand = []
    for i in range(len(traj.steps)):
        a, b = G[i], G[i + 1]
        if max(abs(a), abs(b)) <= floor:
            continue
        if a == 0.0 or a * b < 0.0 or (b == 0.0 and i == len(traj.steps) - 1):
            cand.append(i)
    if not cand:
        return None
    # most negative time first
    i = min(cand, key=lambda j: min(traj.nodes[j], traj.nodes[j + 1]))
    if isinstance(kind, AngleSweepExceeds):
        th_ref = float(theta[i])
        side = 1.0 if theta[i + 1] - theta[0] > 0 else -1.0

        def g(y):
            base = math.atan2(y[1], y[0])
            lifted = base + 2 * math.pi * round((th_ref - base) / (2 * math.pi))
            return side * (lifted - float(theta[0])) - kind.angle

        def grad(y):
            out = np.zeros_like(y)
            r2 = y[0] ** 2 + y[1] ** 2
            out[0:2] = side * np.array([-y[1], y[0]]) / r2
            return out

    else:

        def g(y):
            return float(ev.values(y[None, :])[0])

        grad = ev.grad
    tau, y = traj.locate_root(i, g, grad)
    t = traj.var0 + traj.sign * tau
    return t, _row_state(y, t)


def warm_up() -> None:
    """Compile every kernel path now (or load it from the numba cache), so
    that the first real solve is not charged for JIT compilation."""
    # an outgoing radial orbit falls into the handoff radius backward in time,
    # which exercises the step loop and the event root refinement
    traj = integrate_backward(FrictionField.zero(), State((1.0, 0.0), (1.0, 0.0)), 1.0)
    traj.locate_root(len(traj.steps) - 1, *_radius_g(DEFAULT_CONFIG.r_collision))
    integrate_variational_backward(FrictionField.constant(0.1), State((1.0, 0.0), (0.0, 1.0)), np.eye(2), 0.1)
