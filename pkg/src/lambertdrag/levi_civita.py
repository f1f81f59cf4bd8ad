"""Levi-Civita regularization: square-root coordinates, fictitious time
ds = dt/|x| and the energy as an extra state.

In these variables the collision is a regular point of the flow, so
rectilinear solutions can be continued through it (they bounce back). The
extended position map built here is continuous across such bounces.
"""

from __future__ import annotations

import cmath
import math
import warnings
from dataclasses import dataclass

import numpy as np

from . import _kernels as K
from .dynamics import State
from .errors import (
    DomainError,
    FictitiousTimeExceeded,
    ManifoldDriftWarning,
    RegularizationRefused,
    VelocityUndefined,
)
from .friction import FrictionField
from .integrator import DEFAULT_CONFIG, IntegratorConfig, Trajectory, _raise_failure, run_kernel


@dataclass(frozen=True)
class LCState1D:
    u: float
    u_prime: float
    E: float
    s: float = 0.0
    t_accum: float = 0.0

    @property
    def residual(self) -> float:
        return 2.0 * self.u_prime**2 - self.E * self.u**2 - 1.0

    @property
    def r(self) -> float:
        return self.u**2

    def vector(self) -> np.ndarray:
        return np.array([self.u, self.u_prime, self.E, self.t_accum])


@dataclass(frozen=True)
class LCStatePlanar:
    w: np.ndarray
    w_prime: np.ndarray
    E: float
    s: float = 0.0
    t_accum: float = 0.0
    branch: int = 1

    def __post_init__(self):
        object.__setattr__(self, "w", np.asarray(self.w, dtype=float))
        object.__setattr__(self, "w_prime", np.asarray(self.w_prime, dtype=float))

    @property
    def residual(self) -> float:
        return 2.0 * float(self.w_prime @ self.w_prime) - self.E * float(self.w @ self.w) - 1.0

    @property
    def position(self) -> np.ndarray:
        return _csq(self.w)

    def vector(self) -> np.ndarray:
        return np.concatenate([self.w, self.w_prime, [self.E, self.t_accum]])


def _csq(w) -> np.ndarray:
    return np.array([w[0] * w[0] - w[1] * w[1], 2.0 * w[0] * w[1]])


def _require_regular(field: FrictionField) -> None:
    if field.d2_report.flagged:
        raise RegularizationRefused(
            "sqrt(r)*|grad D| does not vanish near the origin; refusing to regularize"
        )


# ---------------------------------------------------------------------------
# transforms


def goursat_1d(r: float, rdot: float, h: float, t_accum: float = 0.0) -> LCState1D:
    """u = sqrt(r), u' = sqrt(r) rdot / 2, E = h."""
    if r <= 0:
        raise DomainError("radius must be positive")
    u = math.sqrt(r)
    return LCState1D(u=u, u_prime=0.5 * u * rdot, E=h, s=0.0, t_accum=t_accum)


def goursat_planar(x, xdot, w0_choice: int = 1, t_accum: float = 0.0) -> LCStatePlanar:
    """w = +-sqrt(x) (principal branch for +1), w' = |x| xdot / (2 w), E = |xdot|^2/2 - 1/|x|."""
    z = complex(float(x[0]), float(x[1]))
    if z == 0:
        raise DomainError("position must be nonzero")
    sign = 1 if w0_choice >= 0 else -1
    w = sign * cmath.sqrt(z)
    zd = complex(float(xdot[0]), float(xdot[1]))
    wp = abs(z) * zd / (2.0 * w)
    E = 0.5 * abs(zd) ** 2 - 1.0 / abs(z)
    return LCStatePlanar(
        w=np.array([w.real, w.imag]),
        w_prime=np.array([wp.real, wp.imag]),
        E=E,
        s=0.0,
        t_accum=t_accum,
        branch=sign,
    )


def lc_to_physical(lc: LCStatePlanar) -> State:
    """x = w^2, xdot = 2 w w' / |w|^2 (complex arithmetic)."""
    w = complex(*lc.w)
    x = w * w
    m2 = abs(w) ** 2
    if m2 == 0.0:
        raise VelocityUndefined("velocity is undefined at w = 0", np.array([x.real, x.imag]))
    xd = 2.0 * w * complex(*lc.w_prime) / m2
    return State(np.array([x.real, x.imag]), np.array([xd.real, xd.imag]), lc.t_accum)


# ---------------------------------------------------------------------------
# flows


@dataclass
class LCRun:
    """Result of a backward regularized integration."""

    state: object  # LCState1D or LCStatePlanar at the stopping point
    trajectory: Trajectory
    reason: str  # "reached_time" or "collision"
    t_collision: float | None = None

    @property
    def max_residual(self) -> float:
        return self.trajectory.stats["max_manifold_residual"]


def _warn_drift(traj: Trajectory) -> None:
    if traj.stats["max_manifold_residual"] > 1e-6:
        warnings.warn(
            f"manifold residual reached {traj.stats['max_manifold_residual']:.3g}; state re-projected",
            ManifoldDriftWarning,
            stacklevel=3,
        )


def integrate_lc_planar_backward(
    field: FrictionField,
    lc0: LCStatePlanar,
    T_physical: float,
    cfg: IntegratorConfig = DEFAULT_CONFIG,
    *,
    angle_guard: bool = False,
) -> LCRun:
    """Integrate the regularized planar system backward in fictitious time
    until the physical-time accumulator reaches ``lc0.t_accum - T_physical``.

    Passes through w = 0 without special treatment.
    """
    if abs(lc0.residual) > 1e-8:
        raise DomainError(f"initial state is off the energy manifold (residual {lc0.residual:.3g})")
    _require_regular(field)
    target = lc0.t_accum - T_physical
    traj, status, hit = run_kernel(
        K.LC_PLANAR,
        field,
        lc0.vector(),
        cfg.s_max,
        cfg,
        sign=-1.0,
        var0=lc0.s,
        stop_events=[(K.EV_COMPONENT, 5, target)],
        angle_guard=angle_guard,
        project=True,
    )
    _raise_failure(status, traj, "integrate_lc_planar_backward")
    if status != K.TERMINAL_EVENT:
        raise FictitiousTimeExceeded(
            f"physical time only reached {traj.final[5]:.6g} before |s| hit {cfg.s_max:g}", traj
        )
    i = len(traj.steps) - 1
    tau, _ = traj.locate_root(i, *_component_event(5, target))
    traj.truncate(i, tau - traj.tau[i])
    _warn_drift(traj)
    y = traj.final
    state = LCStatePlanar(
        w=y[0:2].copy(), w_prime=y[2:4].copy(), E=float(y[4]), s=float(traj.nodes[-1]), t_accum=float(y[5]),
        branch=lc0.branch,
    )
    return LCRun(state, traj, "reached_time")


def integrate_lc_1d_backward(
    field: FrictionField,
    direction,
    lc0: LCState1D,
    T_physical: float,
    cfg: IntegratorConfig = DEFAULT_CONFIG,
    *,
    stop_at_collision: bool = True,
) -> LCRun:
    """Integrate the regularized rectilinear system along the unit ray
    ``direction`` backward until t_accum reaches ``lc0.t_accum - T_physical``
    or, if ``stop_at_collision``, until u crosses zero (whichever first)."""
    if abs(lc0.residual) > 1e-8:
        raise DomainError(f"initial state is off the energy manifold (residual {lc0.residual:.3g})")
    _require_regular(field)
    direction = np.asarray(direction, dtype=float)
    target = lc0.t_accum - T_physical
    stops = [(K.EV_COMPONENT, 3, target)]
    if stop_at_collision:
        stops.append((K.EV_COMPONENT, 0, 0.0))
    traj, status, hit = run_kernel(
        K.LC_1D,
        field,
        lc0.vector(),
        cfg.s_max,
        cfg,
        sign=-1.0,
        var0=lc0.s,
        aux=direction,
        stop_events=stops,
        project=True,
    )
    _raise_failure(status, traj, "integrate_lc_1d_backward")
    if status != K.TERMINAL_EVENT:
        raise FictitiousTimeExceeded(
            f"physical time only reached {traj.final[3]:.6g} before |s| hit {cfg.s_max:g}", traj
        )
    i = len(traj.steps) - 1
    a, b = traj.states[i], traj.states[i + 1]
    candidates = []
    gt = _component_event(3, target)
    if (a[3] - target) * (b[3] - target) <= 0:
        candidates.append(("reached_time",) + traj.locate_root(i, *gt))
    if stop_at_collision and a[0] * b[0] <= 0 and a[0] != 0.0:
        candidates.append(("collision",) + traj.locate_root(i, *_component_event(0, 0.0)))
    reason, tau, _ = min(candidates, key=lambda c: c[1])
    traj.truncate(i, tau - traj.tau[i])
    _warn_drift(traj)
    y = traj.final
    state = LCState1D(float(y[0]), float(y[1]), float(y[2]), float(traj.nodes[-1]), float(y[3]))
    return LCRun(state, traj, reason, float(y[3]) if reason == "collision" else None)


def _component_event(idx, value):
    def g(y):
        return y[idx] - value

    def grad(y):
        out = np.zeros_like(y)
        out[idx] = 1.0
        return out

    return g, grad


def collision_time(
    field: FrictionField, direction, r: float, rdot: float, cfg: IntegratorConfig = DEFAULT_CONFIG,
    t_max: float = 1e6,
) -> LCRun:
    """Follow the rectilinear solution with r(0)=r, rdot(0)=rdot backward
    until it reaches the origin; ``run.t_collision`` is the collision time."""
    h = 0.5 * rdot**2 - 1.0 / r
    run = integrate_lc_1d_backward(field, direction, goursat_1d(r, rdot, h), t_max, cfg)
    if run.reason != "collision":
        raise ValueError("no collision within the requested time window")
    return run


def extended_position_map(
    field: FrictionField,
    x0,
    v0,
    T: float,
    cfg: IntegratorConfig = DEFAULT_CONFIG,
    branch: int = 1,
) -> np.ndarray:
    """Position at t = -T of the backward solution from (x0, v0), continued
    through collisions by the regularized flow (bouncing solutions)."""
    lc0 = goursat_planar(x0, v0, branch)
    run = integrate_lc_planar_backward(field, lc0, T, cfg)
    return run.state.position
