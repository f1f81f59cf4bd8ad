"""Damped Kepler vector field, its variational equation and the polar/energy
functionals attached to a solution."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels as K
from .errors import DomainError, StepTooLarge
from .friction import FrictionField


@dataclass(frozen=True)
class State:
    """Cartesian phase point. ``log_p`` is the accumulated damping integral
    Q(t) = int_t^0 D(x(s)) ds, so that p = exp(-Q)."""

    x: np.ndarray
    xdot: np.ndarray
    t: float = 0.0
    log_p: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "x", np.asarray(self.x, dtype=float))
        object.__setattr__(self, "xdot", np.asarray(self.xdot, dtype=float))
        if not np.any(self.x):
            raise DomainError("state position must be nonzero")

    @property
    def r(self) -> float:
        return float(np.hypot(*self.x))

    @property
    def c(self) -> float:
        return float(self.x[0] * self.xdot[1] - self.x[1] * self.xdot[0])

    @property
    def energy(self) -> float:
        return float(0.5 * self.xdot @ self.xdot - 1.0 / self.r)


@dataclass(frozen=True)
class Diagnostics:
    r: float
    theta: float
    c: float
    v_pot: float
    h: float
    p: float
    rdot: float

    @property
    def h_polar(self) -> float:
        """Energy recomputed from the polar expression rdot^2/2 + v_pot."""
        return 0.5 * self.rdot**2 + self.v_pot


def rhs_cartesian(field: FrictionField, s: State):
    """Return (xdot, xddot) with xddot = -D(x) xdot - x/|x|^3."""
    y = np.concatenate([s.x, s.xdot, [0.0]])
    code, par, tab = field.packed
    f = K.eval_rhs(K.CART, code, par, tab, np.zeros(2), y)
    return f[0:2].copy(), f[2:4].copy()


def rhs_with_variational(field: FrictionField, s: State, W, Wdot):
    """Derivatives of (x, xdot, W, Wdot); columns of W are position variations.

    Each column w obeys
    w'' = -<grad D(x), w> xdot - D(x) w' - w/|x|^3 + 3 <x, w> x / |x|^5.
    """
    W = np.asarray(W, dtype=float)
    Wdot = np.asarray(Wdot, dtype=float)
    y = np.concatenate([s.x, s.xdot, [0.0], W.T.ravel(), Wdot.T.ravel()])
    code, par, tab = field.packed
    f = K.eval_rhs(K.CART_VAR, code, par, tab, np.zeros(2), y)
    dW = f[5:9].reshape(2, 2).T
    dWdot = f[9:13].reshape(2, 2).T
    return f[0:2].copy(), f[2:4].copy(), dW, dWdot


def diagnostics(field: FrictionField, s: State, theta_prev: float | None = None) -> Diagnostics:
    """Polar and energy functionals at a state.

    ``theta`` is lifted to be continuous with ``theta_prev``; an increment
    above pi/2 raises :class:`StepTooLarge` so the caller can refine.
    """
    x0, x1 = s.x
    r = math.hypot(x0, x1)
    if r == 0.0:
        raise DomainError("diagnostics undefined at the origin")
    c = x0 * s.xdot[1] - x1 * s.xdot[0]
    rdot = (x0 * s.xdot[0] + x1 * s.xdot[1]) / r
    v_pot = -1.0 / r + c * c / (2.0 * r * r)
    h = 0.5 * float(s.xdot @ s.xdot) - 1.0 / r
    base = math.atan2(x1, x0)
    if theta_prev is None:
        theta = base
    else:
        theta = base + 2 * math.pi * round((theta_prev - base) / (2 * math.pi))
        if abs(theta - theta_prev) > 0.5 * math.pi:
            raise StepTooLarge(f"angular increment {theta - theta_prev:.3g} exceeds pi/2")
    return Diagnostics(r=r, theta=theta, c=c, v_pot=v_pot, h=h, p=math.exp(-s.log_p), rdot=rdot)


@dataclass(frozen=True)
class DiagnosticSeries:
    """Diagnostics sampled at the accepted nodes of a trajectory."""

    t: np.ndarray
    r: np.ndarray
    theta: np.ndarray
    c: np.ndarray
    v_pot: np.ndarray
    h: np.ndarray
    h_polar: np.ndarray
    p: np.ndarray
    rdot: np.ndarray


def diagnostic_series(t, states, theta0: float | None = None) -> DiagnosticSeries:
    """Vectorised diagnostics over rows (x1, x2, xdot1, xdot2, Q, ...)."""
    Y = np.asarray(states)
    x = Y[:, 0:2]
    v = Y[:, 2:4]
    r = np.hypot(x[:, 0], x[:, 1])
    c = x[:, 0] * v[:, 1] - x[:, 1] * v[:, 0]
    rdot = np.einsum("ij,ij->i", x, v) / r
    v_pot = -1.0 / r + c**2 / (2 * r**2)
    h = 0.5 * np.einsum("ij,ij->i", v, v) - 1.0 / r
    theta = np.unwrap(np.arctan2(x[:, 1], x[:, 0]))
    if theta0 is not None:
        theta = theta + 2 * np.pi * np.round((theta0 - theta[0]) / (2 * np.pi))
    return DiagnosticSeries(
        t=np.asarray(t, dtype=float),
        r=r,
        theta=theta,
        c=c,
        v_pot=v_pot,
        h=h,
        h_polar=0.5 * rdot**2 + v_pot,
        p=np.exp(-Y[:, 4]),
        rdot=rdot,
    )
