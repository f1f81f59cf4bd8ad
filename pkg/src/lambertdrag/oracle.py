"""Frictionless two-body reference (mu = 1) used to cross-check the solver.

Universal-variable Kepler propagation and a classical single-revolution
Lambert solver. Nothing here touches the integrator or the compiled kernels;
that independence is what makes it useful as a check.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq


class OracleError(RuntimeError):
    """Iteration in the reference two-body solver failed to converge."""


def _stumpff_series(z: float, first: int) -> float:
    # sum_k (-z)^k / (2k + first)!
    term = 1.0 / math.factorial(first)
    total, k = term, 0
    while abs(term) > 1e-17 * abs(total):
        k += 1
        term *= -z / ((2 * k + first - 1) * (2 * k + first))
        total += term
    return total


def stumpff_c(z: float) -> float:
    if z > 1.0:
        return 2.0 * math.sin(0.5 * math.sqrt(z)) ** 2 / z
    if z < -1.0:
        return (math.cosh(math.sqrt(-z)) - 1.0) / (-z)
    return _stumpff_series(z, 2)


def stumpff_s(z: float) -> float:
    if z > 1.0:
        s = math.sqrt(z)
        return (s - math.sin(s)) / s**3
    if z < -1.0:
        s = math.sqrt(-z)
        return (math.sinh(s) - s) / s**3
    return _stumpff_series(z, 3)


@dataclass(frozen=True)
class KeplerElements:
    h_energy: float
    c_momentum: float
    conic: str  # elliptic, parabolic, hyperbolic or rectilinear


def elements(x, v, tol: float = 1e-14) -> KeplerElements:
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    r = math.hypot(*x)
    h = 0.5 * float(v @ v) - 1.0 / r
    c = float(x[0] * v[1] - x[1] * v[0])
    if abs(c) <= tol * r * max(math.hypot(*v), 1.0):
        conic = "rectilinear"
    elif abs(h) <= tol * (1.0 / r):
        conic = "parabolic"
    else:
        conic = "elliptic" if h < 0 else "hyperbolic"
    return KeplerElements(h, c, conic)


def propagate_universal(x0, v0, dt: float, tol: float = 1e-13, max_iter: int = 50):
    """Exact Kepler propagation of (x0, v0) over ``dt`` (negative is backward).

    Returns (x, v). Newton iteration on the universal anomaly chi.
    """
    x0 = np.asarray(x0, dtype=float)
    v0 = np.asarray(v0, dtype=float)
    r0 = math.hypot(*x0)
    if r0 == 0.0:
        raise ValueError("initial position must be nonzero")
    if dt == 0.0:
        return x0.copy(), v0.copy()
    vr0 = float(x0 @ v0) / r0
    alpha = 2.0 / r0 - float(v0 @ v0)  # reciprocal semi-major axis

    if alpha > 1e-12:
        chi = alpha * dt
    else:
        chi = math.copysign(math.pow(abs(6.0 * dt), 1.0 / 3.0), dt) if abs(alpha) <= 1e-12 else dt / r0
    for _ in range(max_iter):
        z = alpha * chi * chi
        C, S = stumpff_c(z), stumpff_s(z)
        f = r0 * vr0 * chi * chi * C + (1.0 - alpha * r0) * chi**3 * S + r0 * chi - dt
        fp = r0 * vr0 * chi * (1.0 - z * S) + (1.0 - alpha * r0) * chi * chi * C + r0
        step = f / fp
        chi -= step
        if abs(step) <= tol * max(1.0, abs(chi)):
            break
    else:
        raise OracleError(f"universal Kepler equation did not converge (dt={dt:g})")

    z = alpha * chi * chi
    C, S = stumpff_c(z), stumpff_s(z)
    f = 1.0 - chi * chi / r0 * C
    g = dt - chi**3 * S
    x = f * x0 + g * v0
    r = math.hypot(*x)
    fdot = chi / (r * r0) * (z * S - 1.0)
    gdot = 1.0 - chi * chi / r * C
    v = fdot * x0 + gdot * v0
    return x, v


def _transfer_angle(A, B, direction: str) -> float:
    """Angle swept from A to B in (0, 2*pi), measured along the motion."""
    d = (math.atan2(B[1], B[0]) - math.atan2(A[1], A[0])) % (2 * math.pi)
    if direction == "ccw":
        return d
    if direction == "cw":
        return (2 * math.pi - d) % (2 * math.pi)
    raise ValueError("direction must be 'cw' or 'ccw'")


def _curtis_velocity(r1, r2, x1, x2, T, dtheta):
    """Arrival velocity from the universal time-of-flight equation."""
    Acoef = math.sin(dtheta) * math.sqrt(r1 * r2 / (1.0 - math.cos(dtheta)))

    def y(z):
        return r1 + r2 + Acoef * (z * stumpff_s(z) - 1.0) / math.sqrt(stumpff_c(z))

    def F(z):
        yz = y(z)
        if yz <= 0.0:
            return -T
        return (yz / stumpff_c(z)) ** 1.5 * stumpff_s(z) + Acoef * math.sqrt(yz) - T

    hi = 4 * math.pi**2 * (1.0 - 1e-10)
    lo = 0.0
    while F(lo) > 0.0:
        lo = 2.0 * lo - 1.0
        if lo < -1e6:
            raise OracleError("could not bracket the time-of-flight equation")
    if F(hi) <= 0.0:
        raise OracleError("flight time beyond the single-revolution range")
    z = brentq(F, lo, hi, xtol=1e-15, rtol=1e-15, maxiter=200)
    yz = y(z)
    g = Acoef * math.sqrt(yz)
    gdot = 1.0 - yz / r2
    return (gdot * x2 - x1) / g


def lambert_universal(A, B, T: float, direction: str = "ccw", tol: float = 1e-12, max_iter: int = 30):
    """Velocity at B of the frictionless single-revolution arc leaving A at
    time -T and reaching B at time 0, turning in ``direction`` ('cw'/'ccw').
    """
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    if T <= 0:
        raise ValueError("T must be positive")
    rA, rB = math.hypot(*A), math.hypot(*B)
    dtheta = _transfer_angle(A, B, direction)
    if dtheta < 1e-9 or dtheta > 2 * math.pi - 1e-9:
        raise ValueError("A and B are collinear with the origin on the same ray")
    if abs(math.sin(dtheta)) < 1e-6:
        # the Lagrange coefficients degenerate at a half turn; start from a
        # slightly shifted A and let the shooting polish below remove the shift
        shift = 1e-3 if direction == "ccw" else -1e-3
        c, s = math.cos(shift), math.sin(shift)
        A_guess = np.array([c * A[0] + s * A[1], -s * A[0] + c * A[1]])
        v = _curtis_velocity(rA, rB, A_guess, B, T, dtheta + 1e-3)
    else:
        v = _curtis_velocity(rA, rB, A, B, T, dtheta)

    # Newton polish on the propagated endpoint (finite-difference Jacobian)
    scale = 1.0 + rA
    for _ in range(max_iter):
        x, _ = propagate_universal(B, v, -T)
        res = x - A
        if math.hypot(*res) <= tol * scale:
            return v
        h = 1e-7 * (1.0 + math.hypot(*v))
        J = np.empty((2, 2))
        for j in range(2):
            e = np.zeros(2)
            e[j] = h
            xp, _ = propagate_universal(B, v + e, -T)
            xm, _ = propagate_universal(B, v - e, -T)
            J[:, j] = (xp - xm) / (2 * h)
        v = v - np.linalg.solve(J, res)
    x, _ = propagate_universal(B, v, -T)
    if math.hypot(*(x - A)) <= 1e3 * tol * scale:
        return v
    raise OracleError("Lambert polish did not converge")
