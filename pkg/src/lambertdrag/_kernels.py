"""Compiled numerical core: friction evaluation, right-hand sides and a
Dormand-Prince 5(4) stepper with dense output.

Everything here works on flat float arrays so numba can compile it once and
reuse it for every system. The Python modules wrap these kernels with
dataclasses and error handling.
"""

import math

import numpy as np
from numba import njit

# friction kinds
ZERO = 0
CONSTANT = 1
RADIAL_EXP = 2
RADIAL_TABLE = 3

# systems
CART = 0  # x, xdot, log-damping Q
CART_VAR = 1  # CART + position/velocity variations (two columns)
RADIAL_VAR = 2  # r, rdot, Q, variation, variation rate
LC_1D = 3  # u, u', E, t
LC_PLANAR = 4  # w (2), w' (2), E, t

DIMS = (5, 13, 5, 4, 6)

# loop status codes
REACHED_END = 0
TERMINAL_EVENT = 1
STEP_FAILURE = 2
MAX_STEPS = 3

# event function codes
EV_COMPONENT = 0
EV_RADIUS = 1

# Dormand-Prince 5(4) tableau
C2, C3, C4, C5 = 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0
A21 = 1.0 / 5.0
A31, A32 = 3.0 / 40.0, 9.0 / 40.0
A41, A42, A43 = 44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0
A51, A52, A53, A54 = 19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0
A61, A62, A63, A64, A65 = (
    9017.0 / 3168.0,
    -355.0 / 33.0,
    46732.0 / 5247.0,
    49.0 / 176.0,
    -5103.0 / 18656.0,
)
A71, A73, A74, A75, A76 = 35.0 / 384.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0
E1, E3, E4, E5, E6, E7 = (
    71.0 / 57600.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
)
D1, D3, D4, D5, D6, D7 = (
    -12715105075.0 / 11282082432.0,
    87487479700.0 / 32700410799.0,
    -10690763975.0 / 1880347072.0,
    701980252875.0 / 199316789632.0,
    -1453857185.0 / 822651844.0,
    69997945.0 / 29380423.0,
)


# ---------------------------------------------------------------------------
# friction


@njit(cache=True)
def _table_eval(tab, r):
    """Cubic Hermite interpolant on rows (r_i, D_i, slope_i); constant outside."""
    n = tab.shape[0]
    if r <= tab[0, 0]:
        return tab[0, 1], 0.0
    if r >= tab[n - 1, 0]:
        return tab[n - 1, 1], 0.0
    lo = 0
    hi = n - 1
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if tab[mid, 0] <= r:
            lo = mid
        else:
            hi = mid
    h = tab[hi, 0] - tab[lo, 0]
    t = (r - tab[lo, 0]) / h
    t2 = t * t
    t3 = t2 * t
    y0 = tab[lo, 1]
    y1 = tab[hi, 1]
    m0 = tab[lo, 2] * h
    m1 = tab[hi, 2] * h
    val = (2 * t3 - 3 * t2 + 1) * y0 + (t3 - 2 * t2 + t) * m0 + (-2 * t3 + 3 * t2) * y1 + (t3 - t2) * m1
    der = (6 * t2 - 6 * t) * y0 + (3 * t2 - 4 * t + 1) * m0 + (-6 * t2 + 6 * t) * y1 + (3 * t2 - 2 * t) * m1
    return val, der / h


@njit(cache=True)
def field_value(kind, par, tab, x0, x1):
    if kind == ZERO:
        return 0.0
    if kind == CONSTANT:
        return par[0]
    r = math.sqrt(x0 * x0 + x1 * x1)
    if kind == RADIAL_EXP:
        return par[0] * math.exp(-par[1] * r)
    return _table_eval(tab, r)[0]


@njit(cache=True)
def field_grad(kind, par, tab, x0, x1):
    r = math.sqrt(x0 * x0 + x1 * x1)
    if par[2] != 0.0:
        # no analytic gradient: central differences
        h = max(1e-7, 1e-7 * r)
        gx = (field_value(kind, par, tab, x0 + h, x1) - field_value(kind, par, tab, x0 - h, x1)) / (2 * h)
        gy = (field_value(kind, par, tab, x0, x1 + h) - field_value(kind, par, tab, x0, x1 - h)) / (2 * h)
        return gx, gy
    if kind == ZERO or kind == CONSTANT or r == 0.0:
        return 0.0, 0.0
    if kind == RADIAL_EXP:
        dr = -par[1] * par[0] * math.exp(-par[1] * r)
    else:
        dr = _table_eval(tab, r)[1]
    return dr * x0 / r, dr * x1 / r


# ---------------------------------------------------------------------------
# right-hand sides (derivatives with respect to the physical / fictitious time)


@njit(cache=True)
def rhs(system, kind, par, tab, aux, y, out):
    if system == CART or system == CART_VAR:
        x0 = y[0]
        x1 = y[1]
        v0 = y[2]
        v1 = y[3]
        r2 = x0 * x0 + x1 * x1
        r = math.sqrt(r2)
        r3 = r2 * r
        d = field_value(kind, par, tab, x0, x1)
        out[0] = v0
        out[1] = v1
        out[2] = -d * v0 - x0 / r3
        out[3] = -d * v1 - x1 / r3
        out[4] = -d
        if system == CART_VAR:
            gx, gy = field_grad(kind, par, tab, x0, x1)
            r5 = r3 * r2
            for j in range(2):
                w0 = y[5 + 2 * j]
                w1 = y[6 + 2 * j]
                wd0 = y[9 + 2 * j]
                wd1 = y[10 + 2 * j]
                gw = gx * w0 + gy * w1
                xw = x0 * w0 + x1 * w1
                out[5 + 2 * j] = wd0
                out[6 + 2 * j] = wd1
                out[9 + 2 * j] = -gw * v0 - d * wd0 - w0 / r3 + 3.0 * xw * x0 / r5
                out[10 + 2 * j] = -gw * v1 - d * wd1 - w1 / r3 + 3.0 * xw * x1 / r5
    elif system == RADIAL_VAR:
        r = y[0]
        rd = y[1]
        a0 = aux[0]
        a1 = aux[1]
        d = field_value(kind, par, tab, r * a0, r * a1)
        gx, gy = field_grad(kind, par, tab, r * a0, r * a1)
        dp = gx * a0 + gy * a1
        out[0] = rd
        out[1] = -d * rd - 1.0 / (r * r)
        out[2] = -d
        out[3] = y[4]
        out[4] = -dp * rd * y[3] - d * y[4] + 2.0 * y[3] / (r * r * r)
    elif system == LC_1D:
        u = y[0]
        up = y[1]
        u2 = u * u
        d = field_value(kind, par, tab, u2 * aux[0], u2 * aux[1])
        out[0] = up
        out[1] = 0.5 * y[2] * u - d * u2 * up
        out[2] = -4.0 * d * up * up
        out[3] = u2
    else:
        w0 = y[0]
        w1 = y[1]
        p0 = y[2]
        p1 = y[3]
        m2 = w0 * w0 + w1 * w1
        d = field_value(kind, par, tab, w0 * w0 - w1 * w1, 2.0 * w0 * w1)
        out[0] = p0
        out[1] = p1
        out[2] = 0.5 * y[4] * w0 - d * m2 * p0
        out[3] = 0.5 * y[4] * w1 - d * m2 * p1
        out[4] = -4.0 * d * (p0 * p0 + p1 * p1)
        out[5] = m2


@njit(cache=True)
def _f(system, kind, par, tab, aux, sign, y, out):
    rhs(system, kind, par, tab, aux, y, out)
    for i in range(y.size):
        out[i] *= sign


# ---------------------------------------------------------------------------
# Dormand-Prince step


@njit(cache=True)
def _dopri_step(system, kind, par, tab, aux, sign, y, h, K, ytmp, ynew, yerr):
    """One step from y with K[0] = f(y); fills K[1:7], ynew and yerr."""
    n = y.size
    for i in range(n):
        ytmp[i] = y[i] + h * A21 * K[0, i]
    _f(system, kind, par, tab, aux, sign, ytmp, K[1])
    for i in range(n):
        ytmp[i] = y[i] + h * (A31 * K[0, i] + A32 * K[1, i])
    _f(system, kind, par, tab, aux, sign, ytmp, K[2])
    for i in range(n):
        ytmp[i] = y[i] + h * (A41 * K[0, i] + A42 * K[1, i] + A43 * K[2, i])
    _f(system, kind, par, tab, aux, sign, ytmp, K[3])
    for i in range(n):
        ytmp[i] = y[i] + h * (A51 * K[0, i] + A52 * K[1, i] + A53 * K[2, i] + A54 * K[3, i])
    _f(system, kind, par, tab, aux, sign, ytmp, K[4])
    for i in range(n):
        ytmp[i] = y[i] + h * (A61 * K[0, i] + A62 * K[1, i] + A63 * K[2, i] + A64 * K[3, i] + A65 * K[4, i])
    _f(system, kind, par, tab, aux, sign, ytmp, K[5])
    for i in range(n):
        ynew[i] = y[i] + h * (A71 * K[0, i] + A73 * K[2, i] + A74 * K[3, i] + A75 * K[4, i] + A76 * K[5, i])
    _f(system, kind, par, tab, aux, sign, ynew, K[6])
    for i in range(n):
        yerr[i] = h * (
            E1 * K[0, i] + E3 * K[2, i] + E4 * K[3, i] + E5 * K[4, i] + E6 * K[5, i] + E7 * K[6, i]
        )


@njit(cache=True)
def _dense_coeffs(y, ynew, h, K, rc):
    n = y.size
    for i in range(n):
        dy = ynew[i] - y[i]
        bspl = h * K[0, i] - dy
        rc[0, i] = y[i]
        rc[1, i] = dy
        rc[2, i] = bspl
        rc[3, i] = dy - h * K[6, i] - bspl
        rc[4, i] = h * (
            D1 * K[0, i] + D3 * K[2, i] + D4 * K[3, i] + D5 * K[4, i] + D6 * K[5, i] + D7 * K[6, i]
        )


@njit(cache=True)
def single_step(system, kind, par, tab, aux, sign, y, h):
    """Take one unconditioned step of size h; returns (ynew, dense coefficients)."""
    n = y.size
    K = np.empty((7, n))
    ytmp = np.empty(n)
    ynew = np.empty(n)
    yerr = np.empty(n)
    rc = np.empty((5, n))
    _f(system, kind, par, tab, aux, sign, y, K[0])
    _dopri_step(system, kind, par, tab, aux, sign, y, h, K, ytmp, ynew, yerr)
    _dense_coeffs(y, ynew, h, K, rc)
    return ynew, rc


@njit(cache=True)
def fixed_steps(system, kind, par, tab, aux, sign, y0, h, n_steps):
    y = y0.copy()
    for _ in range(n_steps):
        y, _rc = single_step(system, kind, par, tab, aux, sign, y, h)
    return y


@njit(cache=True)
def _err_norm(y, ynew, yerr, rtol, atol):
    acc = 0.0
    n = y.size
    for i in range(n):
        sk = atol + rtol * max(abs(y[i]), abs(ynew[i]))
        e = yerr[i] / sk
        acc += e * e
    return math.sqrt(acc / n)


@njit(cache=True)
def _initial_step(system, kind, par, tab, aux, sign, y, f0, rtol, atol, h_max):
    n = y.size
    d0 = 0.0
    d1 = 0.0
    for i in range(n):
        sk = atol + rtol * abs(y[i])
        d0 += (y[i] / sk) ** 2
        d1 += (f0[i] / sk) ** 2
    d0 = math.sqrt(d0 / n)
    d1 = math.sqrt(d1 / n)
    if d0 < 1e-5 or d1 < 1e-5:
        h0 = 1e-6
    else:
        h0 = 0.01 * d0 / d1
    h0 = min(h0, h_max)
    y1 = np.empty(n)
    for i in range(n):
        y1[i] = y[i] + h0 * f0[i]
    f1 = np.empty(n)
    _f(system, kind, par, tab, aux, sign, y1, f1)
    d2 = 0.0
    for i in range(n):
        sk = atol + rtol * abs(y[i])
        d2 += ((f1[i] - f0[i]) / sk) ** 2
    d2 = math.sqrt(d2 / n) / h0
    m = max(d1, d2)
    if m <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / m) ** 0.2
    return min(100 * h0, h1, h_max)


@njit(cache=True)
def _event_value(code, idx, val, y):
    if code == EV_RADIUS:
        return math.sqrt(y[0] * y[0] + y[1] * y[1]) - val
    return y[idx] - val


@njit(cache=True)
def _manifold_residual(system, y):
    if system == LC_1D:
        return 2.0 * y[1] * y[1] - y[2] * y[0] * y[0] - 1.0
    return 2.0 * (y[2] * y[2] + y[3] * y[3]) - y[4] * (y[0] * y[0] + y[1] * y[1]) - 1.0


@njit(cache=True)
def _project(system, y):
    """Rescale the velocity part so the point lies back on the energy manifold."""
    if system == LC_1D:
        target = 0.5 * (1.0 + y[2] * y[0] * y[0])
        cur = y[1] * y[1]
        if target > 0.0 and cur > 0.0:
            y[1] *= math.sqrt(target / cur)
    else:
        target = 0.5 * (1.0 + y[4] * (y[0] * y[0] + y[1] * y[1]))
        cur = y[2] * y[2] + y[3] * y[3]
        if target > 0.0 and cur > 0.0:
            s = math.sqrt(target / cur)
            y[2] *= s
            y[3] *= s


@njit(cache=True)
def integrate(
    system,
    kind,
    par,
    tab,
    aux,
    sign,
    y0,
    tau_end,
    rtol,
    atol,
    h_init,
    h_min,
    max_steps,
    ev_code,
    ev_idx,
    ev_val,
    angle_guard,
    project,
):
    """Adaptive integration of dy/dtau = sign * f(y) on [0, tau_end].

    Stops early after the first accepted step across which one of the
    (terminal) events changes sign. Returns the accepted node grid, the
    dense-output coefficients of every step and bookkeeping counters.
    """
    n = y0.size
    cap = 256
    taus = np.empty(cap + 1)
    Y = np.empty((cap + 1, n))
    H = np.empty(cap)
    RC = np.empty((cap, 5, n))
    K = np.empty((7, n))
    ytmp = np.empty(n)
    ynew = np.empty(n)
    yerr = np.empty(n)
    rc = np.empty((5, n))

    y = y0.copy()
    taus[0] = 0.0
    Y[0] = y
    _f(system, kind, par, tab, aux, sign, y, K[0])
    h_max = tau_end if math.isfinite(tau_end) else 1e300
    if h_init > 0.0:
        h = min(h_init, h_max)
    else:
        h = _initial_step(system, kind, par, tab, aux, sign, y, K[0], rtol, atol, h_max)

    n_ev = ev_code.size
    g_prev = np.empty(n_ev)
    for j in range(n_ev):
        g_prev[j] = _event_value(ev_code[j], ev_idx[j], ev_val[j], y)

    tau = 0.0
    nacc = 0
    nrej = 0
    nproj = 0
    maxres = 0.0
    status = REACHED_END
    hit = -1
    rejected_last = False
    if system == LC_1D or system == LC_PLANAR:
        maxres = abs(_manifold_residual(system, y))

    while True:
        if nacc >= max_steps:
            status = MAX_STEPS
            break
        last = False
        if tau + h >= tau_end:
            h = tau_end - tau
            last = True
        _dopri_step(system, kind, par, tab, aux, sign, y, h, K, ytmp, ynew, yerr)
        err = _err_norm(y, ynew, yerr, rtol, atol)
        if not math.isfinite(err):
            err = 1e10
        ok = err <= 1.0
        if ok and angle_guard:
            cr = y[0] * ynew[1] - y[1] * ynew[0]
            dt = y[0] * ynew[0] + y[1] * ynew[1]
            if abs(math.atan2(cr, dt)) > 0.5 * math.pi:
                ok = False
                err = 32.0  # forces a halving-sized reduction
        if ok:
            if nacc >= cap:
                newcap = 2 * cap
                t2 = np.empty(newcap + 1)
                t2[: cap + 1] = taus
                taus = t2
                Y2 = np.empty((newcap + 1, n))
                Y2[: cap + 1] = Y
                Y = Y2
                H2 = np.empty(newcap)
                H2[:cap] = H
                H = H2
                R2 = np.empty((newcap, 5, n))
                R2[:cap] = RC
                RC = R2
                cap = newcap
            _dense_coeffs(y, ynew, h, K, rc)
            RC[nacc] = rc
            H[nacc] = h
            tau = tau_end if last else tau + h
            for i in range(n):
                y[i] = ynew[i]
                K[0, i] = K[6, i]
            if project:
                res = abs(_manifold_residual(system, y))
                if res > maxres:
                    maxres = res
                if res > 1e-10:
                    _project(system, y)
                    nproj += 1
                    _f(system, kind, par, tab, aux, sign, y, K[0])
            nacc += 1
            taus[nacc] = tau
            Y[nacc] = y
            stop = False
            for j in range(n_ev):
                g = _event_value(ev_code[j], ev_idx[j], ev_val[j], y)
                if g == 0.0 or g * g_prev[j] < 0.0:
                    stop = True
                    hit = j
                    break
                g_prev[j] = g
            if stop:
                status = TERMINAL_EVENT
                break
            if last:
                status = REACHED_END
                break
            fac = 0.9 * err ** -0.2 if err > 0.0 else 10.0
            fac = min(10.0, max(0.2, fac))
            if rejected_last:
                fac = min(fac, 1.0)
            h = h * fac
            rejected_last = False
        else:
            nrej += 1
            fac = max(0.2, 0.9 * err ** -0.2)
            h = h * min(fac, 0.5)
            rejected_last = True
            if h < h_min:
                status = STEP_FAILURE
                break

    return status, taus[: nacc + 1], Y[: nacc + 1], H[:nacc], RC[:nacc], hit, nrej, nproj, maxres


@njit(cache=True)
def dense_eval(rc, theta):
    th1 = 1.0 - theta
    return rc[0] + theta * (rc[1] + th1 * (rc[2] + theta * (rc[3] + th1 * rc[4])))


@njit(cache=True)
def eval_rhs(system, kind, par, tab, aux, y):
    out = np.empty(y.size)
    rhs(system, kind, par, tab, aux, y, out)
    return out
