"""Position-dependent friction coefficient D(x) for the damped Kepler problem."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.interpolate import PchipInterpolator

from . import _kernels as K
from .errors import DomainError, FieldDiagnosticWarning

KINDS = ("zero", "constant", "radial_exp", "radial_table")
_KIND_CODES = {"zero": K.ZERO, "constant": K.CONSTANT, "radial_exp": K.RADIAL_EXP, "radial_table": K.RADIAL_TABLE}

FIELD_SCHEMA = {
    "type": "object",
    "required": ["kind"],
    "properties": {
        "kind": {"enum": list(KINDS)},
        "D0": {"type": "number", "minimum": 0},
        "k": {"type": "number", "minimum": 0},
        "table": {
            "type": "array",
            "minItems": 2,
            "items": {
                "type": "array",
                "minItems": 2,
                "maxItems": 2,
                "items": {"type": "number"},
            },
        },
        "finite_difference_gradient": {"type": "boolean"},
    },
    "additionalProperties": False,
    "allOf": [
        {"if": {"properties": {"kind": {"const": "constant"}}}, "then": {"required": ["D0"]}},
        {"if": {"properties": {"kind": {"const": "radial_exp"}}}, "then": {"required": ["D0", "k"]}},
        {"if": {"properties": {"kind": {"const": "radial_table"}}}, "then": {"required": ["table"]}},
    ],
}


@dataclass(frozen=True)
class D2Report:
    """Samples of sqrt(r)*|grad D| near the origin and the verdict drawn from them."""

    r: np.ndarray
    values: np.ndarray
    max_value: float
    tail_value: float
    decreasing: bool
    flagged: bool

    def summary(self) -> dict:
        return {
            "max_value": self.max_value,
            "tail_value": self.tail_value,
            "decreasing_toward_origin": self.decreasing,
            "flagged": self.flagged,
        }


@dataclass(frozen=True, eq=False)
class FrictionField:
    """Friction coefficient D(x) >= 0 acting as the drag term -D(x) xdot.

    Use the constructors :meth:`zero`, :meth:`constant`, :meth:`radial_exp`
    and :meth:`radial_table` rather than calling the class directly.
    """

    kind: str
    D0: float = 0.0
    k: float = 0.0
    table: tuple = ()
    grad_available: bool = True
    _tab: np.ndarray = field(init=False, repr=False)
    _par: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown friction kind {self.kind!r}")
        if self.D0 < 0 or self.k < 0:
            raise ValueError("friction parameters must be nonnegative")
        if self.kind == "radial_table":
            tab = _hermite_table(self.table)
        else:
            tab = np.zeros((1, 3))
        par = np.array([self.D0, self.k, 0.0 if self.grad_available else 1.0, 0.0])
        object.__setattr__(self, "_tab", tab)
        object.__setattr__(self, "_par", par)

    # -- constructors -------------------------------------------------------

    @classmethod
    def zero(cls) -> FrictionField:
        return cls("zero")

    @classmethod
    def constant(cls, D0: float) -> FrictionField:
        return cls("constant", D0=float(D0))

    @classmethod
    def radial_exp(cls, D0: float, k: float) -> FrictionField:
        """D(x) = D0 * exp(-k |x|)."""
        return cls("radial_exp", D0=float(D0), k=float(k))

    @classmethod
    def radial_table(cls, r, D, grad_available: bool = True) -> FrictionField:
        """C^1 monotone-piecewise cubic through samples (r_i, D_i), constant outside."""
        rows = tuple((float(a), float(b)) for a, b in zip(r, D))
        return cls("radial_table", table=rows, grad_available=grad_available)

    @classmethod
    def from_dict(cls, spec: dict) -> FrictionField:
        kind = spec["kind"]
        fd = bool(spec.get("finite_difference_gradient", False))
        if kind == "zero":
            return cls("zero", grad_available=not fd)
        if kind == "constant":
            return cls("constant", D0=float(spec["D0"]), grad_available=not fd)
        if kind == "radial_exp":
            return cls("radial_exp", D0=float(spec["D0"]), k=float(spec["k"]), grad_available=not fd)
        if kind == "radial_table":
            rows = [tuple(row) for row in spec["table"]]
            return cls.radial_table([a for a, _ in rows], [b for _, b in rows], grad_available=not fd)
        raise ValueError(f"unknown friction kind {kind!r}")

    def to_dict(self) -> dict:
        out: dict = {"kind": self.kind}
        if self.kind == "constant":
            out["D0"] = self.D0
        elif self.kind == "radial_exp":
            out.update(D0=self.D0, k=self.k)
        elif self.kind == "radial_table":
            out["table"] = [list(row) for row in self.table]
        if not self.grad_available:
            out["finite_difference_gradient"] = True
        return out

    # -- evaluation ---------------------------------------------------------

    @property
    def packed(self):
        """(kind code, parameter vector, Hermite table) as consumed by the kernels."""
        return _KIND_CODES[self.kind], self._par, self._tab

    @property
    def d_star(self) -> float:
        if self.kind == "zero":
            return 0.0
        if self.kind in ("constant", "radial_exp"):
            return self.D0
        return float(self._tab[:, 1].max())

    def eval(self, x) -> float:
        x0, x1 = _point(x)
        code, par, tab = self.packed
        return float(K.field_value(code, par, tab, x0, x1))

    def grad(self, x) -> np.ndarray:
        x0, x1 = _point(x)
        if not self.grad_available:
            h = max(1e-7, 1e-7 * math.hypot(x0, x1))
            return np.array(
                [
                    (self.eval((x0 + h, x1)) - self.eval((x0 - h, x1))) / (2 * h),
                    (self.eval((x0, x1 + h)) - self.eval((x0, x1 - h))) / (2 * h),
                ]
            )
        code, par, tab = self.packed
        return np.array(K.field_grad(code, par, tab, x0, x1))

    def delta(self, r: float, direction) -> float:
        """Restriction of D to the ray spanned by the unit vector ``direction``."""
        return self.eval(r * np.asarray(direction, dtype=float))

    def check_d2(self, r_min: float = 1e-6, n: int = 200) -> D2Report:
        return check_d2(self, r_min, n)

    @cached_property
    def d2_report(self) -> D2Report:
        return check_d2(self)


def _point(x) -> tuple[float, float]:
    x0, x1 = float(x[0]), float(x[1])
    if x0 == 0.0 and x1 == 0.0:
        raise DomainError("friction field is undefined at the origin")
    return x0, x1


def _hermite_table(rows) -> np.ndarray:
    arr = np.asarray(rows, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 2 or arr.shape[0] < 2:
        raise ValueError("friction table must be a list of at least two [r, D] pairs")
    r, d = arr[:, 0], arr[:, 1]
    if np.any(r <= 0) or np.any(np.diff(r) <= 0):
        raise ValueError("friction table radii must be positive and strictly increasing")
    if np.any(d < 0):
        raise ValueError("friction table values must be nonnegative")
    slopes = PchipInterpolator(r, d).derivative()(r)
    # zero end slopes keep the constant extension C^1 and the cubic within knot range
    slopes[0] = slopes[-1] = 0.0
    return np.column_stack([r, d, slopes])


def evaluate(field: FrictionField, x) -> float:
    return field.eval(x)


def gradient(field: FrictionField, x) -> np.ndarray:
    return field.grad(x)


def check_d2(field: FrictionField, r_min: float = 1e-6, n: int = 200) -> D2Report:
    """Sample sqrt(r)*|grad D| on a log grid in [r_min, 1].

    The report is flagged when the samples do not die out toward the origin
    (tail value above a tenth of the maximum). It is advisory: nothing in
    the Cartesian solver depends on it, but the regularized flow refuses
    flagged fields.
    """
    if r_min <= 0:
        raise ValueError("r_min must be positive")
    r = np.geomspace(r_min, 1.0, n)
    angles = np.linspace(0.0, 2 * np.pi, 8, endpoint=False)
    vals = np.zeros(n)
    for a in angles:
        u = (math.cos(a), math.sin(a))
        g = np.array([np.hypot(*field.grad((ri * u[0], ri * u[1]))) for ri in r])
        vals = np.maximum(vals, np.sqrt(r) * g)
    vmax = float(vals.max())
    tail = float(vals[0])
    decade = vals[r <= 10 * r_min]
    decreasing = bool(vmax == 0.0 or np.all(np.diff(decade) >= -1e-12 * max(vmax, 1e-300)))
    flagged = bool(vmax > 1e-12 and tail > 0.1 * vmax)
    if flagged:
        warnings.warn(
            f"sqrt(r)|grad D| does not vanish near the origin (tail {tail:.3g}, max {vmax:.3g})",
            FieldDiagnosticWarning,
            stacklevel=2,
        )
    return D2Report(r, vals, vmax, tail, decreasing, flagged)
