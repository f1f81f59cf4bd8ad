"""Command-line front end: ``solve``, ``sweep`` and ``diagnose``.

Exit codes: 0 success, 2 usage or configuration error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import copy
import csv
import json
import math
import sys
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from .errors import IntegrationError, VelocityUndefined
from .friction import FrictionField
from .integrator import IntegratorConfig
from .lambert import (
    ArcSolution,
    LambertProblem,
    SolverOptions,
    seed_from_rectilinear,
    solve,
)
from .levi_civita import LCStatePlanar, lc_to_physical

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER = 0, 2, 3

CSV_COLUMNS = ["t", "x1", "x2", "xdot1", "xdot2", "r", "theta_lift", "c", "h", "p"]
SWEEP_COLUMNS = [
    "sweep_param",
    "direction",
    "converged",
    "v0x",
    "v0y",
    "residual",
    "swept_angle",
    "newton_total",
    "regime",
]

DEFAULTS = {
    "problem": {"field": {"kind": "zero"}, "direction": "auto"},
    "integrator": {
        "rtol": 1e-10,
        "atol": 1e-12,
        "h_min": 1e-14,
        "max_steps": 1_000_000,
        "r_collision": 1e-3,
        "s_max": 1e4,
    },
    "solver": {"tol": 1e-10, "speed_factor": 1e3, "max_newton": 12},
    "output": {"dir": "out", "trajectory_csv": True},
    "mode": "solve",
}


class ConfigError(ValueError):
    pass


def load_schema() -> dict:
    text = resources.files("lambertdrag").joinpath("data/config.schema.json").read_text()
    return json.loads(text)


def effective_config(raw: dict, overrides: dict | None = None) -> dict:
    """Validate ``raw`` and fill in defaults; CLI overrides win."""
    try:
        jsonschema.validate(raw, load_schema())
    except jsonschema.ValidationError as exc:
        path = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"invalid config at {path}: {exc.message}") from None
    cfg = copy.deepcopy(DEFAULTS)
    for key, val in raw.items():
        if isinstance(val, dict) and key in cfg:
            cfg[key].update(copy.deepcopy(val))
        else:
            cfg[key] = copy.deepcopy(val)
    for (section, key), val in (overrides or {}).items():
        if val is not None:
            cfg[section][key] = val
    _semantic_checks(cfg)
    return cfg


def _semantic_checks(cfg: dict) -> None:
    p = cfg["problem"]
    if not p["T"] > 0:
        raise ConfigError("T must be positive")
    if not (any(p["A"]) and any(p["B"])):
        raise ConfigError("A and B must be nonzero")
    try:
        FrictionField.from_dict(p["field"])
    except (ValueError, KeyError) as exc:
        raise ConfigError(f"bad friction field: {exc}") from None
    sw = cfg.get("sweep")
    if sw is not None:
        if sw["num"] < 1:
            raise ConfigError("sweep grid is empty")
        if sw["param"] == "T" and min(sw["start"], sw["stop"]) <= 0:
            raise ConfigError("T must be positive")
    try:
        _integrator(cfg)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _integrator(cfg: dict) -> IntegratorConfig:
    return IntegratorConfig(**cfg["integrator"])


def _options(cfg: dict) -> SolverOptions:
    return SolverOptions(cfg=_integrator(cfg), **cfg["solver"])


def _problem(cfg: dict, **changes) -> LambertProblem:
    p = {**cfg["problem"], **changes}
    return LambertProblem(p["A"], p["B"], p["T"], FrictionField.from_dict(p["field"]), p["direction"])


def _num(x):
    """JSON-safe float."""
    x = float(x)
    return x if math.isfinite(x) else None


# ---------------------------------------------------------------------------
# artifacts


def arc_summary(arc: ArcSolution) -> dict:
    h_start, h_end = arc.energy_start_end
    return {
        "direction": arc.direction,
        "v0": [_num(v) for v in arc.v0],
        "residual": _num(arc.residual_position),
        "swept_angle": _num(arc.swept),
        "sign_c": arc.sign_c,
        "energy_start_end": [_num(h_start), _num(h_end)],
        "rectilinear": arc.rectilinear,
        "near_ray": arc.near_ray,
        "verified": arc.verified,
        "verify_residual": None if arc.verify_residual is None else _num(arc.verify_residual),
        "regularized_tail": arc.lc is not None,
        "trace": arc.trace.tail(len(arc.trace)),
    }


def trajectory_rows(arc: ArcSolution) -> np.ndarray:
    """Rows (t, x1, x2, xdot1, xdot2, r, theta_lift, c, h, p) in increasing time."""
    traj = arc.trajectory
    d = traj.diagnostics
    Y = traj.states
    rows = np.column_stack([d.t, Y[:, 0], Y[:, 1], Y[:, 2], Y[:, 3], d.r, d.theta, d.c, d.h, d.p])
    if arc.lc is not None:
        # regularized tail: physical states where defined; p is not tracked there
        W = arc.lc.trajectory.states
        half = np.unwrap(np.arctan2(W[:, 1], W[:, 0]))
        half += 2 * math.pi * round((0.5 * d.theta[-1] - half[0]) / (2 * math.pi))
        extra = []
        for k in range(1, len(W)):
            lc = LCStatePlanar(W[k, 0:2], W[k, 2:4], W[k, 4], 0.0, W[k, 5])
            try:
                s = lc_to_physical(lc)
            except VelocityUndefined:
                continue
            extra.append([s.t, *s.x, *s.xdot, s.r, 2 * half[k], s.c, s.energy, math.nan])
        if extra:
            rows = np.vstack([rows, np.array(extra)])
    return rows[np.argsort(rows[:, 0], kind="stable")]


def write_csv(path: Path, rows, header) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, str):
        return v
    return "%.17g" % float(v)


def _failure_message(name: str, exc: Exception) -> str:
    msg = f"{name}: {exc}"
    trace = getattr(exc, "trace", None)
    if trace is not None and len(trace):
        msg += "\n  trace tail: " + json.dumps(trace.tail(3))
    return msg


# ---------------------------------------------------------------------------
# commands


def cmd_solve(cfg: dict, out: Path) -> int:
    out.mkdir(parents=True, exist_ok=True)
    problem = _problem(cfg)
    options = _options(cfg)
    if cfg["mode"] == "seed":
        v0, sol = seed_from_rectilinear(problem, options.cfg)
        summary = {
            "mode": "seed",
            "v0": [_num(v) for v in v0],
            "residual": _num(sol.residual),
            "dR_dv": _num(sol.dR_dv),
            "beta_bracket": [_num(b) for b in sol.beta_bracket],
        }
        (out / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")
        print(json.dumps(summary))
        return EXIT_OK
    try:
        res = solve(problem, options)
    except (IntegrationError, RuntimeError) as exc:
        print(_failure_message("solve", exc), file=sys.stderr)
        return EXIT_SOLVER
    summary = {
        "arcs": [arc_summary(a) for a in res.arcs],
        "failures": {k: str(v) for k, v in res.failures.items()},
    }
    (out / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    if cfg["output"]["trajectory_csv"]:
        for a in res.arcs:
            write_csv(out / f"trajectory_{a.direction}.csv", trajectory_rows(a), CSV_COLUMNS)
    for a in res.arcs:
        print(
            f"{a.direction}: v0=({a.v0[0]:.12g}, {a.v0[1]:.12g}) residual={a.residual_position:.3g} "
            f"swept={a.swept:.12g}"
        )
    if res.failures:
        for k, v in res.failures.items():
            print(_failure_message(k, v), file=sys.stderr)
        return EXIT_SOLVER
    return EXIT_OK


def _regime(arc: ArcSolution) -> str:
    if arc.rectilinear:
        return "near_ray_rectilinear" if arc.near_ray else "rectilinear"
    return "near_ray" if arc.near_ray else "rotating"


def cmd_sweep(cfg: dict, out: Path) -> int:
    sw = cfg.get("sweep")
    if sw is None:
        print("config has no sweep section", file=sys.stderr)
        return EXIT_CONFIG
    out.mkdir(parents=True, exist_ok=True)
    options = _options(cfg)
    base = cfg["problem"]
    grid = np.linspace(sw["start"], sw["stop"], sw["num"])
    rows, warm, any_ok = [], {}, False
    for val in grid:
        if sw["param"] == "T":
            problem = _problem(cfg, T=float(val))
        else:
            # angle from A to B, counterclockwise; |A| is kept
            rA = math.hypot(*base["A"])
            thA = math.atan2(base["B"][1], base["B"][0]) - float(val)
            problem = _problem(cfg, A=[rA * math.cos(thA), rA * math.sin(thA)])
        try:
            res = solve(problem, options, warm_start=warm)
        except (IntegrationError, RuntimeError) as exc:
            rows.append([val, "all", False, math.nan, math.nan, math.nan, math.nan, 0, "failed"])
            print(_failure_message(f"{sw['param']}={val:g}", exc), file=sys.stderr)
            continue
        for a in res.arcs:
            any_ok = True
            if not a.rectilinear:
                warm[a.direction] = a.v0
            rows.append(
                [val, a.direction, True, a.v0[0], a.v0[1], a.residual_position, a.swept, a.trace.newton_total, _regime(a)]
            )
        for d, exc in res.failures.items():
            rows.append([val, d, False, math.nan, math.nan, math.nan, math.nan, 0, "failed"])
            warm.pop(d, None)
    write_csv(out / "sweep.csv", rows, SWEEP_COLUMNS)
    print(f"{len(rows)} rows written to {out / 'sweep.csv'}")
    return EXIT_OK if any_ok else EXIT_SOLVER


def trajectory_verdicts(field: FrictionField, path: Path) -> dict:
    """p-factor bounds and energy monotonicity on an exported trajectory CSV."""
    data = np.genfromtxt(path, delimiter=",", names=True)
    t, p, h = data["t"], data["p"], data["h"]
    d_star = field.d_star
    ok = np.isfinite(p)
    p_ok = bool(np.all(p[ok] <= 1.0 + 1e-12) and np.all(p[ok] >= np.exp(d_star * t[ok]) * (1 - 1e-12)))
    order = np.argsort(t)
    hs = h[order]
    dh = np.diff(hs)
    e_ok = bool(np.all(dh <= 1e-9 * (1.0 + np.abs(hs[:-1]))))
    return {"p_bounds": "pass" if p_ok else "fail", "energy_nonincreasing": "pass" if e_ok else "fail"}


def cmd_diagnose(cfg: dict, trajectory: Path | None = None) -> int:
    field = FrictionField.from_dict(cfg["problem"]["field"])
    rep = field.d2_report
    report = {"d_star": field.d_star, "D2": "flagged" if rep.flagged else "pass", "check_d2": rep.summary()}
    if trajectory is not None:
        try:
            report["trajectory"] = trajectory_verdicts(field, trajectory)
        except (OSError, ValueError) as exc:
            print(f"cannot read trajectory: {exc}", file=sys.stderr)
            return EXIT_CONFIG
    print(json.dumps(report, indent=2))
    if trajectory is not None and "fail" in report["trajectory"].values():
        return EXIT_SOLVER
    return EXIT_OK


# ---------------------------------------------------------------------------
# entry point


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, type=Path, help="JSON run configuration")
    common.add_argument("--out", type=Path, default=None, help="output directory")
    common.add_argument("--direction", choices=["cw", "ccw", "auto"], default=None)
    common.add_argument("--rtol", type=float, default=None)
    common.add_argument("--atol", type=float, default=None)
    common.add_argument("--dump-config", action="store_true", help="print the effective configuration and exit")

    parser = argparse.ArgumentParser(prog="lambertdrag", description="Lambert arcs for the Kepler problem with linear drag")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("solve", parents=[common], help="solve one problem")
    sub.add_parser("sweep", parents=[common], help="solve over a grid of T or endpoint angle")
    diag = sub.add_parser("diagnose", parents=[common], help="check the friction field and a trajectory")
    diag.add_argument("--trajectory", type=Path, default=None, help="trajectory CSV written by solve")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    overrides = {
        ("problem", "direction"): args.direction,
        ("integrator", "rtol"): args.rtol,
        ("integrator", "atol"): args.atol,
        ("output", "dir"): None if args.out is None else str(args.out),
    }
    try:
        raw = json.loads(args.config.read_text())
        cfg = effective_config(raw, overrides)
    except (OSError, json.JSONDecodeError, ConfigError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.dump_config:
        print(json.dumps(cfg, indent=2))
        return EXIT_OK
    out = Path(cfg["output"]["dir"])
    if args.command == "solve":
        return cmd_solve(cfg, out)
    if args.command == "sweep":
        return cmd_sweep(cfg, out)
    return cmd_diagnose(cfg, args.trajectory)


if __name__ == "__main__":
    sys.exit(main())
