"""Command-line interface.

Exit codes: 0 success, 2 usage error, 3 numerical failure, 4 no solution.
JSON goes to stdout, logs to stderr. Every artifact carries a header with
the tool version, the effective run configuration and the parameters.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .energy import PoleSingularity, TailNotConverged, energy_report
from .integrate import IntegratorConfig, Orbit
from .model import Params, in_existence_window, regime, validate_params
from .profile import HALF_PI, RProfile, phase_angle, t_of_x, w_values
from .shooting import (
    BracketNotFound,
    Classification,
    NonConvergent,
    ShootKind,
    ShootSpec,
    find_bk,
    run_orbit,
)
from .spectrum import spectrum_report, stability_verdict

log = logging.getLogger("pharmonic")

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC, EXIT_NO_SOLUTION = 0, 2, 3, 4
CSV_COLUMNS = ("x", "h", "dh", "A", "W", "theta", "rho", "t", "r")


class UsageError(Exception):
    pass


# ------------------------------------------------------------------ config


@dataclass
class RunConfig:
    integrator: IntegratorConfig = field(default_factory=IntegratorConfig)
    b_tol: float = 1e-9
    j_max: int = 6
    grid: list[tuple[float, int]] = field(default_factory=list)
    output_dir: Path = Path(".")
    format: str = "json"

    def __post_init__(self):
        if not self.b_tol > 0:
            raise ValueError("b_tol must be positive")
        if self.j_max < 1:
            raise ValueError("j_max must be at least 1")
        if self.format not in ("json", "csv"):
            raise ValueError("format must be json or csv")

    def as_dict(self) -> dict:
        return {
            "integrator": self.integrator.as_dict(),
            "b_tol": self.b_tol,
            "j_max": self.j_max,
            "grid": [list(c) for c in self.grid],
            "output_dir": str(self.output_dir),
            "format": self.format,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        extra = set(data) - known
        if extra:
            raise ValueError(f"unknown config keys: {sorted(extra)}")
        kw = dict(data)
        if "integrator" in kw:
            kw["integrator"] = IntegratorConfig(**kw["integrator"])
        if "grid" in kw:
            kw["grid"] = [(float(p), int(m)) for p, m in kw["grid"]]
        if "output_dir" in kw:
            kw["output_dir"] = Path(kw["output_dir"])
        return cls(**kw)


_INTEGRATOR_FLAGS = {
    "rel_tol": "rel_tol",
    "abs_tol": "abs_tol",
    "x_max": "x_max",
    "max_steps": "max_steps",
    "event_tol": "event_tol",
    "convergence_eps": "convergence_eps",
}


def resolve_config(args: argparse.Namespace) -> RunConfig:
    """CLI flag > config file > default."""
    data: dict = {}
    if getattr(args, "config", None):
        try:
            data = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config {args.config}: {exc}") from None
        if not isinstance(data, dict):
            raise UsageError("config file must hold a JSON object")
    try:
        cfg = RunConfig.from_dict(data)
        integ = {k: getattr(args, flag) for flag, k in _INTEGRATOR_FLAGS.items() if getattr(args, flag, None) is not None}
        if integ:
            cfg.integrator = cfg.integrator.replace(**integ)
        for name in ("b_tol", "j_max", "format"):
            val = getattr(args, name, None)
            if val is not None:
                setattr(cfg, name, val)
        if getattr(args, "output_dir", None) is not None:
            cfg.output_dir = Path(args.output_dir)
        cfg.__post_init__()
    except (TypeError, ValueError) as exc:
        raise UsageError(str(exc)) from None
    return cfg


def header(cfg: RunConfig, params: dict) -> dict:
    return {"tool": "pharmonic", "version": __version__, "config": cfg.as_dict(), "params": params}


def _params(p, m) -> Params:
    try:
        return validate_params(p, m)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


# --------------------------------------------------------------------- csv


def _fmt(v: float) -> str:
    return "%.17g" % v


def orbit_rows(orbit: Orbit, theta0: float) -> np.ndarray:
    """Rows ``x,h,dh,A,W,theta,rho,t,r`` of a half-line orbit (raw ``r = h + pi/2``)."""
    theta = orbit.theta - orbit.theta[0] + theta0
    return np.column_stack([
        orbit.x, orbit.h, orbit.dh, orbit.a, orbit.w, theta, orbit.rho, t_of_x(orbit.x), orbit.h + HALF_PI,
    ])


def profile_rows(orbit: Orbit, prof: RProfile, symmetry: str, theta0: float) -> np.ndarray:
    """Rows over the symmetric extension, including the two pole rows at ``x = ±inf``."""
    params = orbit.params
    sgn = -1.0 if symmetry == "odd" else 1.0
    x = np.concatenate([-orbit.x[:0:-1], orbit.x])
    h = np.concatenate([sgn * orbit.h[:0:-1], orbit.h])
    dh = np.concatenate([-sgn * orbit.dh[:0:-1], orbit.dh])
    n_pole = len(prof.t) - len(x)
    if n_pole == 2:
        h_inf = float(np.sign(orbit.h[-1])) * HALF_PI
        x = np.concatenate([[-np.inf], x, [np.inf]])
        h = np.concatenate([[sgn * h_inf], h, [h_inf]])
        dh = np.concatenate([[0.0], dh, [0.0]])
    a = dh * dh + (params.m - 1.0) * np.cos(h) ** 2
    w = w_values(h, dh, params)
    theta = phase_angle(h, dh)
    i0 = int(np.flatnonzero(x == 0.0)[0])
    theta = theta - theta[i0] + theta0
    return np.column_stack([x, h, dh, a, w, theta, np.hypot(h, dh), prof.t, prof.r])


def write_csv(rows: np.ndarray, stream) -> None:
    stream.write(",".join(CSV_COLUMNS) + "\n")
    for row in rows:
        stream.write(",".join(_fmt(v) for v in row) + "\n")


def write_csv_file(rows: np.ndarray, path: Path, meta: dict) -> None:
    """CSV plus a ``.meta.json`` sidecar with the provenance header
    (the CSV header line itself is fixed)."""
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="\n") as fh:
        write_csv(rows, fh)
    Path(str(path) + ".meta.json").write_text(json.dumps(meta, indent=2) + "\n")


def read_csv(path: Path) -> dict[str, np.ndarray]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        head = next(reader)
        if tuple(head) != CSV_COLUMNS:
            raise ValueError(f"unexpected CSV header {head}")
        data = np.array([[float(v) for v in row] for row in reader], dtype=float)
    return {name: data[:, i] for i, name in enumerate(CSV_COLUMNS)}


def outcome_from_csv(cols: dict[str, np.ndarray], convergence_eps: float = 1e-9) -> dict:
    """Recompute the outcome fields from the half-line rows of a profile CSV."""
    keep = np.isfinite(cols["x"]) & (cols["x"] >= 0.0)
    x, h, dh, theta = cols["x"][keep], cols["h"][keep], cols["dh"][keep], cols["theta"][keep]
    s = np.sign(h[1:])
    zero_count = int(np.sum((s != 0) & (s != np.sign(h[:-1])) & (np.sign(h[:-1]) != 0)))
    dist = math.hypot(abs(h[-1]) - HALF_PI, dh[-1])
    plus = h[-1] > 0
    if dist < convergence_eps:
        cls = Classification.CONVERGED_PLUS if plus else Classification.CONVERGED_MINUS
    elif abs(h[-1]) >= HALF_PI - 1e-12:
        cls = Classification.EXIT_PLUS if plus else Classification.EXIT_MINUS
    else:
        cls = Classification.UNDECIDED
    return {
        "classification": cls.value,
        "omega": -(float(theta[-1]) - HALF_PI) / math.pi,
        "zero_count": zero_count,
        "x_e": float(x[-1]),
    }


def _emit(obj: dict, out) -> None:
    out.write(json.dumps(obj, indent=2, allow_nan=True) + "\n")


# ---------------------------------------------------------------- commands


def _window_m_values(p: float, m_max: int | None) -> list[int]:
    rep = regime(Params(p, 2))
    top = m_max if m_max is not None else int(math.ceil(rep.winding_upper)) + 2
    return list(range(2, top + 1))


def cmd_window(args, cfg: RunConfig, out) -> int:
    params = _params(args.p, 2)
    base = regime(params)
    cells = [regime(Params(params.p, m)).as_dict() for m in _window_m_values(params.p, args.m_max)]
    for c in cells:
        c.pop("existence_upper"), c.pop("winding_upper"), c.pop("existence_lower")
    _emit({
        "header": header(cfg, {"p": params.p}),
        "p": params.p,
        "existence_lower": base.existence_lower,
        "existence_upper": base.existence_upper,
        "winding_upper": base.winding_upper,
        "cells": cells,
    }, out)
    return EXIT_OK


def cmd_shoot(args, cfg: RunConfig, out) -> int:
    params = _params(args.p, args.m)
    if (args.b is None) == (args.d is None):
        raise UsageError("give exactly one of --b and --d")
    kind, value = (ShootKind.B_ORBIT, args.b) if args.b is not None else (ShootKind.D_ORBIT, args.d)
    try:
        spec = ShootSpec(kind, value)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    orbit, outcome = run_orbit(spec, params, cfg.integrator)
    head = header(cfg, {**params.as_dict(), kind.name.lower()[0]: value, "kind": kind.value})
    result = {"header": head, **outcome.as_dict()}
    rows = orbit_rows(orbit, spec.theta0) if len(orbit.x) > 1 else None
    if rows is not None:
        name = f"shoot_p{params.p:g}_m{params.m}_{'b' if kind is ShootKind.B_ORBIT else 'd'}{value:g}.csv"
        path = cfg.output_dir / name
        write_csv_file(rows, path, head)
        result["csv"] = str(path)
    if cfg.format == "csv" and rows is not None:
        write_csv(rows, out)
    else:
        _emit(result, out)
    if outcome.classification is Classification.UNDECIDED:
        log.error("orbit undecided: %s", outcome.diagnostic)
        return EXIT_NUMERIC
    return EXIT_OK


def solve_record(params: Params, k: int, cfg: RunConfig) -> dict:
    """JSON-ready summary of one ``find_bk`` call (also used by atlas)."""
    try:
        res = find_bk(params, k, cfg.b_tol, cfg.integrator)
    except BracketNotFound as exc:
        return {"status": "BracketNotFound", "reason": str(exc)}
    except NonConvergent as exc:
        return {"status": "NonConvergent", "reason": str(exc),
                "bracket": list(exc.bracket) if exc.bracket else None}
    rec = {"status": "ok", **res.as_dict()}
    try:
        rec["energy_report"] = energy_report(res.orbit, res.solution, params).as_dict()
    except (TailNotConverged, PoleSingularity) as exc:
        rec["energy_report"] = {"error": type(exc).__name__, "reason": str(exc)}
    rec["_result"] = res
    return rec


def cmd_solve(args, cfg: RunConfig, out) -> int:
    params = _params(args.p, args.m)
    if args.k < 1:
        raise UsageError("k must be at least 1")
    rec = solve_record(params, args.k, cfg)
    head = header(cfg, {**params.as_dict(), "k": args.k})
    res = rec.pop("_result", None)
    status = rec.pop("status")
    if status != "ok":
        _emit({"header": head, "error": status, **rec}, out)
        log.error("%s: %s", status, rec["reason"])
        return EXIT_NO_SOLUTION if status == "BracketNotFound" else EXIT_NUMERIC
    rows = profile_rows(res.orbit, res.solution, "odd", HALF_PI)
    path = cfg.output_dir / f"solve_p{params.p:g}_m{params.m}_k{args.k}.csv"
    write_csv_file(rows, path, head)
    result = {"header": head, **rec, "csv": str(path)}
    if cfg.format == "csv":
        write_csv(rows, out)
    else:
        _emit(result, out)
    return EXIT_OK


def parse_range(text: str, cast=float) -> list:
    """``a:b`` or ``a:b:step``, inclusive of ``b``."""
    parts = text.split(":")
    try:
        if len(parts) == 1:
            return [cast(parts[0])]
        if len(parts) not in (2, 3):
            raise ValueError
        a, b = float(parts[0]), float(parts[1])
        step = float(parts[2]) if len(parts) == 3 else 1.0
    except ValueError:
        raise UsageError(f"bad range {text!r}; expected a:b or a:b:step") from None
    if step <= 0 or b < a:
        raise UsageError(f"bad range {text!r}")
    n = int(math.floor((b - a) / step + 1e-9)) + 1
    return [cast(a + i * step) for i in range(n)]


def atlas_cell(task) -> list[dict]:
    """All ``k <= k_max`` records for one ``(p, m)`` cell; runs in a worker."""
    p, m, k_max, cfg_dict = task
    cfg = RunConfig.from_dict(cfg_dict)
    params = Params(p, m)
    rep = regime(params)
    rows = []
    blocked = None
    for k in range(1, k_max + 1):
        base = {"p": p, "m": m, "k": k, "regime": rep.regime.value,
                "in_existence_window": in_existence_window(params)}
        if blocked is not None:
            rows.append({**base, f"k{k}": "BracketNotFound", "reason": f"no bracket for k={blocked}"})
            continue
        rec = solve_record(params, k, cfg)
        rec.pop("_result", None)
        status = rec.pop("status")
        if status == "ok":
            rows.append({**base, f"k{k}": "ok", "b_k": rec["b_k"], "bracket_width": rec["bracket_width"],
                         "omega": rec["outcome"]["omega"], "k_end": rec["k_end"], "energy": rec["energy"]})
        else:
            rows.append({**base, f"k{k}": status, "reason": rec["reason"]})
            if status == "BracketNotFound":
                blocked = k
    return rows


def cmd_atlas(args, cfg: RunConfig, out) -> int:
    if args.p_range and args.m_range:
        cells = [(p, m) for p in parse_range(args.p_range, float) for m in parse_range(args.m_range, int)]
    elif cfg.grid:
        cells = list(cfg.grid)
    else:
        raise UsageError("atlas needs --p-range and --m-range or a grid in the config file")
    cells = sorted({(_params(p, m).p, _params(p, m).m) for p, m in cells})
    if args.k_max < 1 or args.jobs < 1:
        raise UsageError("--k-max and --jobs must be positive")
    cfg_dict = cfg.as_dict()
    tasks = [(p, m, args.k_max, cfg_dict) for p, m in cells]
    if args.jobs == 1:
        results = list(map(atlas_cell, tasks))
    else:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(atlas_cell, tasks))
    head = header(cfg, {"p_range": args.p_range, "m_range": args.m_range, "k_max": args.k_max})
    out.write(json.dumps({"header": head}, sort_keys=True) + "\n")
    for rows in results:
        for row in rows:
            out.write(json.dumps(row, sort_keys=True) + "\n")
    return EXIT_OK


def cmd_spectrum(args, cfg: RunConfig, out) -> int:
    params = _params(args.p, args.m)
    j_max = args.j_max if args.j_max is not None else cfg.j_max
    if j_max < 1:
        raise UsageError("j_max must be at least 1")
    rep = spectrum_report(params, j_max, numeric_x=args.numeric)
    _emit({"header": header(cfg, {**params.as_dict(), "j_max": j_max}), **rep.as_dict()}, out)
    return EXIT_OK


def cmd_stability(args, cfg: RunConfig, out) -> int:
    params = _params(args.p, args.m)
    j_max = max(cfg.j_max, 3)
    verdict = stability_verdict(params, j_max)
    _emit({"header": header(cfg, params.as_dict()), "verdict": verdict.value,
           "lambda_hat_1": params.p - params.m}, out)
    return EXIT_OK


# ------------------------------------------------------------------ parser


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run configuration")
    common.add_argument("--output-dir", help="directory for CSV artifacts")
    common.add_argument("--format", choices=("json", "csv"), default=None, help="what goes to stdout")
    common.add_argument("--rel-tol", dest="rel_tol", type=float)
    common.add_argument("--abs-tol", dest="abs_tol", type=float)
    common.add_argument("--x-max", dest="x_max", type=float)
    common.add_argument("--max-steps", dest="max_steps", type=int)
    common.add_argument("--event-tol", dest="event_tol", type=float)
    common.add_argument("--convergence-eps", dest="convergence_eps", type=float)
    common.add_argument("-v", "--verbose", action="store_true")

    ap = argparse.ArgumentParser(prog="pharmonic", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"pharmonic {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    w = sub.add_parser("window", parents=[common], help="existence and winding windows for a given p")
    w.add_argument("--p", type=float, required=True)
    w.add_argument("--m-max", type=int)
    w.set_defaults(func=cmd_window)

    s = sub.add_parser("shoot", parents=[common], help="integrate one b- or d-orbit")
    s.add_argument("--p", type=float, required=True)
    s.add_argument("--m", type=float, required=True)
    s.add_argument("--b", type=float)
    s.add_argument("--d", type=float)
    s.set_defaults(func=cmd_shoot)

    v = sub.add_parser("solve", parents=[common], help="locate b_k and its connecting orbit")
    v.add_argument("--p", type=float, required=True)
    v.add_argument("--m", type=float, required=True)
    v.add_argument("--k", type=int, required=True)
    v.add_argument("--tol", dest="b_tol", type=float)
    v.set_defaults(func=cmd_solve)

    a = sub.add_parser("atlas", parents=[common], help="b_k over a (p, m) grid, as JSON lines")
    a.add_argument("--p-range")
    a.add_argument("--m-range")
    a.add_argument("--k-max", type=int, default=2)
    a.add_argument("--jobs", type=int, default=1)
    a.add_argument("--tol", dest="b_tol", type=float)
    a.set_defaults(func=cmd_atlas)

    sp = sub.add_parser("spectrum", parents=[common], help="Jacobi spectrum of the identity map")
    sp.add_argument("--p", type=float, required=True)
    sp.add_argument("--m", type=float, required=True)
    sp.add_argument("--j-max", dest="j_max", type=int)
    sp.add_argument("--numeric", action="store_true", help="also run the x-domain eigensolver")
    sp.set_defaults(func=cmd_spectrum)

    st = sub.add_parser("stability", parents=[common], help="stability verdict for the identity map")
    st.add_argument("--p", type=float, required=True)
    st.add_argument("--m", type=float, required=True)
    st.set_defaults(func=cmd_stability)
    return ap


def main(argv: list[str] | None = None, out=None) -> int:
    out = out or sys.stdout
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        cfg = resolve_config(args)
        return args.func(args, cfg, out)
    except UsageError as exc:
        print(f"pharmonic: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ArithmeticError, RuntimeError) as exc:
        print(f"pharmonic: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
