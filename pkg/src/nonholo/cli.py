"""``nonholo``: verify, brackets, simulate, hj-check.

Exit codes: 0 success, 1 a check or threshold failed, 2 bad input (unknown
model or parameter, unreadable file, initial point off M, ...).
"""

from __future__ import annotations

import argparse
import csv
import io
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import brackets as B
from . import models
from .brackets import OffManifoldError
from .diffcore import real
from .dynamics import integrate
from .hamiltonjacobi import TOL_HJ, hj_report, load_one_form, parse_grid
from .projector import eden_projector, project_to_M
from .verify import run_suite

SCHEMA = 1
DRIFT_TOL = 1e-6
RESIDUAL_TOL = 1e-8


class UsageError(Exception):
    """Bad input; reported with exit code 2."""


# ---------------------------------------------------------------------------
# JSON with 17 significant digits and stable key order


def _num(v: float) -> str:
    if math.isnan(v) or math.isinf(v):
        return "null"
    s = format(v + 0.0, ".17g")  # + 0.0 folds -0.0 into 0.0
    if not any(c in s for c in ".en"):
        s += ".0"
    return s


def to_json(obj, indent: int = 2, level: int = 0) -> str:
    import json

    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if isinstance(obj, bool) or obj is None:
        return json.dumps(obj)
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return _num(float(obj))
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, np.ndarray):
        return to_json(obj.tolist(), indent, level)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {to_json(v, indent, level + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        if all(not isinstance(v, (dict, list, tuple, np.ndarray)) for v in obj):
            return "[" + ", ".join(to_json(v, indent, level + 1) for v in obj) + "]"
        items = [pad + to_json(v, indent, level + 1) for v in obj]
        return "[\n" + ",\n".join(items) + "\n" + end + "]"
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def _emit(report: dict, path: str | None):
    text = to_json({"schema": SCHEMA, **report}) + "\n"
    if path:
        Path(path).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


# ---------------------------------------------------------------------------
# Shared argument handling


def _parse_kv(items, what="parameter") -> dict[str, float]:
    out = {}
    for item in items or []:
        if "=" not in item:
            raise UsageError(f"{what} {item!r} is not key=value")
        k, v = (s.strip() for s in item.split("=", 1))
        try:
            out[k] = float(v)
        except ValueError:
            raise UsageError(f"{what} {k}: {v!r} is not a number") from None
    return out


def _vector(text: str, n: int, what: str) -> np.ndarray:
    try:
        v = np.array([float(s) for s in text.replace(" ", "").split(",") if s], dtype=float)
    except ValueError:
        raise UsageError(f"{what}: cannot read {text!r}") from None
    if v.size != n:
        raise UsageError(f"{what}: expected {n} numbers, got {v.size}")
    return v


def _seed(args) -> int:
    if args.seed is not None:
        return args.seed
    env = os.environ.get("NONHOLO_SEED")
    if env:
        try:
            return int(env)
        except ValueError:
            raise UsageError(f"NONHOLO_SEED={env!r} is not an integer") from None
    return 0


def _model(args):
    spec = models.get_spec(args.model)
    params = {}
    if args.config:
        params.update(models.load_params(args.config))
    params.update(_parse_kv(args.param))
    return spec, spec.make(params)


def _point(model, text: str) -> np.ndarray:
    if ";" not in text:
        raise UsageError("--at expects 'q1,...,qn;p1,...,pn'")
    qs, ps = text.split(";", 1)
    return np.concatenate([_vector(qs, model.n, "q"), _vector(ps, model.n, "p")])


def _run_config(args, spec, model, seed) -> dict:
    return {
        "command": args.command,
        "model": spec.name,
        "params": {k: float(v) for k, v in sorted(model.params.items())},
        "seed": seed,
    }


# ---------------------------------------------------------------------------
# Commands


def cmd_verify(args) -> int:
    spec, model = _model(args)
    seed = _seed(args)
    results = run_suite(model, seed=seed, points=args.points)
    ok = all(r.passed for r in results)
    _emit(
        {
            "config": _run_config(args, spec, model, seed),
            "points": args.points,
            "checks": [r.as_dict() for r in results],
            "passed": ok,
        },
        args.output,
    )
    return 0 if ok else 1


def cmd_brackets(args) -> int:
    spec, model = _model(args)
    seed = _seed(args)
    if args.at:
        x = _point(model, args.at)
        if args.project_initial:
            x = np.asarray(real(project_to_M(model, x)), dtype=float)
    else:
        x = models.sample_on_M(model, np.random.default_rng(seed))
    report: dict = {"config": _run_config(args, spec, model, seed), "x": x}
    if args.dump_gamma:
        P = eden_projector(model, x[: model.n], derivative=False)
        report["gamma"] = {
            "q": x[: model.n],
            "gamma": P.gamma,
            "eden_E": P.eden_E,
            "rank": P.rank,
            "idempotence_residual": P.idempotence_residual,
        }
    if args.table or not args.dump_gamma:
        B.require_on_M(model, x)
        labels, tables, disc = B.bracket_table(model, x)
        report["table"] = {
            "observables": labels,
            "brackets": {k: v for k, v in tables.items()},
            "max_discrepancy": disc,
        }
    _emit(report, args.output)
    return 0


def _write_csv(model, traj, handle):
    n = model.n
    diag_names = [k for k in traj.diagnostics if k != "residual"]
    w = csv.writer(handle, lineterminator="\n")
    w.writerow(
        ["t"]
        + list(model.coord_names)
        + [f"p_{c}" for c in model.coord_names]
        + ["constraint_residual"]
        + diag_names
    )
    for i, t in enumerate(traj.times):
        row = [t] + list(traj.states[i, :n]) + list(traj.states[i, n:]) + [traj.diagnostics["residual"][i]]
        row += [traj.diagnostics[k][i] for k in diag_names]
        w.writerow([_num(float(v)) for v in row])


def cmd_simulate(args) -> int:
    spec, model = _model(args)
    seed = _seed(args)
    if args.q0 is None and args.p0 is None:
        x0 = models.sample_on_M(model, np.random.default_rng(seed))
    elif args.q0 is None or args.p0 is None:
        raise UsageError("give both --q0 and --p0, or neither")
    else:
        x0 = np.concatenate([_vector(args.q0, model.n, "--q0"), _vector(args.p0, model.n, "--p0")])
    if args.dt <= 0 or args.t_end < 0:
        raise UsageError("need dt > 0 and t-end >= 0")
    traj = integrate(
        model,
        x0,
        args.t_end,
        args.dt,
        project_each_step=not args.no_project,
        project_initial=args.project_initial,
    )
    drifts = {k: traj.drift(k) for k in traj.diagnostics if k != "residual"}
    max_res = float(np.max(traj.diagnostics["residual"]))
    ok = traj.status == "ok" and all(v <= args.drift_tol for v in drifts.values()) and max_res <= RESIDUAL_TOL
    summary = {
        "config": _run_config(args, spec, model, seed),
        "x0": traj.states[0],
        "t_end": args.t_end,
        "dt": args.dt,
        "steps": int(len(traj.times) - 1),
        "project_each_step": not args.no_project,
        "status": traj.status,
        "max_constraint_residual": max_res,
        "max_drift": drifts,
        "drift_tol": args.drift_tol,
        "residual_tol": RESIDUAL_TOL,
        "passed": ok,
    }
    if args.csv:
        with open(args.csv, "w", encoding="utf-8", newline="") as fh:
            _write_csv(model, traj, fh)
        _emit(summary, args.output)
    else:
        buf = io.StringIO()
        _write_csv(model, traj, buf)
        sys.stdout.write(buf.getvalue())
        if args.output:
            _emit(summary, args.output)
        else:
            sys.stderr.write(to_json({"schema": SCHEMA, **summary}) + "\n")
    return 0 if ok else 1


def cmd_hj_check(args) -> int:
    spec, model = _model(args)
    seed = _seed(args)
    kwargs = _parse_kv(args.lambda_param, "lambda parameter")
    if args.lambda_ in spec.lambdas:
        try:
            lam = spec.lambdas[args.lambda_](model, **kwargs)
        except (TypeError, ValueError) as exc:
            raise UsageError(f"lambda {args.lambda_!r}: {exc}") from None
        label = args.lambda_
    elif Path(args.lambda_).is_file():
        lam = load_one_form(model, args.lambda_)
        label = lam.label
    else:
        raise UsageError(
            f"--lambda {args.lambda_!r} is neither a file nor a built-in for {spec.name} ({sorted(spec.lambdas)})"
        )
    grid = parse_grid(model, args.grid if args.grid is not None else spec.default_grid)
    rep = hj_report(model, lam, grid, tol=args.tol)
    ok = rep.classical_pass if args.mode == "classical" else rep.generalized_pass
    _emit(
        {
            "config": _run_config(args, spec, model, seed),
            "lambda": label,
            "mode": args.mode,
            "report": rep.as_dict(),
            "passed": ok,
        },
        args.output,
    )
    return 0 if ok else 1


# ---------------------------------------------------------------------------


CSV_HELP = (
    "CSV columns: t, the coordinates, p_<coordinate> for each momentum, "
    "constraint_residual (max |Psi|), energy, then the model's first integrals "
    "(f_a, f_b, f_c for the ball)."
)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nonholo", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--model", required=True, help=f"one of {sorted(models.REGISTRY)}")
    common.add_argument("--param", action="append", metavar="KEY=VALUE", help="model parameter (repeatable)")
    common.add_argument("--config", metavar="FILE", help="key = value parameter file")
    common.add_argument("--seed", type=int, help="random seed (fallback: $NONHOLO_SEED, then 0)")
    common.add_argument("--output", "-o", metavar="FILE", help="write the JSON report here")

    p = sub.add_parser("verify", parents=[common], help="run the invariant suite")
    p.add_argument("--points", type=int, default=20, help="random points per check (default 20)")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("brackets", parents=[common], help="bracket table and projector dump at a point")
    p.add_argument("--at", metavar="Q;P", help="phase point 'q1,..,qn;p1,..,pn' (default: seeded random point of M)")
    p.add_argument("--table", action="store_true", help="pairwise brackets under all three brackets")
    p.add_argument("--dump-gamma", action="store_true", help="gamma, Eden matrix, rank, idempotence residual")
    p.add_argument("--project-initial", action="store_true", help="project --at onto M first")
    p.set_defaults(func=cmd_brackets)

    p = sub.add_parser("simulate", parents=[common], help="RK4 trajectory on M", epilog=CSV_HELP)
    p.add_argument("--q0", help="comma-separated initial coordinates")
    p.add_argument("--p0", help="comma-separated initial momenta")
    p.add_argument("--t-end", type=float, default=1.0)
    p.add_argument("--dt", type=float, default=1e-3)
    p.add_argument("--no-project", action="store_true", help="skip the gamma re-projection after each step")
    p.add_argument("--project-initial", action="store_true", help="replace p0 by gamma(q0) p0")
    p.add_argument("--csv", metavar="FILE", help="CSV destination (default stdout; summary then goes to stderr)")
    p.add_argument("--drift-tol", type=float, default=DRIFT_TOL)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("hj-check", parents=[common], help="Hamilton-Jacobi residuals of a one-form")
    p.add_argument("--lambda", dest="lambda_", required=True, metavar="NAME|FILE")
    p.add_argument("--lambda-param", action="append", metavar="KEY=VALUE", help="argument of a built-in one-form")
    p.add_argument("--grid", help="e.g. 'y=-2:2:9, x=0.5' (default: per model)")
    p.add_argument("--mode", choices=("generalized", "classical"), default="generalized")
    p.add_argument("--tol", type=float, default=TOL_HJ)
    p.set_defaults(func=cmd_hj_check)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (UsageError, OffManifoldError, KeyError, ValueError, OSError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else str(exc)
        sys.stderr.write(f"nonholo {args.command}: error: {msg}\n")
        return 2


if __name__ == "__main__":
    sys.exit(main())
