"""Command-line entry point: ``varigauge <check|solve|lift|index|gauge|action>``.

Exit codes: 0 success, 1 a computed negative result (inadmissible curve, no
convergence, not an extremal, not gauge equivalent), 2 bad input. Every input is
validated before any computation starts.
"""
from __future__ import annotations

import argparse
import json
import sys
import time
from dataclasses import asdict
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .abnormality import abnormality_index
from .csvio import CurveFileError, read_curve, read_lifted, write_key_values, write_lifted
from .gauge import DEFAULT_SEED as GAUGE_SEED
from .gauge import DEFAULT_TRIAL_POINTS, SpecMismatchError, action, gauge_transform, gauge_verdict, ppc_action
from .geometry import GeometryError, SampledCurve, check_admissible
from .pontryagin import hamiltonian_drift, reconstruct_costates, shoot
from .problem import Problem, ProblemFileError, file_sha256, load_problem
from .variation import ADMISSIBLE_TOL, InadmissibleCurveError

OK, NEGATIVE, BAD_INPUT = 0, 1, 2


class UsageError(Exception):
    pass


def _jsonable(obj):
    if isinstance(obj, (np.ndarray, np.generic)):
        return obj.tolist()
    if isinstance(obj, tuple):
        return list(obj)
    raise TypeError(f"cannot serialize {type(obj).__name__}")


class _Run:
    """Collects outputs and writes the run manifest."""

    def __init__(self, command: str):
        self.command = command
        self.started = time.perf_counter()
        self.inputs: dict[str, str] = {}
        self.outputs: list[str] = []
        self.config: dict = {}

    def add_input(self, path):
        self.inputs[str(path)] = file_sha256(path)

    def emit(self, lines: list[str], prefix: Optional[str]):
        for line in lines:
            print(line)
        if prefix:
            path = f"{prefix}.summary.txt"
            write_key_values(path, lines)
            self.outputs.append(path)

    def finish(self, prefix: Optional[str], status: int) -> int:
        if prefix:
            path = f"{prefix}.manifest.json"
            manifest = {
                "command": self.command,
                "version": __version__,
                "config": self.config,
                "inputs": self.inputs,
                "outputs": self.outputs + [path],
                "exit_code": status,
                "wall_time_s": time.perf_counter() - self.started,
            }
            Path(path).write_text(json.dumps(manifest, indent=2, sort_keys=True, default=_jsonable) + "\n")
        return status


def _problem(path: str, run: _Run, apply_gauge: bool = False) -> Problem:
    problem = load_problem(path)
    run.add_input(path)
    if apply_gauge:
        if problem.spec.gauge is None:
            raise UsageError(f"{path}: --apply-gauge needs a 'gauge_f' key")
        problem = Problem(
            gauge_transform(problem.spec, problem.spec.gauge),
            problem.path,
            problem.sha256,
            problem.boundary,
            problem.solver,
            problem.grid_N,
            problem.rank_tol,
            problem.svd_tol,
        )
    run.config.setdefault("problems", []).append(problem.resolved())
    return problem


def _curve(path: str, problem: Problem, run: _Run, lifted: bool = False):
    curve = read_lifted(path) if lifted else read_curve(path)
    run.add_input(path)
    if curve.q.shape[1] != problem.spec.n:
        raise UsageError(f"{path}: curve has {curve.q.shape[1]} state columns, problem has n = {problem.spec.n}")
    z = curve.z
    if z is not None and z.shape[1] != problem.spec.r:
        raise UsageError(f"{path}: curve has {z.shape[1]} control columns, problem has r = {problem.spec.r}")
    return curve


def _base(curve) -> SampledCurve:
    return curve.curve if hasattr(curve, "curve") else curve


def _needs_controls(curve, path: str):
    if _base(curve).z is None:
        raise UsageError(f"{path}: z columns are required for this command")


def cmd_check(args) -> int:
    run = _Run("check")
    problem = _problem(args.problem, run, args.apply_gauge)
    curve = _curve(args.curve, problem, run)
    _needs_controls(curve, args.curve)
    if curve.N < 4:
        raise UsageError(f"{args.curve}: at least 5 samples are needed")
    run.config["tol"] = args.tol
    report = check_admissible(problem.spec, curve, args.tol)
    lines = [
        f"admissible: {'true' if report.admissible else 'false'}",
        f"max_residual: {report.max_residual:.17g}",
        f"worst_t: {curve.t[report.worst_index]:.17g}",
    ]
    run.emit(lines, args.out)
    return run.finish(args.out, OK if report.admissible else NEGATIVE)


def cmd_solve(args) -> int:
    run = _Run("solve")
    problem = _problem(args.problem, run, args.apply_gauge)
    if problem.boundary is None:
        raise UsageError(f"{args.problem}: key 'boundary' is required by solve")
    cfg = problem.shooting_config(args.seed)
    run.config["shooting"] = asdict(cfg)
    q0, q1 = problem.boundary
    sol = shoot(problem.spec, q0, q1, cfg)
    lines = sol.summary_lines()
    if sol.lifted is not None:
        path = f"{args.out}.curve.csv"
        write_lifted(path, sol.lifted)
        run.outputs.append(path)
        lines.append(f"action: {action(problem.spec, sol.lifted.curve):.17g}")
        lines.append(f"hamiltonian_drift: {hamiltonian_drift(problem.spec, sol.lifted):.17g}")
    run.emit(lines, args.out)
    return run.finish(args.out, OK if sol.converged else NEGATIVE)


def cmd_lift(args) -> int:
    run = _Run("lift")
    problem = _problem(args.problem, run, args.apply_gauge)
    curve = _curve(args.curve, problem, run)
    _needs_controls(curve, args.curve)
    rec = reconstruct_costates(problem.spec, _base(curve), problem.shooting_config(args.seed))
    lines = rec.summary_lines()
    if args.out:
        path = f"{args.out}.lifted.csv"
        write_lifted(path, rec.lifted)
        run.outputs.append(path)
    run.emit(lines, args.out)
    return run.finish(args.out, OK if rec.certified else NEGATIVE)


def cmd_index(args) -> int:
    run = _Run("index")
    problem = _problem(args.problem, run, args.apply_gauge)
    curve = _curve(args.curve, problem, run)
    _needs_controls(curve, args.curve)
    svd_tol = problem.svd_tol if args.svd_tol is None else args.svd_tol
    run.config["svd_tol"] = svd_tol
    report = abnormality_index(problem.spec, _base(curve), svd_tol)
    if args.out:
        for k, path_curve in enumerate(report.basis):
            path = f"{args.out}.basis{k}.csv"
            write_lifted(path, path_curve)
            run.outputs.append(path)
    run.emit(report.summary_lines(), args.out)
    return run.finish(args.out, OK)


def cmd_gauge(args) -> int:
    run = _Run("gauge")
    first = _problem(args.problem_a, run, args.apply_gauge and args.problem_b is not None)
    if args.problem_b is None:
        if first.spec.gauge is None:
            raise UsageError(f"{args.problem_a}: a single problem file needs a 'gauge_f' key")
        second = gauge_transform(first.spec, first.spec.gauge)
    else:
        second = _problem(args.problem_b, run, args.apply_gauge).spec
    seed = GAUGE_SEED if args.seed is None else args.seed
    run.config.update(trial_points=args.trial_points, tol=args.tol, seed=seed)
    verdict = gauge_verdict(first.spec, second, args.trial_points, args.tol, seed)
    lines = [
        verdict.line(),
        f"affine_residual: {verdict.affine_residual:.17g}",
        f"closure_residual: {verdict.closure_residual:.17g}",
        f"trial_points: {verdict.trial_points}",
    ]
    run.emit(lines, args.out)
    return run.finish(args.out, OK if verdict.equivalent else NEGATIVE)


def cmd_action(args) -> int:
    run = _Run("action")
    problem = _problem(args.problem, run, args.apply_gauge)
    curve = _curve(args.curve, problem, run, lifted=args.ppc)
    _needs_controls(curve, args.curve)
    base = _base(curve)
    lines = []
    if base.N >= 4:
        report = check_admissible(problem.spec, base, ADMISSIBLE_TOL)
        lines.append(f"admissible: {'true' if report.admissible else 'false'}")
    if args.ppc:
        lines.append(f"ppc_action: {ppc_action(problem.spec, curve):.17g}")
    else:
        lines.append(f"action: {action(problem.spec, base):.17g}")
    run.emit(lines, args.out)
    return run.finish(args.out, OK)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="varigauge", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, out_required=False):
        p.add_argument("--out", required=out_required, help="prefix for written files")
        p.add_argument("--apply-gauge", action="store_true", help="add d(gauge_f)/dt to the Lagrangian first")

    p = sub.add_parser("check", help="test a sampled curve for admissibility")
    p.add_argument("problem")
    p.add_argument("curve")
    p.add_argument("--tol", type=float, default=ADMISSIBLE_TOL)
    common(p)
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("solve", help="shoot for an extremal between the boundary points")
    p.add_argument("problem")
    p.add_argument("--seed", type=int)
    common(p, out_required=True)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("lift", help="reconstruct costates along an admissible curve")
    p.add_argument("problem")
    p.add_argument("curve")
    p.add_argument("--seed", type=int)
    common(p)
    p.set_defaults(func=cmd_lift)

    p = sub.add_parser("index", help="abnormality index of an admissible curve")
    p.add_argument("problem")
    p.add_argument("curve")
    p.add_argument("--svd-tol", type=float)
    common(p)
    p.set_defaults(func=cmd_index)

    p = sub.add_parser("gauge", help="test two problems for gauge equivalence")
    p.add_argument("problem_a")
    p.add_argument("problem_b", nargs="?")
    p.add_argument("--trial-points", type=int, default=DEFAULT_TRIAL_POINTS)
    p.add_argument("--tol", type=float, default=1e-8)
    p.add_argument("--seed", type=int)
    common(p)
    p.set_defaults(func=cmd_gauge)

    p = sub.add_parser("action", help="action (or PPC action with --ppc) of a curve")
    p.add_argument("problem")
    p.add_argument("curve")
    p.add_argument("--ppc", action="store_true", help="integrate the PPC form; needs p columns")
    common(p)
    p.set_defaults(func=cmd_action)
    return parser


def main(argv: Optional[list[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ProblemFileError, CurveFileError, UsageError, SpecMismatchError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return BAD_INPUT
    except InadmissibleCurveError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return NEGATIVE
    except GeometryError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return BAD_INPUT
    except (ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"error: computation failed: {exc}", file=sys.stderr)
        return NEGATIVE


if __name__ == "__main__":
    sys.exit(main())
