"""Problem files.

A problem file is a YAML mapping with a fixed set of keys::

    n: 3                     # state dimension
    r: 2                     # control dimension, 1 <= r <= n
    interval: [0, 6.283185307179586]
    psi: ["z1", "z2", "q1*z2 - q2*z1"]
    lagrangian: "(z1^2 + z2^2)/2"
    implicit: ["qdot3 - q1*qdot2 + q2*qdot1"]    # optional, n - r entries
    gauge_f: "q1*q2"                              # optional, over t and q
    boundary: {q0: [0, 0, 0], q1: [0, 0, 6.283185307179586]}   # optional
    solver: {shoot_tol: 1.0e-8, initial_p0_guesses: [[1, 0, 0.5]]}  # optional
    grid_N: 400              # optional
    rank_tol: 1.0e-10        # optional
    svd_tol: 1.0e-8          # optional

Interval end-points may also be constant expressions such as ``"2*atan2(0, -1)"``.
Any other key is rejected.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import yaml

from . import expr as ex
from .geometry import RANK_RTOL, GeometryError, ProblemSpec, control_symbols, state_symbols, velocity_symbols
from .pontryagin import ShootingConfig

KEYS = {"n", "r", "interval", "psi", "lagrangian", "implicit", "gauge_f", "boundary", "solver", "grid_N", "rank_tol", "svd_tol"}
REQUIRED = ("n", "r", "interval", "psi", "lagrangian")
SOLVER_KEYS = {"newton_tol", "max_newton", "shoot_tol", "max_shoot", "initial_p0_guesses", "seed", "random_guesses", "z_guess"}
DEFAULT_GRID_N = 400


class ProblemFileError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Problem:
    spec: ProblemSpec
    path: Optional[Path] = None
    sha256: str = ""
    boundary: Optional[tuple] = None
    solver: dict = field(default_factory=dict)
    grid_N: int = DEFAULT_GRID_N
    rank_tol: float = RANK_RTOL
    svd_tol: float = 1e-8

    def shooting_config(self, seed: Optional[int] = None) -> ShootingConfig:
        opts = dict(self.solver)
        if seed is not None:
            opts["seed"] = seed
        return ShootingConfig(N=self.grid_N, **opts)

    def resolved(self) -> dict:
        return {
            "n": self.spec.n,
            "r": self.spec.r,
            "interval": [self.spec.t0, self.spec.t1],
            "psi": [str(e) for e in self.spec.psi],
            "lagrangian": str(self.spec.lagrangian),
            "gauge_f": None if self.spec.gauge is None else str(self.spec.gauge),
            "boundary": None if self.boundary is None else {"q0": list(self.boundary[0]), "q1": list(self.boundary[1])},
            "solver": self.solver,
            "grid_N": self.grid_N,
            "rank_tol": self.rank_tol,
            "svd_tol": self.svd_tol,
        }


class _Ctx:
    def __init__(self, origin: str, lines: dict):
        self.origin = origin
        self.lines = lines

    def fail(self, key: Optional[str], message: str):
        line = self.lines.get(key, 1) if key else 1
        where = f"key '{key}': " if key else ""
        raise ProblemFileError(f"{self.origin}:{line}: {where}{message}")


def _key_lines(text: str) -> dict:
    try:
        node = yaml.compose(text, Loader=yaml.SafeLoader)
    except yaml.YAMLError:
        return {}
    if not isinstance(node, yaml.MappingNode):
        return {}
    return {k.value: k.start_mark.line + 1 for k, _ in node.value if isinstance(k, yaml.ScalarNode)}


def _int(ctx, data, key, default=None):
    v = data.get(key, default)
    if isinstance(v, bool) or not isinstance(v, int):
        ctx.fail(key, f"expected an integer, got {v!r}")
    return v


def _real(ctx, key, v):
    if isinstance(v, bool):
        ctx.fail(key, f"expected a number, got {v!r}")
    if isinstance(v, (int, float)):
        return float(v)
    if isinstance(v, str):
        try:
            return ex.evaluate(ex.parse(v, []), {})
        except ex.ExprError as exc:
            ctx.fail(key, f"bad constant expression {v!r}: {exc}")
    ctx.fail(key, f"expected a number, got {v!r}")


def _vector(ctx, key, v, size):
    if not isinstance(v, list) or len(v) != size:
        ctx.fail(key, f"expected a list of {size} numbers, got {v!r}")
    return [_real(ctx, key, x) for x in v]


def _expressions(ctx, key, v, size, symbols):
    if not isinstance(v, list):
        ctx.fail(key, f"expected a list of {size} expression strings")
    if len(v) != size:
        ctx.fail(key, f"expected {size} entries, got {len(v)}")
    return tuple(_expression(ctx, key, s, symbols) for s in v)


def _expression(ctx, key, s, symbols):
    if isinstance(s, (int, float)) and not isinstance(s, bool):
        s = repr(float(s)) if s >= 0 else f"-{-float(s)!r}"
    if not isinstance(s, str):
        ctx.fail(key, f"expected an expression string, got {s!r}")
    try:
        return ex.parse(s, symbols)
    except ex.ExprError as exc:
        ctx.fail(key, f"{exc} in {s!r}")


def parse_problem(text: str, origin: str = "<problem>") -> Problem:
    """Validate the whole document and build a :class:`Problem`; raises :class:`ProblemFileError`."""
    ctx = _Ctx(origin, _key_lines(text))
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        line = mark.line + 1 if mark is not None else 1
        raise ProblemFileError(f"{origin}:{line}: malformed document: {getattr(exc, 'problem', exc)}") from None
    if not isinstance(data, dict):
        raise ProblemFileError(f"{origin}:1: top level must be a mapping")
    unknown = sorted(set(data) - KEYS, key=str)
    if unknown:
        ctx.fail(str(unknown[0]), "unknown key")
    for key in REQUIRED:
        if key not in data:
            ctx.fail(None, f"missing required key '{key}'")
    n = _int(ctx, data, "n")
    r = _int(ctx, data, "r")
    if n < 1:
        ctx.fail("n", "must be positive")
    if not 1 <= r <= n:
        ctx.fail("r", f"must satisfy 1 <= r <= n = {n}")
    interval = data["interval"]
    if not isinstance(interval, list) or len(interval) != 2:
        ctx.fail("interval", "expected [t0, t1]")
    t0, t1 = (_real(ctx, "interval", v) for v in interval)
    if not t0 < t1:
        ctx.fail("interval", "must be increasing")
    syms = ["t"] + state_symbols(n) + control_symbols(r)
    psi = _expressions(ctx, "psi", data["psi"], n, syms)
    lagrangian = _expression(ctx, "lagrangian", data["lagrangian"], syms)
    implicit = None
    if data.get("implicit") is not None:
        vel = ["t"] + state_symbols(n) + velocity_symbols(n)
        implicit = _expressions(ctx, "implicit", data["implicit"], n - r, vel)
    gauge = None
    if data.get("gauge_f") is not None:
        gauge = _expression(ctx, "gauge_f", data["gauge_f"], ["t"] + state_symbols(n))
    boundary = None
    if "boundary" in data:
        b = data["boundary"]
        if not isinstance(b, dict) or set(b) != {"q0", "q1"}:
            ctx.fail("boundary", "expected a mapping with exactly q0 and q1")
        boundary = (tuple(_vector(ctx, "boundary", b["q0"], n)), tuple(_vector(ctx, "boundary", b["q1"], n)))
    solver = data.get("solver") or {}
    if not isinstance(solver, dict):
        ctx.fail("solver", "expected a mapping")
    bad = sorted(set(solver) - SOLVER_KEYS, key=str)
    if bad:
        ctx.fail("solver", f"unknown solver option '{bad[0]}'")
    grid_N = _int(ctx, data, "grid_N", DEFAULT_GRID_N)
    rank_tol = _real(ctx, "rank_tol", data.get("rank_tol", RANK_RTOL))
    svd_tol = _real(ctx, "svd_tol", data.get("svd_tol", 1e-8))
    try:
        spec = ProblemSpec(n, r, psi, lagrangian, t0, t1, implicit, gauge)
    except GeometryError as exc:
        ctx.fail(None, str(exc))
    problem = Problem(spec, None, hashlib.sha256(text.encode()).hexdigest(), boundary, dict(solver), grid_N, rank_tol, svd_tol)
    try:
        problem.shooting_config().guesses(n)
    except (ValueError, TypeError) as exc:
        ctx.fail("solver" if solver else "grid_N", str(exc))
    return problem


def load_problem(path) -> Problem:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ProblemFileError(f"{path}: cannot read ({exc.strerror})") from None
    problem = parse_problem(text, str(path))
    return Problem(
        problem.spec, path, problem.sha256, problem.boundary, problem.solver, problem.grid_N, problem.rank_tol, problem.svd_tol
    )


def file_sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()

