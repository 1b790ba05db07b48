"""Event space, constraint manifold and admissible curves.

The constraint manifold is given parametrically, ``dq/dt = psi(t, q, z)``, with
``n`` state coordinates ``q1..qn`` and ``r`` controls ``z1..zr``. An implicit
description ``g(t, q, qdot) = 0`` may be attached for consistency checks only.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Mapping, NamedTuple, Optional, Sequence

import numpy as np

from . import expr as ex
from .numerics import derivative, numerical_rank

RANK_RTOL = 1e-10
IMPLICIT_TOL = 1e-9
# integrate_admissible output passes check_admissible at tol = RK4_ADMISSIBLE_C * h**4
# for problems whose solutions have O(1) derivatives up to fifth order.
RK4_ADMISSIBLE_C = 10.0


class GeometryError(ValueError):
    pass


def state_symbols(n: int) -> list[str]:
    return [f"q{i + 1}" for i in range(n)]


def control_symbols(r: int) -> list[str]:
    return [f"z{a + 1}" for a in range(r)]


def velocity_symbols(n: int) -> list[str]:
    return [f"qdot{i + 1}" for i in range(n)]


class Jet(NamedTuple):
    """Values and first partials of psi and the Lagrangian at one or many points."""

    psi: np.ndarray
    psi_q: np.ndarray
    psi_z: np.ndarray
    L: np.ndarray
    L_q: np.ndarray
    L_z: np.ndarray


@dataclass(frozen=True, eq=False)
class ProblemSpec:
    n: int
    r: int
    psi: tuple
    lagrangian: ex.Node
    t0: float = 0.0
    t1: float = 1.0
    implicit: Optional[tuple] = None
    gauge: Optional[ex.Node] = None

    def __post_init__(self):
        if self.n < 1:
            raise GeometryError("n must be a positive integer")
        if not 1 <= self.r <= self.n:
            raise GeometryError("r must satisfy 1 <= r <= n")
        if len(self.psi) != self.n:
            raise GeometryError(f"psi must have {self.n} components, got {len(self.psi)}")
        if not self.t0 < self.t1:
            raise GeometryError("interval must satisfy t0 < t1")
        object.__setattr__(self, "psi", tuple(self.psi))
        allowed = set(self.symbols)
        for e in self.psi + (self.lagrangian,):
            extra = e.variables() - allowed
            if extra:
                raise GeometryError(f"undeclared symbol(s) {sorted(extra)} in '{e}'")
        if self.implicit is not None:
            object.__setattr__(self, "implicit", tuple(self.implicit))
            if len(self.implicit) != self.n - self.r:
                raise GeometryError(f"implicit must have n - r = {self.n - self.r} components")
            vel = {"t", *state_symbols(self.n), *velocity_symbols(self.n)}
            for g in self.implicit:
                extra = g.variables() - vel
                if extra:
                    raise GeometryError(f"undeclared symbol(s) {sorted(extra)} in implicit '{g}'")
            self._check_implicit()
        if self.gauge is not None:
            extra = self.gauge.variables() - {"t", *state_symbols(self.n)}
            if extra:
                raise GeometryError(f"gauge function may only depend on t and q, found {sorted(extra)}")

    def _check_implicit(self, samples: int = 20, seed: int = 0):
        """Both descriptions of the constraint must agree at sampled points."""
        rng = np.random.default_rng(seed)
        for _ in range(samples):
            pt = {"t": float(rng.uniform(self.t0, self.t1))}
            pt.update({s: float(v) for s, v in zip(state_symbols(self.n), rng.standard_normal(self.n))})
            pt.update({s: float(v) for s, v in zip(control_symbols(self.r), rng.standard_normal(self.r))})
            try:
                vel = [ex.evaluate(e, pt) for e in self.psi]
                pt.update(zip(velocity_symbols(self.n), vel))
                worst = max(abs(ex.evaluate(g, pt)) for g in self.implicit)
            except ex.ExprDomainError:
                continue
            scale = max(1.0, *(abs(v) for v in pt.values()))
            if worst > IMPLICIT_TOL * scale**2:
                raise GeometryError(f"implicit constraints disagree with psi: residual {worst:.3e} at {pt}")

    @classmethod
    def from_strings(
        cls,
        n: int,
        r: int,
        psi: Sequence[str],
        lagrangian: str,
        interval: tuple = (0.0, 1.0),
        implicit: Optional[Sequence[str]] = None,
        gauge: Optional[str] = None,
    ) -> "ProblemSpec":
        syms = ["t"] + state_symbols(n) + control_symbols(r)
        implicit_nodes = None
        if implicit is not None:
            vel = ["t"] + state_symbols(n) + velocity_symbols(n)
            implicit_nodes = tuple(ex.parse(g, vel) for g in implicit)
        gauge_node = ex.parse(gauge, ["t"] + state_symbols(n)) if gauge is not None else None
        return cls(
            n=n,
            r=r,
            psi=tuple(ex.parse(s, syms) for s in psi),
            lagrangian=ex.parse(lagrangian, syms),
            t0=float(interval[0]),
            t1=float(interval[1]),
            implicit=implicit_nodes,
            gauge=gauge_node,
        )

    def replace(self, **changes) -> "ProblemSpec":
        fields = dict(
            n=self.n, r=self.r, psi=self.psi, lagrangian=self.lagrangian, t0=self.t0, t1=self.t1,
            implicit=self.implicit, gauge=self.gauge,
        )
        fields.update(changes)
        return ProblemSpec(**fields)

    @property
    def symbols(self) -> list[str]:
        return ["t"] + state_symbols(self.n) + control_symbols(self.r)

    # -- compiled kernels -------------------------------------------------

    @cached_property
    def _psi_kernel(self) -> Callable:
        return ex.compile_jet(self.psi, self.symbols)

    @cached_property
    def _jet_kernel(self) -> Callable:
        return ex.compile_jet(self.psi + (self.lagrangian,), self.symbols, self.symbols[1:])

    @cached_property
    def _zjet_kernel(self) -> Callable:
        return ex.compile_jet(self.psi + (self.lagrangian,), self.symbols, control_symbols(self.r))

    @cached_property
    def _jet_grid_kernel(self) -> Callable:
        return ex.compile_jet(self.psi + (self.lagrangian,), self.symbols, self.symbols[1:], vectorized=True)

    @cached_property
    def _psi_grid_kernel(self) -> Callable:
        return ex.compile_jet(self.psi, self.symbols, vectorized=True)

    @cached_property
    def _lagrangian_grid_kernel(self) -> Callable:
        return ex.compile_jet((self.lagrangian,), self.symbols, vectorized=True)

    def psi_at(self, t: float, q, z) -> np.ndarray:
        vals, _ = self._psi_kernel(t, *q, *z)
        return np.array(vals, dtype=float)

    def jet(self, t: float, q, z) -> Jet:
        vals, grads = self._jet_kernel(t, *q, *z)
        n = self.n
        g = np.array(grads, dtype=float)
        return Jet(np.array(vals[:n]), g[:n, :n], g[:n, n:], vals[n], g[n, :n], g[n, n:])

    def control_jet(self, t: float, q, z) -> tuple[np.ndarray, np.ndarray]:
        """``(dpsi/dz, dL/dz)`` at one point."""
        _, grads = self._zjet_kernel(t, *q, *z)
        g = np.array(grads, dtype=float)
        return g[: self.n], g[self.n]

    def jet_grid(self, t, q, z) -> Jet:
        """Vectorized :meth:`jet` over ``M`` points: ``t (M,)``, ``q (M, n)``, ``z (M, r)``."""
        t = np.asarray(t, dtype=float)
        q = np.asarray(q, dtype=float)
        z = np.asarray(z, dtype=float)
        m = t.shape[0]
        vals, grads = self._jet_grid_kernel(t, *q.T, *z.T)
        n, r = self.n, self.r
        v = np.empty((m, n + 1))
        g = np.empty((m, n + 1, n + r))
        for i in range(n + 1):
            v[:, i] = vals[i]
            for j in range(n + r):
                g[:, i, j] = grads[i][j]
        return Jet(v[:, :n], g[:, :n, :n], g[:, :n, n:], v[:, n], g[:, n, :n], g[:, n, n:])

    def psi_grid(self, t, q, z) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        vals, _ = self._psi_grid_kernel(t, *np.asarray(q, float).T, *np.asarray(z, float).T)
        return np.stack([np.broadcast_to(np.asarray(v, float), t.shape) for v in vals], axis=1)

    def lagrangian_grid(self, t, q, z) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        vals, _ = self._lagrangian_grid_kernel(t, *np.asarray(q, float).T, *np.asarray(z, float).T)
        return np.broadcast_to(np.asarray(vals[0], dtype=float), t.shape).copy()

    def implicit_residual(self, t, q, z) -> float:
        """Max ``|g(t, q, psi(t, q, z))|`` over sampled points; 0 when no implicit form is attached."""
        if self.implicit is None or not self.implicit:
            return 0.0
        t = np.atleast_1d(np.asarray(t, dtype=float))
        q = np.atleast_2d(np.asarray(q, dtype=float))
        z = np.atleast_2d(np.asarray(z, dtype=float))
        vel = self.jet_grid(t, q, z).psi
        kern = ex.compile_jet(
            self.implicit, ["t"] + state_symbols(self.n) + velocity_symbols(self.n), vectorized=True
        )
        vals, _ = kern(t, *q.T, *vel.T)
        return float(max(np.max(np.abs(np.broadcast_to(np.asarray(v, float), t.shape))) for v in vals))


@dataclass(frozen=True, eq=False)
class SampledCurve:
    """Curve sampled on a uniform grid; ``z`` is absent for curves in the event space only."""

    t: np.ndarray
    q: np.ndarray
    z: Optional[np.ndarray] = None

    def __post_init__(self):
        t = np.asarray(self.t, dtype=float)
        q = np.asarray(self.q, dtype=float)
        if q.ndim == 1:
            q = q[:, None]
        if t.ndim != 1 or t.shape[0] < 3:
            raise GeometryError("grid needs at least 3 points (N >= 2)")
        if q.shape[0] != t.shape[0]:
            raise GeometryError("q must have one row per grid point")
        steps = np.diff(t)
        h = (t[-1] - t[0]) / (t.shape[0] - 1)
        if h <= 0 or not np.allclose(steps, h, rtol=1e-9, atol=1e-12 * max(1.0, abs(t[-1]))):
            raise GeometryError("grid must be uniform and strictly increasing")
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "q", q)
        if self.z is not None:
            z = np.asarray(self.z, dtype=float)
            if z.ndim == 1:
                z = z[:, None]
            if z.shape[0] != t.shape[0]:
                raise GeometryError("z must have one row per grid point")
            object.__setattr__(self, "z", z)

    @classmethod
    def from_functions(cls, t0: float, t1: float, N: int, q: Callable, z: Optional[Callable] = None):
        """Sample ``q(t)`` (and ``z(t)``) returning arrays of shape ``(M, n)`` for ``t`` of shape ``(M,)``."""
        t = np.linspace(t0, t1, N + 1)
        return cls(t, np.asarray(q(t), float), None if z is None else np.asarray(z(t), float))

    @property
    def N(self) -> int:
        return self.t.shape[0] - 1

    @property
    def h(self) -> float:
        return (self.t[-1] - self.t[0]) / self.N

    @property
    def n(self) -> int:
        return self.q.shape[1]

    def require_z(self) -> np.ndarray:
        if self.z is None:
            raise GeometryError("curve has no control samples z")
        return self.z


@dataclass(frozen=True)
class AdmissibilityReport:
    max_residual: float
    residual_profile: np.ndarray = field(repr=False)
    admissible: bool
    tol: float

    @property
    def worst_index(self) -> int:
        return int(np.argmax(np.max(self.residual_profile, axis=1)))


def _check_compatible(spec: ProblemSpec, curve: SampledCurve):
    if curve.n != spec.n:
        raise GeometryError(f"curve has {curve.n} state columns, problem has n = {spec.n}")
    z = curve.require_z()
    if z.shape[1] != spec.r:
        raise GeometryError(f"curve has {z.shape[1]} control columns, problem has r = {spec.r}")


def check_rank(spec: ProblemSpec, point: Mapping[str, float], rtol: float = RANK_RTOL) -> int:
    """Numerical rank of ``dpsi/dz`` at ``point`` (keys ``t``, ``q1..``, ``z1..``)."""
    missing = [s for s in spec.symbols if s not in point]
    if missing:
        raise GeometryError(f"point lacks values for {missing}")
    t = point["t"]
    q = [point[s] for s in state_symbols(spec.n)]
    z = [point[s] for s in control_symbols(spec.r)]
    return numerical_rank(np.linalg.svd(spec.jet(t, q, z).psi_z, compute_uv=False), rtol)


def check_admissible(spec: ProblemSpec, curve: SampledCurve, tol: float) -> AdmissibilityReport:
    """Residual of ``dq/dt = psi`` with a fourth-order derivative stencil. Never reads the Lagrangian."""
    _check_compatible(spec, curve)
    if curve.N < 4:
        raise GeometryError("admissibility check needs N >= 4")
    dq = derivative(curve.q, curve.h)
    psi = spec.psi_grid(curve.t, curve.q, curve.z)
    profile = np.abs(dq - psi)
    worst = float(np.max(profile))
    return AdmissibilityReport(worst, profile, bool(worst <= tol), tol)


def integrate_admissible(spec: ProblemSpec, q0, controls: Callable, N: int) -> SampledCurve:
    """RK4 for ``dq/dt = psi(t, q, controls(t))`` on ``N`` uniform steps over the problem interval."""
    if N < 2:
        raise GeometryError("N must be at least 2")
    t = np.linspace(spec.t0, spec.t1, N + 1)
    h = (spec.t1 - spec.t0) / N
    q = np.empty((N + 1, spec.n))
    z = np.empty((N + 1, spec.r))
    q[0] = np.asarray(q0, dtype=float)
    z[0] = controls(t[0])
    for k in range(N):
        tk = t[k]
        zm = np.asarray(controls(tk + 0.5 * h), dtype=float)
        z[k + 1] = controls(t[k + 1])
        y = q[k]
        k1 = spec.psi_at(tk, y, z[k])
        k2 = spec.psi_at(tk + 0.5 * h, y + 0.5 * h * k1, zm)
        k3 = spec.psi_at(tk + 0.5 * h, y + 0.5 * h * k2, zm)
        k4 = spec.psi_at(t[k + 1], y + h * k3, z[k + 1])
        q[k + 1] = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.all(np.isfinite(q[k + 1])):
            raise GeometryError(f"non-finite state during integration at t = {t[k + 1]!r}")
    return SampledCurve(t, q, z)
