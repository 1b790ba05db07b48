"""Gauge action on Lagrangians, the Pontryagin Hamiltonian and action functionals.

A gauge function ``f(t, q)`` shifts the Lagrangian by its total derivative along
admissible motions, ``L -> L + df/dt + df/dq_i * psi_i``, leaving the extremals
unchanged and moving the costates by ``df/dq``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import expr as ex
from .geometry import GeometryError, ProblemSpec, SampledCurve, state_symbols
from .numerics import derivative, derivative6, simpson

# Seed for the trial points of gauge_equivalent.
DEFAULT_SEED = 20231
DEFAULT_TRIAL_POINTS = 50
EXTRA_Z_SAMPLES = 2


class SpecMismatchError(ValueError):
    pass


@dataclass(frozen=True)
class GaugeFunction:
    f: ex.Node

    @classmethod
    def parse(cls, source: str, n: int) -> "GaugeFunction":
        return cls(ex.parse(source, ["t"] + state_symbols(n)))

    def check(self, n: int):
        extra = self.f.variables() - {"t", *state_symbols(n)}
        if extra:
            raise GeometryError(f"gauge function may only depend on t and q1..q{n}, found {sorted(extra)}")


@dataclass(frozen=True, eq=False)
class LiftedCurve:
    """A sampled curve in the constraint manifold together with costates ``p`` on the same grid."""

    curve: SampledCurve
    p: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.p, dtype=float)
        if p.ndim == 1:
            p = p[:, None]
        if p.shape != self.curve.q.shape:
            raise GeometryError(f"costates must have shape {self.curve.q.shape}, got {p.shape}")
        self.curve.require_z()
        object.__setattr__(self, "p", p)

    @property
    def t(self):
        return self.curve.t

    @property
    def q(self):
        return self.curve.q

    @property
    def z(self):
        return self.curve.z

    @property
    def h(self):
        return self.curve.h


@dataclass(frozen=True)
class PPCEvaluation:
    hamiltonian: float
    p0: float
    # dt-component of the Pontryagin-Poincare-Cartan form along (1, qdot); None without qdot
    theta_dt_coefficient: Optional[float] = None


@dataclass(frozen=True)
class GaugeVerdict:
    equivalent: bool
    max_residual: float
    affine_residual: float
    closure_residual: float
    trial_points: int = field(default=DEFAULT_TRIAL_POINTS)

    def line(self) -> str:
        return f"gauge_equivalent: {'true' if self.equivalent else 'false'} max_residual: {self.max_residual:.17g}"


def _as_gauge(f) -> GaugeFunction:
    if isinstance(f, GaugeFunction):
        return f
    if isinstance(f, ex.Node):
        return GaugeFunction(f)
    raise TypeError("expected a GaugeFunction or expression node")


def total_derivative(spec: ProblemSpec, f) -> ex.Node:
    """``df/dt + sum_i df/dq_i * psi_i`` as an expression over (t, q, z)."""
    g = _as_gauge(f)
    g.check(spec.n)
    out = ex.differentiate(g.f, "t")
    for name, psi_i in zip(state_symbols(spec.n), spec.psi):
        out = ex.add(out, ex.mul(ex.differentiate(g.f, name), psi_i))
    return out


def gauge_transform(spec: ProblemSpec, f) -> ProblemSpec:
    """Problem with Lagrangian ``L + df/dt`` along admissible motions; psi is untouched."""
    return spec.replace(lagrangian=ex.add(spec.lagrangian, total_derivative(spec, f)))


def pontryagin_hamiltonian(spec: ProblemSpec, t: float, q, p, z, qdot=None) -> PPCEvaluation:
    psi = spec.psi_at(t, q, z)
    L = ex.evaluate(spec.lagrangian, _point(spec, t, q, z))
    H = float(np.dot(p, psi) - L)
    theta = None
    if qdot is not None:
        theta = float(np.dot(p, qdot) - H)
    return PPCEvaluation(H, -H, theta)


def hamiltonian_grid(spec: ProblemSpec, lifted: LiftedCurve) -> np.ndarray:
    jet = spec.jet_grid(lifted.t, lifted.q, lifted.z)
    return np.einsum("ki,ki->k", lifted.p, jet.psi) - jet.L


def _point(spec: ProblemSpec, t, q, z) -> dict:
    pt = {"t": float(t)}
    pt.update({f"q{i + 1}": float(v) for i, v in enumerate(q)})
    pt.update({f"z{a + 1}": float(v) for a, v in enumerate(z)})
    return pt


def action(spec: ProblemSpec, curve: SampledCurve) -> float:
    """Simpson quadrature of the Lagrangian along the curve."""
    z = curve.require_z()
    return float(simpson(spec.lagrangian_grid(curve.t, curve.q, z), curve.h))


def ppc_action(spec: ProblemSpec, lifted: LiftedCurve) -> float:
    """Simpson quadrature of ``p . dq/dt - H``.

    ``dq/dt`` uses the sixth-order stencil: the identity with :func:`action` on
    admissible curves is only as good as ``max|p|`` times the stencil error.
    """
    dq = derivative6(lifted.q, lifted.h) if lifted.q.shape[0] >= 7 else derivative(lifted.q, lifted.h)
    integrand = np.einsum("ki,ki->k", lifted.p, dq) - hamiltonian_grid(spec, lifted)
    return float(simpson(integrand, lifted.h))


# --------------------------------------------------------------------------
# Gauge equivalence


def _check_same_constraints(a: ProblemSpec, b: ProblemSpec, rng: np.random.Generator, points: int, tol: float):
    if (a.n, a.r) != (b.n, b.r):
        raise SpecMismatchError(f"dimensions differ: (n, r) = {(a.n, a.r)} vs {(b.n, b.r)}")
    checked = 0
    for _ in range(10 * points):
        if checked >= points:
            break
        t = rng.uniform(a.t0, a.t1)
        q = rng.standard_normal(a.n)
        z = rng.standard_normal(a.r)
        try:
            pa, pb = a.psi_at(t, q, z), b.psi_at(t, q, z)
        except ex.ExprDomainError:
            continue
        if np.max(np.abs(pa - pb)) > tol * (1.0 + np.max(np.abs(pa))):
            raise SpecMismatchError(f"psi differs at t={t:.6g}, q={q}, z={z}")
        checked += 1


class _LocalFit:
    """Least-squares split ``D(x, z) = a(x) + b(x) . psi(x, z)`` at a fixed set of z samples.

    ``x = (t, q)``. The fitted ``g = (a, b)`` is determined up to the null space of
    the sample matrix; ``projector`` spans that freedom.
    """

    def __init__(self, spec_a: ProblemSpec, spec_b: ProblemSpec, zs: np.ndarray, x0: np.ndarray):
        self.a, self.b, self.zs = spec_a, spec_b, zs
        s, _ = self._system(x0)
        sv = np.linalg.svd(s, compute_uv=False)
        self.rank = int(np.sum(sv > 1e-10 * sv[0]))

    def _system(self, x):
        n = self.a.n
        m = self.zs.shape[0]
        t = np.full(m, x[0])
        q = np.tile(x[1:], (m, 1))
        psi = self.a.psi_grid(t, q, self.zs)
        d = self.b.lagrangian_grid(t, q, self.zs) - self.a.lagrangian_grid(t, q, self.zs)
        s = np.hstack([np.ones((m, 1)), psi])
        assert s.shape == (m, n + 1)
        return s, d

    def __call__(self, x):
        s, d = self._system(x)
        u, sv, vt = np.linalg.svd(s, full_matrices=False)
        k = self.rank
        vk = vt[:k].T
        g = vk @ ((u[:, :k].T @ d) / sv[:k])
        proj = np.eye(s.shape[1]) - vk @ vk.T
        resid = float(np.max(np.abs(s @ g - d)))
        return g, proj, resid


def _fd4(fun, x, mu, step):
    e = np.zeros_like(x)
    e[mu] = step
    fm2, fm1, fp1, fp2 = fun(x - 2 * e), fun(x - e), fun(x + e), fun(x + 2 * e)
    return tuple((a2 - 8 * a1 + 8 * b1 - b2) / (12 * step) for a2, a1, b1, b2 in zip(fm2, fm1, fp1, fp2))


def _closure_residual(fit: _LocalFit, x: np.ndarray) -> float:
    """How far the fitted ``(a, b)`` is from a gradient field in ``(t, q)``, allowing null-space corrections."""
    dim = x.shape[0]
    d_g, d_p = [], []
    for mu in range(dim):
        step = 1e-3 * max(1.0, abs(x[mu]))
        dg, dp = _fd4(lambda y: fit(y)[:2], x, mu, step)
        d_g.append(dg)
        d_p.append(dp)
    _, proj, _ = fit(x)
    # unknowns: y (dim) and J (dim x dim, J[l, m] = d y_l / d x_m)
    rows, rhs = [], []
    for mu in range(dim):
        for nu in range(mu + 1, dim):
            row = np.zeros(dim + dim * dim)
            row[:dim] = d_p[mu][nu] - d_p[nu][mu]
            jblock = np.zeros((dim, dim))
            jblock[:, mu] += proj[nu]
            jblock[:, nu] -= proj[mu]
            row[dim:] = jblock.ravel()
            rows.append(row)
            rhs.append(-(d_g[mu][nu] - d_g[nu][mu]))
    if not rows:
        return 0.0
    a = np.array(rows)
    b = np.array(rhs)
    if np.allclose(proj, 0.0):
        return float(np.max(np.abs(b)))
    sol, *_ = np.linalg.lstsq(a, b, rcond=None)
    return float(np.max(np.abs(a @ sol - b)))


def gauge_verdict(
    spec_a: ProblemSpec,
    spec_b: ProblemSpec,
    trial_points: int = DEFAULT_TRIAL_POINTS,
    tol: float = 1e-8,
    seed: int = DEFAULT_SEED,
) -> GaugeVerdict:
    """Sampling-based test that ``L_B - L_A`` is a total derivative ``df/dt``.

    At each trial point ``(t, q)`` the difference is fitted as ``a + b . psi`` over
    ``r + 3`` control samples; then ``(a, b)`` must be a gradient in ``(t, q)``
    up to the directions the samples cannot see. The verdict holds on the sampled
    set only.
    """
    rng = np.random.default_rng(seed)
    _check_same_constraints(spec_a, spec_b, rng, trial_points, 1e-12)
    n, r = spec_a.n, spec_a.r
    worst_affine = 0.0
    worst_closure = 0.0
    done = 0
    for _ in range(10 * trial_points):
        if done >= trial_points:
            break
        t = rng.uniform(spec_a.t0, spec_a.t1)
        q = rng.standard_normal(n)
        zs = rng.standard_normal((r + 1 + EXTRA_Z_SAMPLES, r))
        x = np.concatenate([[t], q])
        try:
            fit = _LocalFit(spec_a, spec_b, zs, x)
            _, _, affine = fit(x)
            closure = _closure_residual(fit, x)
        except ex.ExprDomainError:
            continue
        worst_affine = max(worst_affine, affine)
        worst_closure = max(worst_closure, closure)
        done += 1
    if done < trial_points:
        raise SpecMismatchError("could not find enough in-domain trial points")
    worst = max(worst_affine, worst_closure)
    return GaugeVerdict(bool(worst <= tol), worst, worst_affine, worst_closure, trial_points)


def gauge_equivalent(
    spec_a: ProblemSpec,
    spec_b: ProblemSpec,
    trial_points: int = DEFAULT_TRIAL_POINTS,
    tol: float = 1e-8,
    seed: int = DEFAULT_SEED,
) -> bool:
    return gauge_verdict(spec_a, spec_b, trial_points, tol, seed).equivalent
