"""Infinitesimal deformations of admissible curves.

Along an admissible base curve the linearized constraint reads
``dX/dt = psi_q X + psi_z Gamma``. Its adjoint fundamental matrix ``A`` solves
``dA/dt = -A psi_q`` so that ``d(A X)/dt = A psi_z Gamma``; integrating the right
side tells whether a control perturbation ``Gamma`` returns ``X`` to zero at the
final time.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .geometry import GeometryError, ProblemSpec, SampledCurve, check_admissible
from .numerics import derivative, midpoints, rk4_sampled, simpson

ADMISSIBLE_TOL = 1e-6


class InadmissibleCurveError(GeometryError):
    def __init__(self, max_residual: float, tol: float = ADMISSIBLE_TOL):
        self.max_residual = max_residual
        super().__init__(f"base curve is not admissible: max_residual {max_residual:.3e} > {tol:.1e}")


class FlowSingularityError(ArithmeticError):
    pass


def require_admissible(spec: ProblemSpec, base: SampledCurve, tol: float = ADMISSIBLE_TOL):
    report = check_admissible(spec, base, tol)
    if not report.admissible:
        raise InadmissibleCurveError(report.max_residual, tol)
    return report


@dataclass(frozen=True, eq=False)
class BaseCoefficients:
    """Partials of psi and L along a base curve at grid nodes and interval midpoints.

    Midpoint values come from cubic interpolation of the sampled ``(q, z)``.
    """

    nodes: object
    mids: object
    h: float

    @classmethod
    def along(cls, spec: ProblemSpec, base: SampledCurve) -> "BaseCoefficients":
        z = base.require_z()
        nodes = spec.jet_grid(base.t, base.q, z)
        tm = base.t[:-1] + 0.5 * base.h
        mids = spec.jet_grid(tm, midpoints(base.q), midpoints(z))
        return cls(nodes, mids, base.h)

    def pick(self, name: str, k: int, stage: int) -> np.ndarray:
        if stage == 1:
            return getattr(self.mids, name)[k]
        return getattr(self.nodes, name)[k + (stage == 2)]


@dataclass(frozen=True, eq=False)
class InfinitesimalDeformation:
    t: np.ndarray
    X: np.ndarray
    Gamma: np.ndarray


@dataclass(frozen=True, eq=False)
class FundamentalMatrix:
    A: np.ndarray
    A0: np.ndarray

    def __getitem__(self, k):
        return self.A[k]


@dataclass(frozen=True)
class DeformationReport:
    max_residual: float
    residual_profile: np.ndarray = field(repr=False)
    admissible: bool


def _sampled(values, base: SampledCurve, width: int, what: str) -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    if arr.ndim == 1 and width == 1:
        arr = arr[:, None]
    if arr.shape != (base.N + 1, width):
        raise GeometryError(f"{what} must have shape {(base.N + 1, width)}, got {arr.shape}")
    return arr


def variational_flow(
    spec: ProblemSpec, base: SampledCurve, Gamma, X0, coeffs: Optional[BaseCoefficients] = None
) -> InfinitesimalDeformation:
    """RK4 solution of the variational equation driven by the control perturbation ``Gamma``."""
    require_admissible(spec, base)
    gamma = _sampled(Gamma, base, spec.r, "Gamma")
    c = coeffs or BaseCoefficients.along(spec, base)
    gmid = midpoints(gamma)
    # forcing term psi_z Gamma at nodes and midpoints
    f_nodes = np.einsum("kia,ka->ki", c.nodes.psi_z, gamma)
    f_mids = np.einsum("kia,ka->ki", c.mids.psi_z, gmid)
    fq_n, fq_m = c.nodes.psi_q, c.mids.psi_q

    def rhs(k, stage, x):
        if stage == 1:
            return fq_m[k] @ x + f_mids[k]
        j = k + (stage == 2)
        return fq_n[j] @ x + f_nodes[j]

    X = rk4_sampled(rhs, np.asarray(X0, dtype=float).reshape(spec.n), base.h, base.N)
    return InfinitesimalDeformation(base.t, X, gamma)


def fundamental_matrix(
    spec: ProblemSpec, base: SampledCurve, A0=None, coeffs: Optional[BaseCoefficients] = None
) -> FundamentalMatrix:
    """RK4 solution of ``dA/dt = -A psi_q`` from ``A0`` (identity by default)."""
    require_admissible(spec, base)
    n = spec.n
    a0 = np.eye(n) if A0 is None else np.asarray(A0, dtype=float).reshape(n, n)
    if not _nonsingular(a0):
        raise GeometryError("initial matrix A0 is singular")
    c = coeffs or BaseCoefficients.along(spec, base)
    fq_n, fq_m = c.nodes.psi_q, c.mids.psi_q

    def rhs(k, stage, a):
        fq = fq_m[k] if stage == 1 else fq_n[k + (stage == 2)]
        return -a @ fq

    A = rk4_sampled(rhs, a0, base.h, base.N)
    for k in range(A.shape[0]):
        if not _nonsingular(A[k]):
            raise FlowSingularityError(f"fundamental matrix became singular at t = {base.t[k]!r}")
    return FundamentalMatrix(A, a0)


def _nonsingular(a: np.ndarray) -> bool:
    n = a.shape[0]
    norm = np.linalg.norm(a, 2)
    if not np.all(np.isfinite(a)) or norm == 0.0:
        return False
    return abs(np.linalg.det(a)) > 1e-12 * norm**n


def endpoint_functional(
    spec: ProblemSpec, base: SampledCurve, fm: FundamentalMatrix, Gamma, coeffs: Optional[BaseCoefficients] = None
) -> np.ndarray:
    """Simpson value of ``int A psi_z Gamma dt``.

    With ``X(t0) = 0`` this equals ``A(t1) X(t1)``, so it vanishes exactly when the
    deformation closes at the final time.
    """
    gamma = _sampled(Gamma, base, spec.r, "Gamma")
    if fm.A.shape[0] != base.N + 1:
        raise GeometryError("fundamental matrix and base curve use different grids")
    c = coeffs or BaseCoefficients.along(spec, base)
    integrand = np.einsum("kij,kja,ka->ki", fm.A, c.nodes.psi_z, gamma)
    return simpson(integrand, base.h)


def check_infinitesimal_admissibility(
    spec: ProblemSpec, base: SampledCurve, deformation: InfinitesimalDeformation, tol: float
) -> DeformationReport:
    """Pointwise residual of the variational equation with the fourth-order stencil."""
    X = _sampled(deformation.X, base, spec.n, "X")
    gamma = _sampled(deformation.Gamma, base, spec.r, "Gamma")
    jet = spec.jet_grid(base.t, base.q, base.require_z())
    dX = derivative(X, base.h)
    profile = np.abs(dX - np.einsum("kij,kj->ki", jet.psi_q, X) - np.einsum("kia,ka->ki", jet.psi_z, gamma))
    worst = float(np.max(profile))
    return DeformationReport(worst, profile, bool(worst <= tol))
