"""Abnormality index of an admissible curve.

Costate paths solving ``dp/dt = -p . psi_q`` with ``p . psi_z = 0`` along a fixed
curve form a vector space. Every solution of the ODE part is ``p = beta . A(t)``
with ``A`` the fundamental matrix, so the space is the null space of the stacked
algebraic constraints in ``beta``; its dimension is the index.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .gauge import LiftedCurve
from .geometry import ProblemSpec, SampledCurve
from .numerics import derivative, numerical_rank
from .pontryagin import ShootingConfig, reconstruct_costates
from .variation import BaseCoefficients, fundamental_matrix, require_admissible

SVD_RTOL = 1e-8
UNIQUENESS_TOL = 1e-6
BASIS_TOL = 1e-6
DEFAULT_SEED = 99


@dataclass(frozen=True, eq=False)
class AbnormalityReport:
    index: int
    basis: list = field(repr=False)
    singular_values: np.ndarray = field(repr=False)
    beta_basis: np.ndarray = field(repr=False)

    @property
    def normal(self) -> bool:
        return self.index == 0

    @property
    def classification(self) -> str:
        return "normal" if self.normal else "abnormal"

    def summary_lines(self) -> list[str]:
        lines = [f"index: {self.index}", f"classification: {self.classification}"]
        lines.append("singular_values: " + " ".join(f"{s:.17g}" for s in self.singular_values))
        for k, b in enumerate(self.beta_basis):
            lines.append(f"basis_{k}_beta: " + " ".join(f"{v:.17g}" for v in b))
        return lines


def _canonical_sign(v: np.ndarray) -> np.ndarray:
    nz = np.flatnonzero(np.abs(v) > 1e-12)
    return -v if nz.size and v[nz[0]] < 0 else v


def constraint_matrix(spec: ProblemSpec, A: np.ndarray, psi_z: np.ndarray) -> np.ndarray:
    """Rows ``(m, a)`` hold ``(A(t_m) psi_z(t_m))[:, a]``: the ``((N+1) r) x n`` system on ``beta``."""
    return np.einsum("mjk,mka->maj", A, psi_z).reshape(-1, spec.n)


def abnormality_index(spec: ProblemSpec, base: SampledCurve, svd_tol: float = SVD_RTOL) -> AbnormalityReport:
    require_admissible(spec, base)
    coeffs = BaseCoefficients.along(spec, base)
    psi_z = coeffs.nodes.psi_z
    n = spec.n
    if spec.r == n:
        sv_pointwise = np.linalg.svd(psi_z, compute_uv=False)
        if np.all(sv_pointwise[:, -1] > svd_tol * sv_pointwise[:, 0]):
            return AbnormalityReport(0, [], np.min(sv_pointwise, axis=0), np.zeros((0, n)))
    fm = fundamental_matrix(spec, base, None, coeffs)
    M = constraint_matrix(spec, fm.A, psi_z)
    _, s, vt = np.linalg.svd(M, full_matrices=True)
    rank = numerical_rank(s, svd_tol)
    null = vt[rank:]
    if null.shape[0] > 1:
        # deterministic orientation of a multi-dimensional null space
        q, _ = np.linalg.qr(null.T)
        null = q.T
    null = np.array([_canonical_sign(v) for v in null]).reshape(-1, n)
    basis = []
    for beta in null:
        basis.append(LiftedCurve(base, np.einsum("j,mji->mi", beta, fm.A)))
    return AbnormalityReport(n - rank, basis, s, null)


def basis_residuals(spec: ProblemSpec, report: AbnormalityReport) -> list[tuple[float, float]]:
    """``(ode_residual, algebraic_residual)`` of each basis costate path."""
    out = []
    for path in report.basis:
        jet = spec.jet_grid(path.t, path.q, path.z)
        dp = derivative(path.p, path.h)
        ode = dp + np.einsum("kji,kj->ki", jet.psi_q, path.p)
        alg = np.einsum("kia,ki->ka", jet.psi_z, path.p)
        out.append((float(np.max(np.abs(ode))), float(np.max(np.abs(alg)))))
    return out


@dataclass(frozen=True)
class UniquenessReport:
    index: int
    difference: float
    projection_residual: float
    passed: bool

    def summary_lines(self) -> list[str]:
        return [
            f"index: {self.index}",
            f"costate_difference: {self.difference:.17g}",
            f"projection_residual: {self.projection_residual:.17g}",
            f"unique_modulo_abnormal: {'true' if self.passed else 'false'}",
        ]


def _random_nonsingular(rng: np.random.Generator, n: int) -> np.ndarray:
    while True:
        m = rng.standard_normal((n, n))
        if np.linalg.cond(m) < 1e3:
            return m


def verify_normal_uniqueness(
    spec: ProblemSpec,
    base: SampledCurve,
    cfg: Optional[ShootingConfig] = None,
    seed: int = DEFAULT_SEED,
    tol: float = UNIQUENESS_TOL,
    svd_tol: float = SVD_RTOL,
) -> UniquenessReport:
    """Two costate reconstructions with different random ``A0`` must agree modulo the abnormal space."""
    report = abnormality_index(spec, base, svd_tol)
    rng = np.random.default_rng(seed)
    first = reconstruct_costates(spec, base, cfg, _random_nonsingular(rng, spec.n))
    second = reconstruct_costates(spec, base, cfg, _random_nonsingular(rng, spec.n))
    diff = second.lifted.p - first.lifted.p
    size = float(np.max(np.abs(diff)))
    if report.index == 0:
        return UniquenessReport(0, size, size, size <= tol)
    residual = projection_residual(diff, report)
    return UniquenessReport(report.index, size, residual, residual <= tol)


def projection_residual(diff: np.ndarray, report: AbnormalityReport) -> float:
    """Sup-norm of ``diff`` after removing its least-squares component in the basis span."""
    if report.index == 0:
        return float(np.max(np.abs(diff)))
    cols = np.stack([b.p.ravel() for b in report.basis], axis=1)
    coef, *_ = np.linalg.lstsq(cols, diff.ravel(), rcond=None)
    return float(np.max(np.abs(diff.ravel() - cols @ coef)))
