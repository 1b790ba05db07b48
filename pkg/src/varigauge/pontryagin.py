"""Extremals of the constrained problem through the Pontryagin Hamiltonian.

``H(t, q, p, z) = p . psi(t, q, z) - L(t, q, z)``. Extremals satisfy

* ``dq/dt = psi``,
* ``dp/dt = -p . psi_q + L_q``,
* ``p . psi_z - L_z = 0``.

The last equation is solved pointwise for the controls so the first two form an
ODE in ``(q, p)``, which :func:`shoot` drives to the target end-point by Newton
iteration on the initial costate. :func:`reconstruct_costates` goes the other
way: it lifts a given admissible curve and certifies it as an extremal.
"""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .gauge import LiftedCurve, hamiltonian_grid
from .geometry import ProblemSpec, SampledCurve
from .numerics import derivative, rk4_sampled
from .variation import BaseCoefficients, fundamental_matrix, require_admissible

DEFAULT_SEED = 7
FD_CONTROL_STEP = 1e-6
FD_SHOOT_STEP = 1e-6
ARMIJO_C = 1e-4
MIN_STEP = 1e-4
# relative singular-value cut for the Newton step; forward differences leave ~1e-6 noise
JAC_RCOND = 1e-7


class ControlSolveError(ArithmeticError):
    def __init__(self, message: str, t: float, q, p):
        self.t = t
        self.q = np.asarray(q, dtype=float)
        self.p = np.asarray(p, dtype=float)
        super().__init__(f"{message} at (t={t:.6g}, q={np.round(self.q, 6).tolist()}, p={np.round(self.p, 6).tolist()})")


class IntegrationError(ArithmeticError):
    pass


def _env_threads() -> int:
    raw = os.environ.get("VARIGAUGE_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


@dataclass
class ShootingConfig:
    N: int = 400
    newton_tol: float = 1e-10
    max_newton: int = 50
    shoot_tol: float = 1e-8
    max_shoot: int = 100
    initial_p0_guesses: Optional[Sequence[Sequence[float]]] = None
    seed: int = DEFAULT_SEED
    random_guesses: int = 8
    z_guess: Optional[Sequence[float]] = None
    threads: Optional[int] = None

    def __post_init__(self):
        for name in ("newton_tol", "shoot_tol"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.max_newton < 1 or self.max_shoot < 1:
            raise ValueError("iteration limits must be positive")
        if self.N < 4 or self.N % 2:
            raise ValueError("N must be even and at least 4")

    def guesses(self, n: int) -> list[np.ndarray]:
        if self.initial_p0_guesses is not None:
            out = [np.asarray(g, dtype=float).reshape(n) for g in self.initial_p0_guesses]
            if not out:
                raise ValueError("initial_p0_guesses must not be empty")
            return out
        rng = np.random.default_rng(self.seed)
        return [np.zeros(n)] + [rng.standard_normal(n) for _ in range(self.random_guesses)]

    def worker_count(self) -> int:
        return self.threads if self.threads is not None else _env_threads()


# --------------------------------------------------------------------------
# Controls and the extremal vector field


def _control_residual(spec: ProblemSpec, t, q, p, z) -> np.ndarray:
    psi_z, l_z = spec.control_jet(t, q, z)
    return psi_z.T @ p - l_z


def _control_jacobian(spec: ProblemSpec, t, q, p, z) -> np.ndarray:
    r = z.shape[0]
    jac = np.empty((r, r))
    for a in range(r):
        h = FD_CONTROL_STEP * max(1.0, abs(z[a]))
        e = np.zeros(r)
        e[a] = h
        jac[:, a] = (_control_residual(spec, t, q, p, z + e) - _control_residual(spec, t, q, p, z - e)) / (2 * h)
    return jac


def _newton_controls(spec, t, q, p, z, tol, max_iter, jac=None):
    """Newton on the stationarity residual; a Jacobian passed in is reused while it keeps contracting."""
    z = np.array(z, dtype=float)
    res = _control_residual(spec, t, q, p, z)
    prev = np.inf
    for _ in range(max_iter):
        nrm = np.max(np.abs(res)) if res.size else 0.0
        if not np.isfinite(nrm):
            raise ControlSolveError("control solve produced non-finite residual", t, q, p)
        if nrm <= tol:
            return z, jac
        if jac is None or nrm > 0.5 * prev:
            jac = _control_jacobian(spec, t, q, p, z)
            sv = np.linalg.svd(jac, compute_uv=False)
            if sv[-1] <= 1e-12 * max(1.0, sv[0]):
                raise ControlSolveError("control solve singular", t, q, p)
        prev = nrm
        z = z - np.linalg.solve(jac, res)
        res = _control_residual(spec, t, q, p, z)
    raise ControlSolveError(f"control solve did not converge in {max_iter} iterations", t, q, p)


def solve_controls(spec: ProblemSpec, t: float, q, p, z_guess, newton_tol: float = 1e-10, max_newton: int = 50):
    """Controls ``z`` with ``p . psi_z - L_z = 0`` at fixed ``(t, q, p)``."""
    q = np.asarray(q, dtype=float)
    p = np.asarray(p, dtype=float)
    z, _ = _newton_controls(spec, t, q, p, np.asarray(z_guess, dtype=float).reshape(spec.r), newton_tol, max_newton)
    return z


def extremal_rhs(spec: ProblemSpec, t: float, q, p, z_warm, newton_tol: float = 1e-10, max_newton: int = 50):
    """``(dq/dt, dp/dt, z)`` of the extremal system at one point."""
    q = np.asarray(q, dtype=float)
    p = np.asarray(p, dtype=float)
    z = solve_controls(spec, t, q, p, z_warm, newton_tol, max_newton)
    jet = spec.jet(t, q, z)
    return jet.psi, -jet.psi_q.T @ p + jet.L_q, z


class _Flow:
    """Fixed-step RK4 of the (q, p) system with warm-started control solves at every stage."""

    def __init__(self, spec: ProblemSpec, cfg: ShootingConfig):
        self.spec = spec
        self.cfg = cfg
        self.t = np.linspace(spec.t0, spec.t1, cfg.N + 1)
        self.h = (spec.t1 - spec.t0) / cfg.N
        self.z_start = np.zeros(spec.r) if cfg.z_guess is None else np.asarray(cfg.z_guess, float).reshape(spec.r)

    def _field(self, t, y, state):
        n = self.spec.n
        q, p = y[:n], y[n:]
        z, state["jac"] = _newton_controls(
            self.spec, t, q, p, state["z"], self.cfg.newton_tol, self.cfg.max_newton, state["jac"]
        )
        state["z"] = z
        jet = self.spec.jet(t, q, z)
        return np.concatenate([jet.psi, -jet.psi_q.T @ p + jet.L_q]), z

    def run(self, q0, p0, keep: bool = False):
        n, N, h = self.spec.n, self.cfg.N, self.h
        y = np.concatenate([np.asarray(q0, float), np.asarray(p0, float)])
        state = {"z": self.z_start.copy(), "jac": None}
        ys = np.empty((N + 1, 2 * n)) if keep else None
        zs = np.empty((N + 1, self.spec.r)) if keep else None
        t = self.t
        for k in range(N):
            k1, z0 = self._field(t[k], y, state)
            if keep:
                ys[k], zs[k] = y, z0
            k2, _ = self._field(t[k] + 0.5 * h, y + 0.5 * h * k1, state)
            k3, _ = self._field(t[k] + 0.5 * h, y + 0.5 * h * k2, state)
            k4, _ = self._field(t[k + 1], y + h * k3, state)
            y = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            if not np.all(np.isfinite(y)):
                raise IntegrationError(f"non-finite state at t = {t[k + 1]!r}")
        if keep:
            _, zN = self._field(t[N], y, state)
            ys[N], zs[N] = y, zN
            return ys, zs
        return y


# --------------------------------------------------------------------------
# Shooting


@dataclass(frozen=True, eq=False)
class ExtremalSolution:
    lifted: Optional[LiftedCurve]
    el_residuals: dict
    converged: bool
    p0_found: np.ndarray
    endpoint_residual: float
    guess_index: Optional[int] = None
    diagnostics: list = field(default_factory=list)

    def summary_lines(self) -> list[str]:
        fmt = lambda v: f"{v:.17g}"
        lines = [
            f"converged: {'true' if self.converged else 'false'}",
            f"p0_found: {' '.join(fmt(v) for v in self.p0_found)}",
            f"endpoint_residual: {fmt(self.endpoint_residual)}",
        ]
        for key in ("state", "costate", "stationarity"):
            if key in self.el_residuals:
                lines.append(f"el_residual_{key}: {fmt(self.el_residuals[key])}")
        if self.guess_index is not None:
            lines.append(f"guess_index: {self.guess_index}")
        for d in self.diagnostics:
            lines.append(f"guess_{d['index']}: best_residual {fmt(d['best_residual'])} status {d['status']}")
        return lines


def el_residuals(spec: ProblemSpec, lifted: LiftedCurve) -> dict:
    """Max residuals of the three extremal equations on the grid (derivatives by the fourth-order stencil)."""
    jet = spec.jet_grid(lifted.t, lifted.q, lifted.z)
    dq = derivative(lifted.q, lifted.h)
    dp = derivative(lifted.p, lifted.h)
    costate = dp + np.einsum("kji,kj->ki", jet.psi_q, lifted.p) - jet.L_q
    stationarity = np.einsum("kia,ki->ka", jet.psi_z, lifted.p) - jet.L_z
    return {
        "state": float(np.max(np.abs(dq - jet.psi))),
        "costate": float(np.max(np.abs(costate))),
        "stationarity": float(np.max(np.abs(stationarity))),
    }


def hamiltonian_drift(spec: ProblemSpec, lifted: LiftedCurve) -> float:
    H = hamiltonian_grid(spec, lifted)
    return float(np.max(np.abs(H - H[0])))


def _newton_shoot(spec: ProblemSpec, q0, target, guess, cfg: ShootingConfig, index: int):
    flow = _Flow(spec, cfg)
    n = spec.n
    failed = (ControlSolveError, IntegrationError, np.linalg.LinAlgError, FloatingPointError)

    def F(p):
        return flow.run(q0, p)[:n] - target

    p = np.array(guess, dtype=float)
    try:
        f = F(p)
    except failed as exc:
        return {"index": index, "converged": False, "p0": p, "best_residual": np.inf, "status": f"failed: {exc}"}
    best = float(np.max(np.abs(f)))
    status = "max_shoot reached"
    for _ in range(cfg.max_shoot):
        res = float(np.max(np.abs(f)))
        best = min(best, res)
        if res <= cfg.shoot_tol:
            return {"index": index, "converged": True, "p0": p, "best_residual": res, "status": "converged"}
        try:
            step = FD_SHOOT_STEP * max(1.0, float(np.max(np.abs(p))))
            jac = np.empty((n, n))
            for j in range(n):
                e = np.zeros(n)
                e[j] = step
                jac[:, j] = (F(p + e) - f) / step
        except failed as exc:
            status = f"jacobian failed: {exc}"
            break
        delta, *_ = np.linalg.lstsq(jac, -f, rcond=JAC_RCOND)
        merit = np.linalg.norm(f)
        lam = 1.0
        accepted = False
        while lam >= MIN_STEP:
            trial = p + lam * delta
            try:
                ft = F(trial)
            except failed:
                lam *= 0.5
                continue
            if np.linalg.norm(ft) <= (1.0 - ARMIJO_C * lam) * merit:
                p, f = trial, ft
                accepted = True
                break
            lam *= 0.5
        if not accepted:
            status = "line search stalled"
            break
    res = float(np.max(np.abs(f)))
    best = min(best, res)
    ok = res <= cfg.shoot_tol
    return {"index": index, "converged": ok, "p0": p, "best_residual": best, "status": "converged" if ok else status}


def shoot(spec: ProblemSpec, q0, q1_target, cfg: Optional[ShootingConfig] = None) -> ExtremalSolution:
    """Single shooting on the initial costate so that ``q(t1)`` hits ``q1_target``."""
    cfg = cfg or ShootingConfig()
    q0 = np.asarray(q0, dtype=float).reshape(spec.n)
    target = np.asarray(q1_target, dtype=float).reshape(spec.n)
    guesses = cfg.guesses(spec.n)
    workers = min(cfg.worker_count(), len(guesses))
    results = []
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(_newton_shoot, spec, q0, target, g, cfg, i) for i, g in enumerate(guesses)]
            results = [fut.result() for fut in futures]
    else:
        for i, g in enumerate(guesses):
            results.append(_newton_shoot(spec, q0, target, g, cfg, i))
            if results[-1]["converged"]:
                break
    winner = next((r for r in results if r["converged"]), None)
    diagnostics = [{k: r[k] for k in ("index", "best_residual", "status")} for r in results]
    chosen = winner or min(results, key=lambda r: r["best_residual"])
    flow = _Flow(spec, cfg)
    lifted, el = None, {}
    try:
        ys, zs = flow.run(q0, chosen["p0"], keep=True)
        lifted = LiftedCurve(SampledCurve(flow.t, ys[:, : spec.n], zs), ys[:, spec.n :])
        el = el_residuals(spec, lifted)
        endpoint = float(np.max(np.abs(ys[-1, : spec.n] - target)))
    except (ControlSolveError, IntegrationError) as exc:
        if winner is not None:
            raise
        endpoint = float("inf")
        diagnostics.append({"index": chosen["index"], "best_residual": float("inf"), "status": f"replay failed: {exc}"})
    converged = winner is not None and bool(el) and all(v <= 10 * cfg.shoot_tol for v in el.values())
    return ExtremalSolution(
        lifted=lifted,
        el_residuals=el,
        converged=converged,
        p0_found=np.asarray(chosen["p0"], dtype=float),
        endpoint_residual=endpoint,
        guess_index=chosen["index"] if winner is not None else None,
        diagnostics=diagnostics,
    )


# --------------------------------------------------------------------------
# Costate reconstruction over a given curve


@dataclass(frozen=True, eq=False)
class CostateReconstruction:
    lifted: LiftedCurve
    beta: np.ndarray
    lsq_residual: float
    certified: bool

    def __iter__(self):
        return iter((self.lifted, self.beta, self.lsq_residual))

    def summary_lines(self) -> list[str]:
        return [
            f"extremal: {'true' if self.certified else 'false'}",
            f"beta: {' '.join(f'{v:.17g}' for v in self.beta)}",
            f"lsq_residual: {self.lsq_residual:.17g}",
        ]


def particular_costates(spec: ProblemSpec, base: SampledCurve, coeffs: BaseCoefficients) -> np.ndarray:
    """RK4 solution of ``dp/dt + p . psi_q = L_q`` from ``p(t0) = 0``."""
    fq_n, fq_m = coeffs.nodes.psi_q, coeffs.mids.psi_q
    lq_n, lq_m = coeffs.nodes.L_q, coeffs.mids.L_q

    def rhs(k, stage, p):
        if stage == 1:
            return -fq_m[k].T @ p + lq_m[k]
        j = k + (stage == 2)
        return -fq_n[j].T @ p + lq_n[j]

    return rk4_sampled(rhs, np.zeros(spec.n), base.h, base.N)


def reconstruct_costates(
    spec: ProblemSpec, base: SampledCurve, cfg: Optional[ShootingConfig] = None, A0=None
) -> CostateReconstruction:
    """Lift an admissible curve to the costate family ``p + beta . A`` closest to stationarity.

    ``beta`` minimizes the stationarity residual over every grid point and control
    in the least-squares sense; the curve is certified an extremal when the
    remaining max residual is within ``10 * shoot_tol``.
    """
    cfg = cfg or ShootingConfig(N=base.N if base.N % 2 == 0 and base.N >= 4 else 400)
    require_admissible(spec, base)
    coeffs = BaseCoefficients.along(spec, base)
    p = particular_costates(spec, base, coeffs)
    fm = fundamental_matrix(spec, base, A0, coeffs)
    psi_z, l_z = coeffs.nodes.psi_z, coeffs.nodes.L_z
    M = np.einsum("mjk,mka->maj", fm.A, psi_z).reshape(-1, spec.n)
    rhs = (l_z - np.einsum("mk,mka->ma", p, psi_z)).reshape(-1)
    beta, *_ = np.linalg.lstsq(M, rhs, rcond=1e-10)
    resid = float(np.max(np.abs(M @ beta - rhs))) if rhs.size else 0.0
    p_bar = p + np.einsum("j,mji->mi", beta, fm.A)
    lifted = LiftedCurve(base, p_bar)
    return CostateReconstruction(lifted, beta, resid, bool(resid <= 10 * cfg.shoot_tol))
