import numpy as np
import pytest

from conftest import heisenberg_arc, heisenberg_spec
from varigauge import GaugeFunction, ProblemSpec, SampledCurve, ShootingConfig, gauge_transform, reconstruct_costates, shoot
from varigauge.gauge import action
from varigauge.pontryagin import (
    ControlSolveError,
    el_residuals,
    extremal_rhs,
    hamiltonian_drift,
    solve_controls,
)

FREE = ProblemSpec.from_strings(1, 1, ["z1"], "z1^2/2", (0.0, 1.0))
LINE = SampledCurve.from_functions(0, 1, 400, lambda t: t, lambda t: np.ones_like(t))


def test_solve_controls_examples():
    assert solve_controls(FREE, 0.0, [0.0], [0.37], [5.0]) == pytest.approx([0.37], abs=1e-10)
    quartic = ProblemSpec.from_strings(1, 1, ["z1"], "z1^4/4", (0.0, 1.0))
    assert solve_controls(quartic, 0.0, [0.0], [8.0], [1.0]) == pytest.approx([2.0], abs=1e-9)
    z = solve_controls(heisenberg_spec(), 0.0, [1, 0, 0.3], [0.2, -0.4, 1.5], [0, 0])
    assert z == pytest.approx([0.2, -0.4 + 1.5], abs=1e-9)


def test_solve_controls_failure_carries_point():
    spec = ProblemSpec.from_strings(1, 1, ["z1"], "exp(z1)", (0.0, 1.0))
    with pytest.raises(ControlSolveError) as info:
        solve_controls(spec, 0.5, [1.0], [-1.0], [0.0], max_newton=5)
    assert info.value.t == 0.5


def test_extremal_rhs_examples():
    dq, dp, z = extremal_rhs(FREE, 0.0, [0.0], [1.0], [0.0])
    assert dq == pytest.approx([1.0]) and dp == pytest.approx([0.0])
    lin = ProblemSpec.from_strings(1, 1, ["q1 + z1"], "z1^2/2", (0.0, 1.0))
    dq, dp, z = extremal_rhs(lin, 0.0, [0.0], [1.0], [0.0])
    assert z == pytest.approx([1.0]) and dq == pytest.approx([1.0]) and dp == pytest.approx([-1.0])
    dq, dp, z = extremal_rhs(heisenberg_spec(), 0.0, [1, 0, 0], [1, 1, 1], [0, 0])
    assert z == pytest.approx([1, 2]) and dq == pytest.approx([1, 2, 2]) and dp == pytest.approx([-2, 1, 0])


def test_config_validation_and_guesses():
    with pytest.raises(ValueError):
        ShootingConfig(N=401)
    with pytest.raises(ValueError):
        ShootingConfig(shoot_tol=0.0)
    g = ShootingConfig().guesses(3)
    assert len(g) == 9 and np.all(g[0] == 0)
    assert all(np.array_equal(a, b) for a, b in zip(g, ShootingConfig().guesses(3)))
    assert not np.array_equal(g[1], ShootingConfig(seed=8).guesses(3)[1])


def test_free_particle_shoot(solved):
    _, sol = solved("free_particle")
    assert sol.converged
    L = sol.lifted
    assert np.max(np.abs(L.q[:, 0] - L.t)) <= 1e-7
    assert np.max(np.abs(L.z - 1)) <= 1e-7
    assert np.max(np.abs(L.p - 1)) <= 1e-7


def test_stationary_boundary_values():
    sol = shoot(FREE, [0.0], [0.0], ShootingConfig())
    assert sol.converged
    assert np.max(np.abs(sol.lifted.q)) <= 1e-12 and np.max(np.abs(sol.lifted.p)) <= 1e-12


def test_heisenberg_shoot(solved):
    _, sol = solved("heisenberg")
    assert sol.converged
    q = sol.lifted.q
    # unit circle through the origin: |q12 - centre| = 1 and unit speed
    centre = q[:-1, :2].mean(axis=0)
    assert np.max(np.abs(np.linalg.norm(q[:, :2] - centre, axis=1) - 1)) <= 1e-6
    assert np.max(np.abs(np.linalg.norm(sol.lifted.z, axis=1) - 1)) <= 1e-6


def test_converged_solutions_are_certified(solved):
    for name in ("free_particle", "heisenberg", "pendulum", "degenerate"):
        problem, sol = solved(name)
        assert sol.converged, name
        assert all(v <= 10 * problem.shooting_config().shoot_tol for v in sol.el_residuals.values()), name
        assert sol.el_residuals == el_residuals(problem.spec, sol.lifted)


@pytest.mark.parametrize("name", ["heisenberg", "pendulum"])
def test_hamiltonian_drift(solved, name):
    problem, sol = solved(name)
    assert hamiltonian_drift(problem.spec, sol.lifted) <= 1e-6


def test_non_convergence_is_reported():
    spec = ProblemSpec.from_strings(1, 1, ["z1^2"], "z1^2", (0.0, 1.0))
    sol = shoot(spec, [0.0], [-1.0], ShootingConfig(N=40, max_shoot=5, random_guesses=2))
    assert not sol.converged
    assert sol.diagnostics and all("status" in d for d in sol.diagnostics)
    assert any(line.startswith("converged: false") for line in sol.summary_lines())


def test_shoot_is_deterministic():
    a = shoot(FREE, [0.0], [2.0], ShootingConfig(N=40))
    b = shoot(FREE, [0.0], [2.0], ShootingConfig(N=40))
    assert np.array_equal(a.lifted.p, b.lifted.p) and np.array_equal(a.lifted.z, b.lifted.z)


def test_threaded_guesses_agree():
    cfg = ShootingConfig(N=40, initial_p0_guesses=[[0.0], [3.0]], threads=2)
    sol = shoot(FREE, [0.0], [2.0], cfg)
    assert sol.converged and sol.guess_index == 0


def test_gauge_covariance(solved):
    problem, sol = solved("heisenberg")
    f = GaugeFunction.parse("q1*q2", 3)
    gauged = gauge_transform(problem.spec, f)
    q0, q1 = problem.boundary
    sol2 = shoot(gauged, q0, q1, problem.shooting_config())
    assert sol2.converged
    a, b = sol.lifted, sol2.lifted
    assert np.max(np.abs(a.q - b.q)) <= 1e-6
    assert np.max(np.abs(a.z - b.z)) <= 1e-6
    grad_f = np.stack([a.q[:, 1], a.q[:, 0], np.zeros_like(a.t)], axis=1)
    assert np.max(np.abs(b.p - a.p - grad_f)) <= 1e-6


def test_reconstruct_free_particle_line():
    rec = reconstruct_costates(FREE, LINE)
    assert np.max(np.abs(rec.lifted.p - 1)) <= 1e-8
    assert rec.beta == pytest.approx([1.0], abs=1e-8)
    assert rec.lsq_residual <= 1e-8 and rec.certified
    lifted, beta, resid = rec
    assert resid == rec.lsq_residual


def test_reconstruct_with_zero_lagrangian():
    zero = ProblemSpec.from_strings(1, 1, ["z1"], "0", (0.0, 1.0))
    curve = SampledCurve.from_functions(0, 1, 100, lambda t: np.sin(t), lambda t: np.cos(t))
    rec = reconstruct_costates(zero, curve)
    assert np.all(rec.lifted.p == 0) and np.all(rec.beta == 0) and rec.lsq_residual == 0


def test_reconstruct_rejects_non_extremal():
    parabola = SampledCurve.from_functions(0, 1, 400, lambda t: t**2, lambda t: 2 * t)
    rec = reconstruct_costates(FREE, parabola)
    assert rec.lsq_residual >= 0.1 and not rec.certified


@pytest.mark.parametrize("name", ["free_particle", "heisenberg", "pendulum"])
def test_roundtrip_recovers_costates(solved, name):
    problem, sol = solved(name)
    rec = reconstruct_costates(problem.spec, sol.lifted.curve)
    assert rec.certified
    assert np.max(np.abs(rec.lifted.p - sol.lifted.p)) <= 1e-6


def test_reconstruction_independent_of_initial_matrix(solved):
    problem, sol = solved("pendulum")
    base = sol.lifted.curve
    ref = reconstruct_costates(problem.spec, base).lifted.p
    a0 = np.array([[2.0, 0.5], [-1.0, 0.7]])
    assert np.max(np.abs(reconstruct_costates(problem.spec, base, A0=a0).lifted.p - ref)) <= 1e-8


def test_reconstruct_heisenberg_arc_as_extremal():
    spec = heisenberg_spec(np.pi)
    rec = reconstruct_costates(spec, heisenberg_arc(400))
    assert rec.certified
    # along the arc the optimal costate has p3 constant, equal to the curvature 1/2
    assert np.max(np.abs(rec.lifted.p[:, 2] - 0.5)) <= 1e-6


def test_shoot_action_close_to_circle(solved):
    problem, sol = solved("heisenberg")
    assert action(problem.spec, sol.lifted.curve) == pytest.approx(np.pi, rel=1e-8)
