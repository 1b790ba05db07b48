from pathlib import Path

import numpy as np
import pytest

from varigauge import ProblemSpec, SampledCurve, ShootingConfig, load_problem, shoot

FIXTURES = Path(__file__).parent / "fixtures"


def heisenberg_spec(t1=2 * np.pi, lagrangian="(z1^2 + z2^2)/2"):
    return ProblemSpec.from_strings(3, 2, ["z1", "z2", "q1*z2 - q2*z1"], lagrangian, (0.0, t1))


def heisenberg_arc(N=400, t1=np.pi):
    """q = (sin t, 1 - cos t, t - sin t) with z = (cos t, sin t): admissible, unit speed."""
    return SampledCurve.from_functions(
        0.0,
        t1,
        N,
        lambda t: np.stack([np.sin(t), 1 - np.cos(t), t - np.sin(t)], axis=-1),
        lambda t: np.stack([np.cos(t), np.sin(t)], axis=-1),
    )


def solve_fixture(name, cfg_changes=None, seed=None):
    problem = load_problem(FIXTURES / f"{name}.yaml")
    cfg = problem.shooting_config(seed)
    for k, v in (cfg_changes or {}).items():
        setattr(cfg, k, v)
    q0, q1 = problem.boundary
    return problem, shoot(problem.spec, q0, q1, cfg)


_CACHE = {}


@pytest.fixture(scope="session")
def solved():
    """Converged shooting solutions of the benchmark problems, computed once."""

    def get(name, N=None):
        key = (name, N)
        if key not in _CACHE:
            _CACHE[key] = solve_fixture(name, {"N": N} if N else None)
        return _CACHE[key]

    return get
