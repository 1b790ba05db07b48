import numpy as np
import pytest

from conftest import heisenberg_arc, heisenberg_spec
from varigauge import ProblemSpec, SampledCurve, check_admissible, check_rank, integrate_admissible
from varigauge.expr import ExprDomainError
from varigauge.geometry import GeometryError

FREE = ProblemSpec.from_strings(1, 1, ["z1"], "z1^2/2", (0.0, 1.0))


def test_rank_examples():
    ident = ProblemSpec.from_strings(2, 2, ["z1", "z2"], "0", (0, 1))
    assert check_rank(ident, {"t": 0.3, "q1": 1, "q2": -2, "z1": 5, "z2": 0}) == 2
    dup = ProblemSpec.from_strings(2, 1, ["z1", "z1"], "0", (0, 1))
    assert check_rank(dup, {"t": 0, "q1": 0, "q2": 0, "z1": 1}) == 1
    assert check_rank(heisenberg_spec(), {"t": 0, "q1": 1, "q2": 1, "q3": 0, "z1": 0.4, "z2": -3}) == 2


def test_rank_missing_point_value():
    with pytest.raises(GeometryError):
        check_rank(FREE, {"t": 0.0})


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(n=0, r=0, psi=[], lagrangian="0"),
        dict(n=1, r=2, psi=["z1"], lagrangian="0"),
        dict(n=2, r=1, psi=["z1"], lagrangian="0"),
    ],
)
def test_spec_shape_validation(kwargs):
    with pytest.raises((GeometryError, ValueError)):
        ProblemSpec.from_strings(**kwargs)


def test_spec_rejects_bad_interval_and_symbols():
    with pytest.raises(GeometryError):
        ProblemSpec.from_strings(1, 1, ["z1"], "0", (1.0, 0.0))
    with pytest.raises(ValueError):
        ProblemSpec.from_strings(1, 1, ["z2"], "0", (0.0, 1.0))


def test_implicit_constraints_must_agree_with_psi():
    ok = ProblemSpec.from_strings(
        3, 2, ["z1", "z2", "q1*z2 - q2*z1"], "0", (0, 1), implicit=["qdot3 - q1*qdot2 + q2*qdot1"]
    )
    assert ok.implicit is not None
    with pytest.raises(GeometryError):
        ProblemSpec.from_strings(3, 2, ["z1", "z2", "q1*z2 - q2*z1"], "0", (0, 1), implicit=["qdot3 - qdot1"])


def test_gauge_must_not_depend_on_controls():
    with pytest.raises(ValueError):
        ProblemSpec.from_strings(1, 1, ["z1"], "0", (0, 1), gauge="z1")


def test_free_particle_line_is_admissible():
    curve = SampledCurve.from_functions(0, 1, 100, lambda t: t, lambda t: np.ones_like(t))
    report = check_admissible(FREE, curve, 1e-6)
    assert report.admissible and report.max_residual <= 1e-10


def test_parabola_is_not_admissible():
    curve = SampledCurve.from_functions(0, 1, 100, lambda t: t**2, lambda t: np.ones_like(t))
    report = check_admissible(FREE, curve, 1e-6)
    assert not report.admissible
    assert report.max_residual == pytest.approx(1.0, abs=1e-9)
    # |2t - 1| peaks at both ends
    assert curve.t[report.worst_index] in (0.0, 1.0)


def test_heisenberg_arc_is_admissible():
    report = check_admissible(heisenberg_spec(np.pi), heisenberg_arc(400), 1e-6)
    assert report.admissible


def test_residual_profile_shape():
    report = check_admissible(heisenberg_spec(np.pi), heisenberg_arc(40), 1e-6)
    assert report.residual_profile.shape == (41, 3)


def test_check_admissible_requirements():
    with pytest.raises(GeometryError):
        check_admissible(FREE, SampledCurve.from_functions(0, 1, 10, lambda t: t), 1e-6)
    with pytest.raises(GeometryError):
        check_admissible(FREE, SampledCurve.from_functions(0, 1, 3, lambda t: t, lambda t: t), 1e-6)
    two = SampledCurve(np.linspace(0, 1, 11), np.zeros((11, 2)), np.zeros((11, 1)))
    with pytest.raises(GeometryError):
        check_admissible(FREE, two, 1e-6)


def test_curve_validation():
    with pytest.raises(GeometryError):
        SampledCurve(np.array([0.0, 0.1, 0.3, 0.4]), np.zeros(4))
    with pytest.raises(GeometryError):
        SampledCurve(np.array([0.0, 1.0]), np.zeros(2))
    with pytest.raises(GeometryError):
        SampledCurve(np.linspace(0, 1, 5), np.zeros(4))


def test_integrate_constant_and_linear_controls():
    q = integrate_admissible(FREE, [0.0], lambda t: [1.0], 100)
    assert q.q[-1, 0] == pytest.approx(1.0, abs=1e-10)
    q = integrate_admissible(FREE, [0.0], lambda t: [t], 100)
    assert q.q[-1, 0] == pytest.approx(0.5, abs=1e-9)


def test_integrate_heisenberg():
    curve = integrate_admissible(heisenberg_spec(np.pi), np.zeros(3), lambda t: [np.cos(t), np.sin(t)], 400)
    assert curve.q[-1, 2] == pytest.approx(np.pi, abs=1e-6)
    assert check_admissible(heisenberg_spec(np.pi), curve, 1e-6).admissible


def test_integrate_reports_blow_up():
    spec = ProblemSpec.from_strings(1, 1, ["q1^2 + z1"], "0", (0, 5))
    with pytest.raises((GeometryError, ExprDomainError)):
        integrate_admissible(spec, [1.0], lambda t: [0.0], 50)
