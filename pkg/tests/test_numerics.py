import numpy as np
import pytest

from varigauge.numerics import derivative, derivative6, midpoints, numerical_rank, rk4_sampled, simpson


@pytest.mark.parametrize("fn", [derivative, derivative6])
def test_stencils_exact_on_low_degree_polynomials(fn):
    t = np.linspace(-1, 2, 13)
    degree = 4 if fn is derivative else 6
    y = t**degree - 2 * t + 1
    assert np.allclose(fn(y, t[1] - t[0]), degree * t ** (degree - 1) - 2, atol=1e-10)


@pytest.mark.parametrize("fn, order", [(derivative, 4), (derivative6, 6)])
def test_stencil_convergence_order(fn, order):
    errs = []
    for N in (40, 80):
        t = np.linspace(0, 2, N + 1)
        errs.append(np.max(np.abs(fn(np.sin(3 * t), t[1]) - 3 * np.cos(3 * t))))
    assert errs[0] / errs[1] > 0.8 * 2**order


def test_derivative_needs_enough_points():
    with pytest.raises(ValueError):
        derivative(np.zeros(4), 0.1)
    with pytest.raises(ValueError):
        derivative6(np.zeros(6), 0.1)


def test_derivative_acts_on_columns():
    t = np.linspace(0, 1, 11)
    y = np.stack([t, t**2], axis=1)
    d = derivative(y, 0.1)
    assert np.allclose(d, np.stack([np.ones_like(t), 2 * t], axis=1))


@pytest.mark.parametrize("N", [10, 11])
def test_simpson(N):
    t = np.linspace(0, 1, N + 1)
    assert simpson(t**2 * 0 + 3.0, t[1]) == pytest.approx(3.0)
    if N % 2 == 0:
        assert simpson(t**3, t[1]) == pytest.approx(0.25, abs=1e-14)
    else:
        assert simpson(t**3, t[1]) == pytest.approx(0.25, abs=5e-3)


def test_midpoints_exact_on_cubics():
    t = np.linspace(0, 1, 9)
    tm = t[:-1] + 0.5 * t[1]
    assert np.allclose(midpoints(t**3 - t), tm**3 - tm, atol=1e-14)


def test_rk4_sampled_linear_growth():
    h, steps = 0.01, 100
    y = rk4_sampled(lambda k, stage, y: y, np.array([1.0]), h, steps)
    assert y.shape == (steps + 1, 1)
    assert y[-1, 0] == pytest.approx(np.e, rel=1e-9)


def test_numerical_rank():
    assert numerical_rank(np.array([3.0, 1.0, 1e-12]), 1e-10) == 2
    assert numerical_rank(np.array([0.0, 0.0]), 1e-10) == 0
    assert numerical_rank(np.array([]), 1e-10) == 0
