"""Grid numerics shared by the solvers: stencils, quadrature, interpolation, RK4."""
from __future__ import annotations

from typing import Callable

import numpy as np

# 4th-order first-derivative weights (divide by 12 h). Rows for the first two
# nodes; the last two are their mirror with sign flipped.
_EDGE0 = np.array([-25.0, 48.0, -36.0, 16.0, -3.0])
_EDGE1 = np.array([-3.0, -10.0, 18.0, -6.0, 1.0])

# 6th-order weights (divide by 60 h): central seven-point and the first three edge rows.
_CENTRAL6 = np.array([-1.0, 9.0, -45.0, 0.0, 45.0, -9.0, 1.0])
_EDGES6 = np.array(
    [
        [-147.0, 360.0, -450.0, 400.0, -225.0, 72.0, -10.0],
        [-10.0, -77.0, 150.0, -100.0, 50.0, -15.0, 2.0],
        [2.0, -24.0, -35.0, 80.0, -30.0, 8.0, -1.0],
    ]
)

# Cubic Lagrange weights for the midpoint of the first interval from nodes 0..3.
_MID_EDGE = np.array([0.3125, 0.9375, -0.3125, 0.0625])
_MID_CENTRAL = np.array([-1.0, 9.0, 9.0, -1.0]) / 16.0


def derivative(y: np.ndarray, h: float) -> np.ndarray:
    """Fourth-order finite-difference derivative along axis 0 of a uniform grid.

    Central five-point stencil in the interior, shifted one-sided five-point
    stencils on the two nodes at each end. Needs at least 5 nodes.
    """
    y = np.asarray(y, dtype=float)
    m = y.shape[0]
    if m < 5:
        raise ValueError("fourth-order stencil needs at least 5 grid points")
    d = np.empty_like(y)
    d[2:-2] = (y[:-4] - 8.0 * y[1:-3] + 8.0 * y[3:-1] - y[4:]) / (12.0 * h)
    d[0] = np.tensordot(_EDGE0, y[:5], axes=1) / (12.0 * h)
    d[1] = np.tensordot(_EDGE1, y[:5], axes=1) / (12.0 * h)
    d[-1] = -np.tensordot(_EDGE0, y[::-1][:5], axes=1) / (12.0 * h)
    d[-2] = -np.tensordot(_EDGE1, y[::-1][:5], axes=1) / (12.0 * h)
    return d


def derivative6(y: np.ndarray, h: float) -> np.ndarray:
    """Sixth-order variant of :func:`derivative` (seven-point stencils); needs at least 7 nodes."""
    y = np.asarray(y, dtype=float)
    m = y.shape[0]
    if m < 7:
        raise ValueError("sixth-order stencil needs at least 7 grid points")
    d = np.empty_like(y)
    d[3:-3] = sum(w * y[j : m - 6 + j] for j, w in enumerate(_CENTRAL6) if w) / (60.0 * h)
    rev = y[::-1][:7]
    for i, w in enumerate(_EDGES6):
        d[i] = np.tensordot(w, y[:7], axes=1) / (60.0 * h)
        d[m - 1 - i] = -np.tensordot(w, rev, axes=1) / (60.0 * h)
    return d


def simpson(y: np.ndarray, h: float) -> np.ndarray:
    """Composite Simpson along axis 0; an odd panel count closes with a trapezoid."""
    y = np.asarray(y, dtype=float)
    panels = y.shape[0] - 1
    if panels < 1:
        raise ValueError("need at least two samples")
    even = panels - (panels % 2)
    total = np.zeros(y.shape[1:])
    if even >= 2:
        s = y[: even + 1]
        total = total + h / 3.0 * (s[0] + s[-1] + 4.0 * s[1:-1:2].sum(axis=0) + 2.0 * s[2:-1:2].sum(axis=0))
    if panels % 2:
        total = total + 0.5 * h * (y[-2] + y[-1])
    return total


def midpoints(y: np.ndarray) -> np.ndarray:
    """Cubic interpolation of grid samples at interval midpoints (axis 0)."""
    y = np.asarray(y, dtype=float)
    m = y.shape[0]
    if m < 4:
        raise ValueError("cubic midpoint interpolation needs at least 4 grid points")
    mid = np.empty((m - 1,) + y.shape[1:])
    mid[1:-1] = np.tensordot(_MID_CENTRAL, np.stack([y[:-3], y[1:-2], y[2:-1], y[3:]]), axes=1)
    mid[0] = np.tensordot(_MID_EDGE, y[:4], axes=1)
    mid[-1] = np.tensordot(_MID_EDGE, y[::-1][:4], axes=1)
    return mid


def rk4_sampled(rhs: Callable, y0: np.ndarray, h: float, steps: int) -> np.ndarray:
    """Classical RK4 where ``rhs(k, stage, y)`` sees coefficients pre-sampled on the grid.

    ``stage`` is 0 at node ``k``, 1 at the midpoint of interval ``k`` and 2 at
    node ``k + 1``. Returns the trajectory with shape ``(steps + 1,) + y0.shape``.
    """
    y = np.asarray(y0, dtype=float)
    out = np.empty((steps + 1,) + y.shape)
    out[0] = y
    for k in range(steps):
        k1 = rhs(k, 0, y)
        k2 = rhs(k, 1, y + 0.5 * h * k1)
        k3 = rhs(k, 1, y + 0.5 * h * k2)
        k4 = rhs(k, 2, y + h * k3)
        y = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        out[k + 1] = y
    return out


def numerical_rank(s: np.ndarray, rtol: float) -> int:
    """Count of singular values above ``rtol * max``; an all-zero matrix has rank 0."""
    s = np.asarray(s, dtype=float)
    if s.size == 0 or s[0] == 0.0:
        return 0
    return int(np.sum(s > rtol * s[0]))
