"""Smooth compactly supported building blocks.

Everything here is derived from the bump ``b(t) = exp(-1/(1 - t^2))`` on
``(-1, 1)``. The smooth step is its normalized tail integral, tabulated once
and evaluated by cubic Hermite interpolation with exact derivatives.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np
from scipy.interpolate import CubicHermiteSpline

_TABLE_SIZE = 4097


def bump(t):
    """``exp(-1/(1-t^2))`` for ``|t| < 1``, zero elsewhere."""
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    inside = np.abs(t) < 1.0
    ti = t[inside]
    out[inside] = np.exp(-1.0 / (1.0 - ti * ti))
    return out


@lru_cache(maxsize=1)
def _step_table():
    nodes, weights = np.polynomial.legendre.leggauss(32)
    u = np.linspace(-1.0, 1.0, _TABLE_SIZE)
    # integral of the bump over each table cell, accumulated from the right
    a, b = u[:-1], u[1:]
    mid, half = 0.5 * (a + b), 0.5 * (b - a)
    cell = half * (bump(mid[:, None] + half[:, None] * nodes[None, :]) @ weights)
    tail = np.concatenate([np.cumsum(cell[::-1])[::-1], [0.0]])
    total = tail[0]
    values = tail / total
    slopes = -bump(u) / total
    return CubicHermiteSpline(u, values, slopes), total


def bump_integral() -> float:
    """Integral of ``bump`` over ``(-1, 1)``."""
    return _step_table()[1]


def smooth_step(u):
    """C-infinity step: 1 for ``u <= -1``, 0 for ``u >= 1``, monotone between."""
    u = np.asarray(u, dtype=float)
    spline, _ = _step_table()
    out = np.where(u <= -1.0, 1.0, 0.0)
    mid = (u > -1.0) & (u < 1.0)
    if np.any(mid):
        out[mid] = spline(u[mid])
    return out


def smooth_step_derivative(u):
    """Exact derivative of :func:`smooth_step`."""
    return -bump(u) / bump_integral()


def smooth_step_second_derivative(u):
    u = np.asarray(u, dtype=float)
    out = np.zeros_like(u)
    inside = np.abs(u) < 1.0
    ui = u[inside]
    # b'(t) = b(t) * (-2t / (1 - t^2)^2)
    out[inside] = -bump(ui) * (-2.0 * ui / (1.0 - ui * ui) ** 2) / bump_integral()
    return out


def radial_cutoff(r, inner: float, outer: float):
    """Equal to 1 for ``r <= inner``, 0 for ``r >= outer``, smooth and monotone in between."""
    r = np.asarray(r, dtype=float)
    u = 2.0 * (r - inner) / (outer - inner) - 1.0
    return smooth_step(u)


def radial_cutoff_derivative(r, inner: float, outer: float):
    r = np.asarray(r, dtype=float)
    scale = 2.0 / (outer - inner)
    u = scale * (r - inner) - 1.0
    return scale * smooth_step_derivative(u)


def radial_cutoff_second_derivative(r, inner: float, outer: float):
    r = np.asarray(r, dtype=float)
    scale = 2.0 / (outer - inner)
    u = scale * (r - inner) - 1.0
    return scale * scale * smooth_step_second_derivative(u)
