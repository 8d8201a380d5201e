"""Direct-sum Biot-Savart kernels with Krasny blob regularization.

Each target accumulates its sources in index order, so results do not
depend on the number of threads.
"""

from __future__ import annotations

import math

import numba
import numpy as np

_INV_2PI = 1.0 / (2.0 * math.pi)


@numba.njit(parallel=True, cache=True)
def _velocity(targets, sources, weights, delta2, out):
    m = targets.shape[0]
    n = sources.shape[0]
    for i in numba.prange(m):
        tx = targets[i, 0]
        ty = targets[i, 1]
        u = 0.0
        v = 0.0
        for j in range(n):
            dx = tx - sources[j, 0]
            dy = ty - sources[j, 1]
            s = weights[j] / (dx * dx + dy * dy + delta2[j])
            u -= dy * s
            v += dx * s
        out[i, 0] = u * _INV_2PI
        out[i, 1] = v * _INV_2PI


@numba.njit(parallel=True, cache=True)
def _velocity_gradient(targets, sources, weights, delta2, vel, grad):
    m = targets.shape[0]
    n = sources.shape[0]
    for i in numba.prange(m):
        tx = targets[i, 0]
        ty = targets[i, 1]
        u = 0.0
        v = 0.0
        g11 = 0.0
        g12 = 0.0
        g21 = 0.0
        for j in range(n):
            dx = tx - sources[j, 0]
            dy = ty - sources[j, 1]
            inv = 1.0 / (dx * dx + dy * dy + delta2[j])
            s = weights[j] * inv
            u -= dy * s
            v += dx * s
            t = 2.0 * s * inv
            g11 += dx * dy * t
            g12 += dy * dy * t - s
            g21 += s - dx * dx * t
        vel[i, 0] = u * _INV_2PI
        vel[i, 1] = v * _INV_2PI
        grad[i, 0, 0] = g11 * _INV_2PI
        grad[i, 0, 1] = g12 * _INV_2PI
        grad[i, 1, 0] = g21 * _INV_2PI
        grad[i, 1, 1] = -g11 * _INV_2PI


def blob_velocity(targets, sources, weights, delta2) -> np.ndarray:
    targets = np.ascontiguousarray(targets, dtype=np.float64)
    out = np.empty_like(targets)
    if targets.shape[0] == 0:
        return out
    _velocity(
        targets,
        np.ascontiguousarray(sources, dtype=np.float64),
        np.ascontiguousarray(weights, dtype=np.float64),
        np.ascontiguousarray(delta2, dtype=np.float64),
        out,
    )
    return out


def blob_velocity_gradient(targets, sources, weights, delta2) -> tuple[np.ndarray, np.ndarray]:
    """Velocity ``(M, 2)`` and gradient ``grad[i, a, b] = d u_a / d x_b`` ``(M, 2, 2)``."""
    targets = np.ascontiguousarray(targets, dtype=np.float64)
    vel = np.empty_like(targets)
    grad = np.empty((targets.shape[0], 2, 2))
    if targets.shape[0] == 0:
        return vel, grad
    _velocity_gradient(
        targets,
        np.ascontiguousarray(sources, dtype=np.float64),
        np.ascontiguousarray(weights, dtype=np.float64),
        np.ascontiguousarray(delta2, dtype=np.float64),
        vel,
        grad,
    )
    return vel, grad
