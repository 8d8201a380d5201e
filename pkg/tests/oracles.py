"""Independent reference computations used by the tests.

Nothing here goes through the package's FFT or filter-bank code paths.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.special import j0

from eulerlab.function_spaces import dyadic_multiplier


def gaussian_lp(p: float) -> float:
    """``|exp(-pi |x|^2)|_p`` on the plane."""
    return (1.0 / p) ** (1.0 / p)


def gaussian_block_radial(l: int, radii, nodes: int = 800) -> np.ndarray:
    """``Delta_l`` of ``exp(-pi |x|^2)`` as a function of ``|x|`` (Hankel transform)."""
    x, w = np.polynomial.legendre.leggauss(nodes)
    a, b = 2.0 ** (l - 1), 2.0 ** (l + 1)
    rho = 0.5 * (b - a) * x + 0.5 * (a + b)
    wr = 0.5 * (b - a) * w * dyadic_multiplier(rho, l) * np.exp(-math.pi * rho**2) * rho
    radii = np.asarray(radii, dtype=float)
    return 2.0 * math.pi * (j0(2.0 * math.pi * np.outer(radii, rho)) @ wr)


def gaussian_besov(s: float, p: float, q: float, bands, samples: int = 40001) -> float:
    """Dense radial quadrature of the inhomogeneous Besov norm of the Gaussian."""
    terms = []
    for l in bands:
        reach = 40.0 * 2.0 ** (-l) + 10.0
        r = np.linspace(0.0, reach, samples)
        vals = gaussian_block_radial(l, r)
        integral = 2.0 * math.pi * np.trapezoid(np.abs(vals) ** p * r, r)
        terms.append(2.0 ** (s * l) * integral ** (1.0 / p))
    terms = np.array(terms)
    return gaussian_lp(p) + float(np.sum(terms**q) ** (1.0 / q))


def rk4_pair_positions(d: float, gamma: float, delta: float, t: float) -> np.ndarray:
    """Exact blob-pair orbit: two equal blobs rotate rigidly at ``gamma / (pi (d^2 + delta^2))``."""
    omega = gamma / (math.pi * (d**2 + delta**2))
    c, s = math.cos(omega * t), math.sin(omega * t)
    return np.array([[-0.5 * d * c, -0.5 * d * s], [0.5 * d * c, 0.5 * d * s]])


def direct_biot_savart(targets, sources, weights, delta):
    """Loop-free but un-jitted Krasny sum, used to check the compiled kernel."""
    dx = targets[:, None, 0] - sources[None, :, 0]
    dy = targets[:, None, 1] - sources[None, :, 1]
    inv = 1.0 / (2.0 * math.pi * (dx**2 + dy**2 + delta**2))
    return np.stack([-(dy * inv) @ weights, (dx * inv) @ weights], axis=1)
