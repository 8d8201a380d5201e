"""Explicit 3D shear flows ``(f(x2), 0, h(x1 - t f(x2)))`` and the Hölder gap between two of them.

Two shear flows that share ``h`` but use slightly different horizontal
profiles ``f`` and ``g`` start ``eps``-close in ``C^{1,alpha}`` yet, for every
``t > 0``, the third components differ by at least 2 in the seminorm of
their ``x1``-derivatives. Everything here is closed form except the
cut-off tail of ``h``, which is integrated by Gauss-Legendre quadrature.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from ._smooth import radial_cutoff, radial_cutoff_derivative, radial_cutoff_second_derivative
from .errors import InvalidInputError, ResolutionError
from .function_spaces import PairSampling, holder_norm_1d, holder_seminorm_array
from .grid import Grid2D, NormReport

Array = np.ndarray
_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(64)


@dataclass(frozen=True)
class Profile1D:
    value: Callable[[Array], Array]
    derivative: Callable[[Array], Array]
    sup_bound: float
    holder_bound: float
    label: str

    def __call__(self, x):
        return self.value(np.asarray(x, dtype=float))


@dataclass(frozen=True)
class ShearFlowSpec:
    f: Profile1D
    g: Profile1D
    h: Profile1D
    alpha: float
    a: float
    eps: float

    def profile(self, branch: str) -> Profile1D:
        if branch == "u":
            return self.f
        if branch == "v":
            return self.g
        raise InvalidInputError(f"branch must be 'u' or 'v', got {branch!r}")


# --- canonical profiles -------------------------------------------------------


def _constant_profile(c: float) -> Profile1D:
    return Profile1D(
        value=lambda x: np.full_like(np.asarray(x, dtype=float), c),
        derivative=lambda x: np.zeros_like(np.asarray(x, dtype=float)),
        sup_bound=abs(c),
        holder_bound=0.0,
        label=f"constant {c!r}",
    )


def plateau(x, a: float, width: float):
    """1 on ``[-a, a]``, smooth decay to 0 over ``width`` on each side."""
    return radial_cutoff(np.abs(x), a, a + width)


def plateau_derivative(x, a: float, width: float):
    x = np.asarray(x, dtype=float)
    return np.sign(x) * radial_cutoff_derivative(np.abs(x), a, a + width)


def plateau_second_derivative(x, a: float, width: float):
    x = np.asarray(x, dtype=float)
    return radial_cutoff_second_derivative(np.abs(x), a, a + width)


def _plateau_profile(base: float, amp: float, a: float, width: float) -> Profile1D:
    return Profile1D(
        value=lambda x: base + amp * plateau(x, a, width),
        derivative=lambda x: amp * plateau_derivative(x, a, width),
        sup_bound=abs(base) + abs(amp),
        holder_bound=float("nan"),
        label=f"{base!r} + {amp!r} * plateau(a={a}, width={width})",
    )


class _CutoffPower:
    """``h`` with ``h'(x) = |x|^alpha`` on ``[-2a, 2a]``, flattened to zero slope over one unit."""

    def __init__(self, alpha: float, a: float):
        self.alpha, self.inner, self.outer = alpha, 2.0 * a, 2.0 * a + 1.0
        self.core_end = self.inner ** (1.0 + alpha) / (1.0 + alpha)
        self.total = self.core_end + self._tail(np.array([self.outer]))[0]

    def _tail(self, s: Array) -> Array:
        # integral of tau^alpha * cutoff(tau) over [inner, s]
        s = np.asarray(s, dtype=float)
        half = 0.5 * (s - self.inner)
        tau = self.inner + half[..., None] * (1.0 + _GL_NODES)
        integrand = tau**self.alpha * radial_cutoff(tau, self.inner, self.outer)
        return half * (integrand @ _GL_WEIGHTS)

    def value(self, x):
        x = np.asarray(x, dtype=float)
        s = np.abs(x)
        out = s ** (1.0 + self.alpha) / (1.0 + self.alpha)
        mid = (s > self.inner) & (s < self.outer)
        if np.any(mid):
            out = np.where(mid, 0.0, out)
            out[mid] = self.core_end + self._tail(s[mid])
        out = np.where(s >= self.outer, self.total, out)
        return np.sign(x) * out

    def derivative(self, x):
        s = np.abs(np.asarray(x, dtype=float))
        return s**self.alpha * radial_cutoff(s, self.inner, self.outer)


def make_counterexample(alpha: float, eps: float, a: float = 1.0, plateau_width: float = 8.0) -> ShearFlowSpec:
    """Canonical pair: ``f = 1 - eps/2``, ``g = f + (eps/2) * plateau``, so ``max |g| = a = 1``."""
    alpha = float(alpha)
    eps = float(eps)
    if not 0.0 < alpha < 1.0:
        raise InvalidInputError(f"alpha must lie in (0, 1), got {alpha}")
    if not eps > 0.0:
        raise InvalidInputError(f"eps must be positive, got {eps}")
    if eps > 1.0:
        raise InvalidInputError("eps > 1 leaves no room for |f - g|_{1,alpha} < eps with a = 1")
    base = a - eps / 2.0
    f = _constant_profile(base)
    g = _plateau_profile(base, eps / 2.0, a, plateau_width)
    hh = _CutoffPower(alpha, a)
    h = Profile1D(
        value=hh.value,
        derivative=hh.derivative,
        sup_bound=hh.total,
        holder_bound=float("nan"),
        label=f"h' = |x|^{alpha} on [-{2 * a}, {2 * a}], cut off over one unit",
    )
    return ShearFlowSpec(f=f, g=g, h=h, alpha=alpha, a=a, eps=eps)


# --- exact solution -------------------------------------------------------------


def eval_velocity(spec: ShearFlowSpec, branch: str, t: float, x) -> Array:
    """Velocity at points ``x`` (shape ``(..., 3)``)."""
    if t < 0:
        raise InvalidInputError("t must be non-negative")
    prof = spec.profile(branch)
    x = np.asarray(x, dtype=float)
    horiz = prof(x[..., 1])
    out = np.zeros(x.shape)
    out[..., 0] = horiz
    out[..., 2] = spec.h(x[..., 0] - t * horiz)
    return out


def velocity_gradient(spec: ShearFlowSpec, branch: str, t: float, x) -> Array:
    """Analytic ``du_i/dx_j`` (shape ``(..., 3, 3)``)."""
    prof = spec.profile(branch)
    x = np.asarray(x, dtype=float)
    fv = prof(x[..., 1])
    fd = prof.derivative(x[..., 1])
    hd = spec.h.derivative(x[..., 0] - t * fv)
    grad = np.zeros(x.shape[:-1] + (3, 3))
    grad[..., 0, 1] = fd
    grad[..., 2, 0] = hd
    grad[..., 2, 1] = -t * fd * hd
    return grad


def velocity_time_derivative(spec: ShearFlowSpec, branch: str, t: float, x) -> Array:
    prof = spec.profile(branch)
    x = np.asarray(x, dtype=float)
    fv = prof(x[..., 1])
    out = np.zeros(x.shape)
    out[..., 2] = -fv * spec.h.derivative(x[..., 0] - t * fv)
    return out


def kink_margin() -> float:
    return 10.0 * math.sqrt(np.finfo(float).eps)


@dataclass
class ResidualReport:
    max_residual: float
    rejected: list[int]
    n_samples: int

    def __float__(self) -> float:
        return self.max_residual


def euler_residual(spec: ShearFlowSpec, branch: str, t: float, samples) -> ResidualReport:
    """Max of ``|du/dt + (u . grad) u|`` over samples off the kink set (pressure is zero)."""
    samples = np.atleast_2d(np.asarray(samples, dtype=float))
    prof = spec.profile(branch)
    arg = samples[:, 0] - t * prof(samples[:, 1])
    on_kink = np.abs(arg) <= kink_margin()
    keep = samples[~on_kink]
    if keep.size == 0:
        return ResidualReport(0.0, np.flatnonzero(on_kink).tolist(), 0)
    u = eval_velocity(spec, branch, t, keep)
    grad = velocity_gradient(spec, branch, t, keep)
    res = velocity_time_derivative(spec, branch, t, keep) + np.einsum("nij,nj->ni", grad, u)
    return ResidualReport(float(np.max(np.abs(res))), np.flatnonzero(on_kink).tolist(), int(keep.shape[0]))


def divergence(spec: ShearFlowSpec, branch: str, t: float, x) -> Array:
    grad = velocity_gradient(spec, branch, t, x)
    return np.trace(grad, axis1=-2, axis2=-1)


# --- the discontinuity ----------------------------------------------------------


def designated_points(spec: ShearFlowSpec, t: float, c: float) -> tuple[float, float]:
    """``x1 = t g(c)`` and ``y1 = t f(c)``."""
    return float(t * spec.g(c)), float(t * spec.f(c))


def _check_window(spec: ShearFlowSpec, t: float, c: float) -> tuple[float, float]:
    if not 0.0 < t <= 1.0:
        raise InvalidInputError(f"t must lie in (0, 1], got {t}")
    if not -spec.a < c < spec.a:
        raise InvalidInputError(f"c must lie in (-a, a), got {c}")
    fc, gc = float(spec.f(c)), float(spec.g(c))
    if fc == gc:
        raise InvalidInputError("f(c) == g(c): the designated points coincide")
    if t * max(abs(fc), abs(gc)) > spec.a:
        raise InvalidInputError("designated points leave the kink window")
    return fc, gc


def discontinuity_quotient(spec: ShearFlowSpec, t: float, c: float) -> float:
    """Hölder quotient of ``x1 -> h'(x1 - t f(c)) - h'(x1 - t g(c))`` between ``t g(c)`` and ``t f(c)``."""
    _check_window(spec, t, c)
    x1, y1 = designated_points(spec, t, c)
    tf, tg = t * float(spec.f(c)), t * float(spec.g(c))
    hp = spec.h.derivative
    window = 2.0 * spec.a
    if max(abs(x1 - tf), abs(x1 - tg), abs(y1 - tf), abs(y1 - tg)) > window:
        raise InvalidInputError("designated points fall outside [-2a, 2a]")
    fx = float(hp(np.array(x1 - tf)) - hp(np.array(x1 - tg)))
    fy = float(hp(np.array(y1 - tf)) - hp(np.array(y1 - tg)))
    return abs(fx - fy) / abs(x1 - y1) ** spec.alpha


def initial_gap(spec: ShearFlowSpec, n: int = 4096, pairs: PairSampling | None = None) -> NormReport:
    """``|f - g|_{1,alpha}`` measured on a 1D grid over ``[-4a, 4a]`` with exact derivatives."""
    half = 4.0 * spec.a
    x = -half + (2.0 * half / n) * np.arange(n)
    diff = spec.f(x) - spec.g(x)
    ddiff = spec.f.derivative(x) - spec.g.derivative(x)
    return holder_norm_1d(diff, 2.0 * half / n, ddiff, spec.alpha, pairs)


def slice_grid(spec: ShearFlowSpec, t: float, c: float, n: int = 64, pairs_apart: int = 4) -> Grid2D:
    """Grid in the ``(x1, x2)`` slice centred between the designated points, which sit on nodes."""
    x1, y1 = designated_points(spec, t, c)
    sep = abs(x1 - y1)
    if sep == 0.0:
        raise ResolutionError("designated points coincide")
    spacing = sep / pairs_apart
    return Grid2D(0.5 * n * spacing, n, (0.5 * (x1 + y1), float(c)))


def _slice_derivative_difference(spec: ShearFlowSpec, t: float, c: float, grid: Grid2D) -> Array:
    # kink arguments are built from integer node offsets so that t f(c) and
    # t g(c) fall exactly on nodes; absolute coordinates would round there
    x1_des, y1_des = designated_points(spec, t, c)
    h = grid.spacing
    i = np.arange(grid.n, dtype=float)
    i_y = grid.n // 2 + (-1 if y1_des < x1_des else 1) * round(abs(x1_des - y1_des) / (2.0 * h))
    i_x = 2 * (grid.n // 2) - i_y
    x2 = grid.axis(1)
    shift_f = t * (spec.f(np.array(c)) - spec.f(x2))
    shift_g = t * (spec.g(np.array(c)) - spec.g(x2))
    arg_f = (i - i_y)[:, None] * h + shift_f[None, :]
    arg_g = (i - i_x)[:, None] * h + shift_g[None, :]
    hp = spec.h.derivative
    return hp(arg_f) - hp(arg_g)


def measured_gap(
    spec: ShearFlowSpec, t: float, n: int = 64, c: float = 0.0, pairs: PairSampling | None = None
) -> NormReport:
    """Lower bound for ``|u(t) - v(t)|_{1,alpha}``.

    Sum of the measured ``|f - g|_{1,alpha}`` and the Hölder seminorm of
    ``d/dx1`` of the third-component difference on a 2D slice through the
    designated pair.
    """
    base = initial_gap(spec)
    if t == 0.0:
        return NormReport(
            value=base.value,
            method="shear-gap",
            resolution=base.resolution,
            details={"t": 0.0, "initial_gap": base.value, "slice_seminorm": 0.0},
        )
    if not 0.0 < t <= 1.0:
        raise InvalidInputError(f"t must lie in [0, 1], got {t}")
    fc, gc = _check_window(spec, t, c)
    grid = slice_grid(spec, t, c, n)
    if grid.spacing > t * spec.eps / 4.0 * (1 + 1e-12):
        raise ResolutionError(f"slice spacing {grid.spacing} cannot separate t f(c) and t g(c)")
    values = _slice_derivative_difference(spec, t, c, grid)
    pairs = pairs or PairSampling()
    semi = holder_seminorm_array(values, grid.spacing, spec.alpha, pairs)
    return NormReport(
        value=base.value + semi.value,
        method="shear-gap",
        resolution={"slice_L": grid.half_width, "slice_n": grid.n, "slice_spacing": grid.spacing},
        details={
            "t": t,
            "c": c,
            "initial_gap": base.value,
            "slice_seminorm": semi.value,
            "designated": [t * gc, t * fc],
        },
    )
