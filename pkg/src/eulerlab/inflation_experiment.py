"""Bump-sum initial vorticity, high-frequency perturbation and the inflation runs.

The initial vorticity is a sum of rescaled odd-odd bump quadruples

    omega0 = M^-2 N^(-1/q) sum_{k=0..N} 2^((-1+2/r)k) phi0(2^k x),

and the perturbation is the modulated wave packet

    beta = lam^(-1+2/r) k^(-1/2) sum_e e1 e2 rho(lam (x - x*_e)) sin(k x1),

with ``rho`` the inverse transform of two unit bumps centered at ``+-(2, 0)``.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from functools import lru_cache

import numpy as np
from scipy.interpolate import CubicHermiteSpline, RectBivariateSpline
from scipy.special import gamma, j0, j1

from . import lagrangian_solver as ls
from .errors import InvalidInputError, ResolutionError
from .function_spaces import (
    BesovParams,
    _lp_array,
    _lq_sum,
    besov_norm,
    build_filter_bank,
    dyadic_multiplier,
    littlewood_paley_blocks,
)
from .grid import Grid2D, ScalarField2D, _jsonable

BUMP_RADIUS = 0.25
NODES_PER_RADIUS = 8


# --- the bump quadruple --------------------------------------------------------


def bump_phi(x1, x2):
    """Radial bump ``exp(1 - 1/(1 - 16|x|^2))`` supported in ``|x| < 1/4``, with peak 1."""
    s = 16.0 * (np.asarray(x1, dtype=float) ** 2 + np.asarray(x2, dtype=float) ** 2)
    out = np.zeros(np.broadcast(s).shape)
    inside = s < 1.0
    out[inside] = np.exp(1.0 - 1.0 / (1.0 - s[inside]))
    return out


def _bump_radial_derivative_over_r(s):
    # d phi / d|x| divided by |x|, as a function of s = 16|x|^2 (inside only)
    return np.exp(1.0 - 1.0 / (1.0 - s)) * (-32.0 / (1.0 - s) ** 2)


def bump_phi_gradient(x1, x2):
    x1 = np.asarray(x1, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    s = 16.0 * (x1**2 + x2**2)
    g = np.zeros(np.broadcast(s).shape)
    inside = s < 1.0
    g[inside] = _bump_radial_derivative_over_r(s[inside])
    return g * x1, g * x2


_SIGNS = ((1, 1), (-1, 1), (1, -1), (-1, -1))


def phi0(x1, x2):
    """Odd-odd quadruple of bumps centered at ``(+-1, +-1)``."""
    x1 = np.asarray(x1, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    return sum(e1 * e2 * bump_phi(x1 - e1, x2 - e2) for e1, e2 in _SIGNS)


def phi0_gradient(x1, x2):
    g1 = np.zeros(np.broadcast(np.asarray(x1), np.asarray(x2)).shape)
    g2 = np.zeros_like(g1)
    for e1, e2 in _SIGNS:
        a, b = bump_phi_gradient(np.asarray(x1) - e1, np.asarray(x2) - e2)
        g1 += e1 * e2 * a
        g2 += e1 * e2 * b
    return g1, g2


def mean_abs_sin_power(p: float) -> float:
    """Average of ``|sin|^p`` over a period (``1`` for ``p = inf``)."""
    if math.isinf(p):
        return 1.0
    return float(gamma((p + 1) / 2) / (math.sqrt(math.pi) * gamma(p / 2 + 1)))


@lru_cache(maxsize=None)
def bump_moments(r: float) -> dict:
    """Exact ``L^r`` norms of one bump and of its partials / gradient (1D radial quadrature)."""
    x, w = np.polynomial.legendre.leggauss(400)
    rho = 0.5 * BUMP_RADIUS * (x + 1.0)
    w = 0.5 * BUMP_RADIUS * w
    s = 16.0 * rho**2
    phi = np.exp(1.0 - 1.0 / (1.0 - s))
    dphi = np.abs(_bump_radial_derivative_over_r(s) * rho)
    two_pi = 2.0 * math.pi
    return {
        "phi": (two_pi * np.sum(w * rho * phi**r)) ** (1 / r),
        "partial": (two_pi * mean_abs_sin_power(r) * np.sum(w * rho * dphi**r)) ** (1 / r),
        "gradient": (two_pi * np.sum(w * rho * dphi**r)) ** (1 / r),
    }


# --- parameters and the initial vorticity ----------------------------------------


@dataclass(frozen=True)
class InflationParams:
    M: float
    N: int
    r: float
    q: float
    n: int = 8
    x_star: tuple[float, float] | None = None

    def __post_init__(self):
        if not self.M > 0:
            raise InvalidInputError(f"M must be positive, got {self.M}")
        if int(self.N) != self.N or self.N < 0:
            raise InvalidInputError(f"N must be a non-negative integer, got {self.N}")
        if not self.r > 2:
            raise InvalidInputError(f"r must exceed 2, got {self.r}")
        if not self.q > 1:
            raise InvalidInputError(f"q must exceed 1, got {self.q}")
        if int(self.n) != self.n or self.n < 1:
            raise InvalidInputError(f"n must be a positive integer, got {self.n}")
        object.__setattr__(self, "N", int(self.N))
        object.__setattr__(self, "n", int(self.n))
        if self.x_star is not None:
            object.__setattr__(self, "x_star", (float(self.x_star[0]), float(self.x_star[1])))

    @property
    def lam(self) -> float:
        return 3.0 * self.n

    @property
    def k(self) -> float:
        return self.lam**2

    @property
    def horizon(self) -> float:
        return self.M**-3

    @property
    def prefactor(self) -> float:
        # N = 0 keeps a single quadruple with unit weight
        return self.M**-2 * (self.N ** (-1.0 / self.q) if self.N >= 1 else 1.0)

    def scale_amplitude(self, k: int) -> float:
        return 2.0 ** ((-1.0 + 2.0 / self.r) * k)

    def to_dict(self) -> dict:
        return _jsonable(asdict(self))


def _candidate_scale(x1, x2, N: int):
    # a point can only sit in the support of scale k = round(-log2 |x1|)
    a = np.maximum(np.abs(x1), 1e-300)
    k = np.rint(-np.log2(a))
    return np.clip(k, 0, N).astype(int)


def omega0(params: InflationParams, x1, x2):
    """Analytic initial vorticity at arbitrary points."""
    x1 = np.asarray(x1, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    x1, x2 = np.broadcast_arrays(x1, x2)
    k = _candidate_scale(x1, x2, params.N)
    scale = 2.0**k
    amp = 2.0 ** ((-1.0 + 2.0 / params.r) * k)
    return params.prefactor * amp * phi0(scale * x1, scale * x2)


def omega0_gradient(params: InflationParams, x1, x2):
    x1, x2 = np.broadcast_arrays(np.asarray(x1, dtype=float), np.asarray(x2, dtype=float))
    k = _candidate_scale(x1, x2, params.N)
    scale = 2.0**k
    amp = params.prefactor * 2.0 ** ((-1.0 + 2.0 / params.r) * k) * scale
    g1, g2 = phi0_gradient(scale * x1, scale * x2)
    return amp * g1, amp * g2


def support_balls(params: InflationParams) -> list[tuple[tuple[float, float], float, int]]:
    """``(center, radius, scale)`` of every bump in the initial vorticity."""
    out = []
    for k in range(params.N + 1):
        c, rad = 2.0**-k, 2.0 ** -(k + 2)
        for e1, e2 in _SIGNS:
            out.append(((e1 * c, e2 * c), rad, k))
    return out


def support_separation(params: InflationParams) -> float:
    """Smallest gap between two distinct support balls (positive means disjoint)."""
    balls = support_balls(params)
    centers = np.array([b[0] for b in balls])
    radii = np.array([b[1] for b in balls])
    d = np.linalg.norm(centers[:, None, :] - centers[None, :, :], axis=-1)
    gap = d - radii[:, None] - radii[None, :]
    np.fill_diagonal(gap, np.inf)
    return float(gap.min())


def finest_nodes_per_radius(params: InflationParams, grid: Grid2D) -> float:
    return 2.0 ** -(params.N + 2) / grid.spacing


def initial_vorticity(params: InflationParams, grid: Grid2D) -> ScalarField2D:
    """Sample the initial vorticity, refusing grids that under-resolve the finest bump."""
    nodes = finest_nodes_per_radius(params, grid)
    if nodes < NODES_PER_RADIUS:
        raise ResolutionError(
            f"finest bump radius 2^-{params.N + 2} spans {nodes:.2f} nodes; need >= {NODES_PER_RADIUS}"
        )
    lo = np.array(grid.center) - grid.half_width
    hi = np.array(grid.center) + grid.half_width - grid.spacing
    if np.any(lo > -1.25) or np.any(hi < 1.25):
        raise ResolutionError("grid does not contain the support [-5/4, 5/4]^2")
    x1, x2 = grid.coords()
    return ScalarField2D(grid, omega0(params, x1, x2))


# --- the perturbation -----------------------------------------------------------

CHI_TABLE_RADIUS = 64.0
CHI_TABLE_STEP = 1.0 / 256.0
XI0 = 2.0


def _chi_hat_radial(s):
    s = np.asarray(s, dtype=float)
    out = np.zeros_like(s)
    inside = s < 1.0
    out[inside] = np.exp(-1.0 / (1.0 - s[inside] ** 2))
    return out


@lru_cache(maxsize=1)
def _chi_normalization() -> float:
    x, w = np.polynomial.legendre.leggauss(400)
    s = 0.5 * (x + 1.0)
    return float(2.0 * math.pi * np.sum(0.5 * w * s * _chi_hat_radial(s)))


def chi_hat(xi1, xi2):
    """Smooth radial bump in the unit ball with unit integral."""
    s = np.hypot(xi1, xi2)
    return _chi_hat_radial(s) / _chi_normalization()


@lru_cache(maxsize=1)
def _chi_table() -> CubicHermiteSpline:
    # chi(r) = 2 pi int_0^1 chi_hat(s) J0(2 pi r s) s ds, tabulated with exact slopes
    x, w = np.polynomial.legendre.leggauss(1024)
    s = 0.5 * (x + 1.0)
    ws = 0.5 * w * s * _chi_hat_radial(s) / _chi_normalization() * 2.0 * math.pi
    r = np.arange(0.0, CHI_TABLE_RADIUS + CHI_TABLE_STEP / 2, CHI_TABLE_STEP)
    vals = np.empty_like(r)
    slopes = np.empty_like(r)
    for lo in range(0, r.size, 2048):
        arg = 2.0 * math.pi * np.outer(r[lo : lo + 2048], s)
        vals[lo : lo + 2048] = j0(arg) @ ws
        slopes[lo : lo + 2048] = -(j1(arg) * (2.0 * math.pi * s)) @ ws
    return CubicHermiteSpline(r, vals, slopes)


def chi(radius):
    """Inverse transform of ``chi_hat`` as a function of ``|x|`` (zero past the table)."""
    radius = np.asarray(radius, dtype=float)
    out = np.zeros_like(radius)
    inside = radius <= CHI_TABLE_RADIUS
    out[inside] = _chi_table()(radius[inside])
    return out


def chi_derivative(radius):
    radius = np.asarray(radius, dtype=float)
    out = np.zeros_like(radius)
    inside = radius <= CHI_TABLE_RADIUS
    out[inside] = _chi_table().derivative()(radius[inside])
    return out


def rho_hat(xi1, xi2):
    return chi_hat(xi1 - XI0, xi2) + chi_hat(xi1 + XI0, xi2)


def rho(y1, y2):
    """``rho(y) = 2 chi(|y|) cos(4 pi y1)``."""
    return 2.0 * chi(np.hypot(y1, y2)) * np.cos(2.0 * math.pi * XI0 * np.asarray(y1))


def rho_gradient(y1, y2):
    y1 = np.asarray(y1, dtype=float)
    y2 = np.asarray(y2, dtype=float)
    r = np.hypot(y1, y2)
    c = chi(r)
    dc = chi_derivative(r)
    safe = np.where(r > 0, r, 1.0)
    w = 2.0 * math.pi * XI0
    cos, sin = np.cos(w * y1), np.sin(w * y1)
    g1 = 2.0 * (dc * y1 / safe) * cos - 2.0 * w * c * sin
    g2 = 2.0 * (dc * y2 / safe) * cos
    return g1, g2


@dataclass(frozen=True)
class BetaSpec:
    """Wave packet ``beta^{k, lam}`` localized at the four mirrors of ``x_star``."""

    lam: float
    k: float
    r: float
    x_star: tuple[float, float] = (0.5, 0.5)

    def __post_init__(self):
        if not (self.lam > 0 and self.k > 0):
            raise InvalidInputError("lam and k must be positive")
        if not self.r > 2:
            raise InvalidInputError(f"r must exceed 2, got {self.r}")
        object.__setattr__(self, "x_star", (float(self.x_star[0]), float(self.x_star[1])))

    @classmethod
    def from_params(cls, params: InflationParams, x_star=None) -> BetaSpec:
        xs = x_star if x_star is not None else params.x_star
        if xs is None:
            raise InvalidInputError("a target point x_star is required")
        return cls(params.lam, params.k, params.r, xs)

    @property
    def amplitude(self) -> float:
        return self.lam ** (-1.0 + 2.0 / self.r) / math.sqrt(self.k)

    @property
    def max_frequency(self) -> float:
        """Largest ``|xi|`` (cycles per unit length) where the transform is nonzero."""
        return self.k / (2.0 * math.pi) + (XI0 + 1.0) * self.lam

    def mirrors(self):
        x1, x2 = self.x_star
        for e1, e2 in _SIGNS:
            yield e1 * e2, (e1 * x1, e2 * x2)

    def envelope(self, x1, x2):
        """``sum_e e1 e2 rho(lam (x - x*_e))``."""
        x1 = np.asarray(x1, dtype=float)
        x2 = np.asarray(x2, dtype=float)
        out = np.zeros(np.broadcast(x1, x2).shape)
        for s, (c1, c2) in self.mirrors():
            out += s * rho(self.lam * (x1 - c1), self.lam * (x2 - c2))
        return out

    def __call__(self, x1, x2):
        return self.amplitude * self.envelope(x1, x2) * np.sin(self.k * np.asarray(x1, dtype=float))

    def gradient(self, x1, x2):
        x1 = np.asarray(x1, dtype=float)
        x2 = np.asarray(x2, dtype=float)
        env = np.zeros(np.broadcast(x1, x2).shape)
        d1 = np.zeros_like(env)
        d2 = np.zeros_like(env)
        for s, (c1, c2) in self.mirrors():
            y1, y2 = self.lam * (x1 - c1), self.lam * (x2 - c2)
            env += s * rho(y1, y2)
            g1, g2 = rho_gradient(y1, y2)
            d1 += s * self.lam * g1
            d2 += s * self.lam * g2
        sin, cos = np.sin(self.k * x1), np.cos(self.k * x1)
        a = self.amplitude
        return a * (d1 * sin + env * self.k * cos), a * d2 * sin

    def hat(self, xi1, xi2):
        """Closed-form Fourier transform with the ``exp(-2 pi i x.xi)`` convention."""
        xi1 = np.asarray(xi1, dtype=float)
        xi2 = np.asarray(xi2, dtype=float)
        shift = self.k / (2.0 * math.pi)
        pref = self.lam ** (-3.0 + 2.0 / self.r) / math.sqrt(self.k) / 2j
        out = np.zeros(np.broadcast(xi1, xi2).shape, dtype=complex)
        for m, sign in ((1, 1.0), (2, -1.0)):
            s1 = xi1 + (-1) ** m * shift
            amp = rho_hat(s1 / self.lam, xi2 / self.lam)
            nz = amp != 0
            if not np.any(nz):
                continue
            for s, (c1, c2) in self.mirrors():
                phase = np.exp(-2j * math.pi * (c1 * s1[nz] + c2 * xi2[nz]))
                out[nz] += sign * s * amp[nz] * phase
        return pref * out


def check_beta_resolution(beta: BetaSpec, grid: Grid2D) -> None:
    if beta.max_frequency >= grid.nyquist:
        raise ResolutionError(
            f"perturbation reaches |xi| = {beta.max_frequency:.1f}, beyond Nyquist {grid.nyquist:.1f}"
        )


def perturbation_beta(beta: BetaSpec, grid: Grid2D) -> ScalarField2D:
    check_beta_resolution(beta, grid)
    x1, x2 = grid.coords()
    return ScalarField2D(grid, beta(x1, x2))


def sampled_transform(fld: ScalarField2D) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Continuous-transform estimate ``h^2 e^{-2 pi i x0.xi} FFT`` on the rfft half-plane."""
    g = fld.grid
    f1 = np.fft.fftfreq(g.n, d=g.spacing)
    f2 = np.fft.rfftfreq(g.n, d=g.spacing)
    xi1, xi2 = np.meshgrid(f1, f2, indexing="ij")
    x0 = np.array(g.center) - g.half_width
    spec = np.fft.rfft2(fld.values) * g.cell_area
    spec *= np.exp(-2j * math.pi * (x0[0] * xi1 + x0[1] * xi2))
    return xi1, xi2, spec


def fourier_identity_error(beta: BetaSpec, grid: Grid2D) -> float:
    """Relative l2 mismatch between the FFT of sampled ``beta`` and its closed form."""
    fld = perturbation_beta(beta, grid)
    xi1, xi2, spec = sampled_transform(fld)
    exact = beta.hat(xi1, xi2)
    # rfft half-plane: interior columns stand for two conjugate frequencies
    weight = np.full(xi2.shape[1], 2.0)
    weight[0] = 1.0
    if grid.n % 2 == 0:
        weight[-1] = 1.0
    num = np.sum(weight * np.abs(spec - exact) ** 2)
    den = np.sum(weight * np.abs(exact) ** 2)
    return float(math.sqrt(num / den))


# --- norms of the initial vorticity -----------------------------------------------


@dataclass
class Lemma51Row:
    N: int
    M: float
    lp: float
    sobolev: float
    besov: float
    besov_homogeneous: float

    def to_dict(self) -> dict:
        return asdict(self)


@lru_cache(maxsize=8)
def phi0_block_table(r: float, half_width: float = 4.0, n: int = 2048) -> tuple[int, np.ndarray]:
    """``(j_min, a)`` with ``a[j - j_min] = |Delta_j phi0|_{L^r}`` over the grid's band."""
    grid = Grid2D(half_width, n)
    x1, x2 = grid.coords()
    fld = ScalarField2D(grid, phi0(x1, x2))
    bank = build_filter_bank(grid)
    a = [_lp_array(block, grid.cell_area, r) for _, block in littlewood_paley_blocks(fld, bank)]
    return bank.l_min, np.array(a)


def lemma51_norms(params: InflationParams, table=None) -> Lemma51Row:
    """``W^{1,r}`` and ``B^1_{r,q}`` norms of the initial vorticity.

    The Sobolev norm is exact because the bumps have disjoint supports. For the
    Besov norm each block ``Delta_l omega0`` is split into the rescaled blocks
    ``Delta_{l-k} phi0 (2^k x)`` of the individual scales, whose ``L^r`` norms
    add in ``l^r`` when their overlap is neglected; ``Delta_j phi0`` is
    tabulated once on a fine grid.
    """
    r, q, N = params.r, params.q, params.N
    mom = bump_moments(r)
    c = params.prefactor
    ks = np.arange(N + 1)
    lp = c * (4.0 * np.sum(2.0 ** (-ks * r))) ** (1 / r) * mom["phi"]
    partial = c * (4.0 * (N + 1)) ** (1 / r) * mom["partial"]
    sobolev = lp + 2.0 * partial
    j_min, a = phi0_block_table(r) if table is None else table
    b = 2.0 ** (j_min + np.arange(a.size)) * a
    inner = np.zeros(a.size + N)
    for kk in range(N + 1):
        inner[kk : kk + a.size] += b**r
    homogeneous = c * _lq_sum(inner ** (1 / r), q)
    return Lemma51Row(N, params.M, float(lp), float(sobolev), float(lp + homogeneous), float(homogeneous))


def lemma51_scan(M: float, r: float, q: float, Ns) -> list[Lemma51Row]:
    if q > r:
        raise InvalidInputError(f"the bounds need q <= r, got q={q}, r={r}")
    table = phi0_block_table(r)
    return [lemma51_norms(InflationParams(M, N, r, q), table) for N in Ns]


def flatness(values) -> float:
    values = np.asarray(values, dtype=float)
    return float(values.max() / values.min())


def grid_norms(params: InflationParams, grid: Grid2D) -> dict:
    """Direct grid evaluation of the same norms (only feasible for small ``N``)."""
    fld = initial_vorticity(params, grid)
    x1, x2 = grid.coords()
    g1, g2 = omega0_gradient(params, x1, x2)
    cell = grid.cell_area
    lp = _lp_array(fld.values, cell, params.r)
    sob = lp + _lp_array(g1, cell, params.r) + _lp_array(g2, cell, params.r)
    bes = besov_norm(fld, BesovParams(1.0, params.r, params.q))
    return {"lp": lp, "sobolev": sob, "besov": bes.value, "report": bes}


# --- scaling scans for the perturbation -----------------------------------------


def fit_power_law(x, y) -> float:
    """Least-squares slope of ``log y`` against ``log x``."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size < 2 or np.any(x <= 0) or np.any(y <= 0):
        raise InvalidInputError("power-law fit needs >= 2 positive samples")
    return float(np.polyfit(np.log(x), np.log(y), 1)[0])


ENVELOPE_REACH = 40.0
MIN_SEPARATION = 2.0


class ModulatedBeta:
    """Norms of ``T beta`` for real Fourier multipliers ``T`` via the slow envelope.

    Writing ``beta = a Im(e^{i k x1} R)``, one has ``T beta = a Im(e^{i k x1} E)``
    with ``E`` the inverse transform of ``m(eta + k/(2 pi) e1) R_hat(eta)``.
    ``E`` varies on the envelope scale ``1/lam`` only, so it lives on a coarse
    grid, and ``|T beta|_p^p`` is ``a^p <|sin|^p> |E|_p^p`` up to terms that
    vanish as ``k / lam`` grows.
    """

    def __init__(self, beta: BetaSpec):
        self.beta = beta
        kappa = beta.k / (2.0 * math.pi)
        if kappa < MIN_SEPARATION * (XI0 + 1.0) * beta.lam:
            raise InvalidInputError(
                f"carrier k/(2 pi) = {kappa:.1f} is not well separated from the envelope band {3 * beta.lam:.1f}"
            )
        self.kappa = kappa
        reach = max(abs(beta.x_star[0]), abs(beta.x_star[1])) + ENVELOPE_REACH / beta.lam
        band = (XI0 + 1.0) * beta.lam
        n = 1 << max(5, math.ceil(math.log2(2 * reach * 2.2 * band)))
        self.grid = Grid2D(reach, n)
        f = np.fft.fftfreq(n, d=self.grid.spacing)
        self.eta1, self.eta2 = np.meshgrid(f, f, indexing="ij")
        x0 = -reach
        r_hat = np.zeros(self.eta1.shape, dtype=complex)
        amp = rho_hat(self.eta1 / beta.lam, self.eta2 / beta.lam) / beta.lam**2
        for s, (c1, c2) in beta.mirrors():
            r_hat += s * amp * np.exp(-2j * math.pi * (c1 * self.eta1 + c2 * self.eta2))
        # fold in the grid offset once so that ifft2 returns samples at the nodes
        self._r_hat = r_hat * np.exp(2j * math.pi * x0 * (self.eta1 + self.eta2))
        self.shifted_radius = np.hypot(self.eta1 + kappa, self.eta2)

    def envelope(self, multiplier) -> np.ndarray:
        """``E`` on the coarse grid for a multiplier given as ``m(xi1, xi2)``."""
        m = multiplier(self.eta1 + self.kappa, self.eta2)
        return np.fft.ifft2(m * self._r_hat) / self.grid.cell_area

    def lp(self, env: np.ndarray, p: float) -> float:
        a = self.beta.amplitude
        if math.isinf(p):
            return a * float(np.max(np.abs(env)))
        return a * mean_abs_sin_power(p) ** (1 / p) * _lp_array(np.abs(env), self.grid.cell_area, p)

    def besov(self, params: BesovParams) -> float:
        lo = self.kappa - (XI0 + 1.0) * self.beta.lam
        hi = self.kappa + (XI0 + 1.0) * self.beta.lam
        terms = []
        for l in range(math.floor(math.log2(lo)) - 1, math.ceil(math.log2(hi)) + 1):
            mult = dyadic_multiplier(self.shifted_radius, l)
            if not np.any(mult):
                continue
            env = np.fft.ifft2(mult * self._r_hat) / self.grid.cell_area
            terms.append(2.0 ** (params.s * l) * self.lp(env, params.p))
        full = self.lp(np.fft.ifft2(self._r_hat) / self.grid.cell_area, params.p)
        return full + _lq_sum(terms, params.q)


def symbol_grad_inverse_laplacian(l: int):
    """Symbol of ``d_l Delta^{-1}``: ``-i xi_l / (2 pi |xi|^2)``."""

    def m(xi1, xi2):
        xi = xi1 if l == 1 else xi2
        return -1j * xi / (2.0 * math.pi * (xi1**2 + xi2**2))

    return m


def symbol_fractional_grad_inverse_laplacian(l: int, sigma: float):
    """Symbol of ``D^{1+sigma} d_l Delta^{-1}`` with ``D^s = |2 pi xi|^s``."""
    base = symbol_grad_inverse_laplacian(l)

    def m(xi1, xi2):
        return (2.0 * math.pi * np.hypot(xi1, xi2)) ** (1.0 + sigma) * base(xi1, xi2)

    return m


@dataclass
class Lemma53Row:
    sweep: str
    k: float
    lam: float
    besov: float
    item2: float
    item3: float
    item3_l2: float

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class Lemma53Table:
    rows: list[Lemma53Row]
    r: float
    q: float
    p: float
    sigma: float
    exponents: dict = field(default_factory=dict)
    predicted: dict = field(default_factory=dict)
    derived: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return _jsonable(
            {
                "r": self.r,
                "q": self.q,
                "p": self.p,
                "sigma": self.sigma,
                "rows": [row.to_dict() for row in self.rows],
                "exponents": self.exponents,
                "predicted": self.predicted,
                "derived": self.derived,
            }
        )


def lemma53_point(k: float, lam: float, r: float, q: float, p: float, sigma: float, x_star=(0.5, 0.5), sweep=""):
    mod = ModulatedBeta(BetaSpec(lam, k, r, x_star))
    return Lemma53Row(
        sweep=sweep,
        k=float(k),
        lam=float(lam),
        besov=float(mod.besov(BesovParams(1.0, r, q))),
        item2=float(mod.lp(mod.envelope(symbol_fractional_grad_inverse_laplacian(1, sigma)), p)),
        item3=float(mod.lp(mod.envelope(symbol_grad_inverse_laplacian(1)), p)),
        item3_l2=float(mod.lp(mod.envelope(symbol_grad_inverse_laplacian(2)), p)),
    )


def log_samples(lo: float, hi: float, per_decade: int) -> np.ndarray:
    count = max(2, math.ceil(per_decade * math.log10(hi / lo)) + 1)
    return np.geomspace(lo, hi, count)


def lemma53_scan(
    r: float,
    q: float,
    p: float = 4.0,
    sigma: float = 0.5,
    k_range=(400.0, 4000.0),
    lam_fixed: float = 8.0,
    lam_range=(6.0, 60.0),
    k_fixed: float = 10000.0,
    per_decade: int = 5,
    x_star=(0.5, 0.5),
) -> Lemma53Table:
    """Sweep ``k`` at fixed ``lam`` and ``lam`` at fixed ``k``; fit power laws."""
    if not (1 < q < 2 < r):
        raise InvalidInputError("the scan needs 1 < q < 2 < r")
    if not (p >= 2 and sigma > 0):
        raise InvalidInputError("the scan needs p >= 2 and sigma > 0")
    ks = log_samples(*k_range, per_decade)
    lams = log_samples(*lam_range, per_decade)
    rows = [lemma53_point(k, lam_fixed, r, q, p, sigma, x_star, "k") for k in ks]
    rows += [lemma53_point(k_fixed, lam, r, q, p, sigma, x_star, "lam") for lam in lams]
    kr = [row for row in rows if row.sweep == "k"]
    lr = [row for row in rows if row.sweep == "lam"]
    exps = {}
    for name in ("besov", "item2", "item3", "item3_l2"):
        exps[f"{name}_vs_k"] = fit_power_law([x.k for x in kr], [getattr(x, name) for x in kr])
        exps[f"{name}_vs_lam"] = fit_power_law([x.lam for x in lr], [getattr(x, name) for x in lr])
    predicted = {
        "besov_vs_k": 0.5,
        "besov_vs_lam": -1.0,
        "item3_vs_k": -0.5,
        "item3_vs_lam": -2.0 + 2.0 / r - 2.0 / p,
    }
    # exact scaling of the modulated packet: the symbol of d_l Delta^-1 is of
    # size 1/k on the carrier, so item 3 picks up k^-3/2 rather than k^-1/2
    derived = {
        "besov_vs_k": 0.5,
        "besov_vs_lam": -1.0,
        "item2_vs_k": sigma - 0.5,
        "item2_vs_lam": -1.0 + 2.0 / r - 2.0 / p,
        "item3_vs_k": -1.5,
        "item3_vs_lam": -1.0 + 2.0 / r - 2.0 / p,
    }
    return Lemma53Table(rows, r, q, p, sigma, exps, predicted, derived)


# --- solver runs -----------------------------------------------------------------


@dataclass(frozen=True)
class SolverSettings:
    n_steps: int = 100
    checkpoint_every: int = 10
    seeds_per_side: int = 12
    delta_factor: float = 2.0
    probe_half_width: float = 2.0
    probe_spacing: float = 1.0 / 16.0
    beta_points_per_wavelength: float = 6.0
    beta_reach: float = 2.0
    energy_grid_n: int = 32

    def __post_init__(self):
        if self.n_steps < 1 or self.checkpoint_every < 1:
            raise InvalidInputError("n_steps and checkpoint_every must be positive")
        if self.seeds_per_side < 6:
            raise InvalidInputError("need at least 6 seeds per side in each bump block")

    def to_dict(self) -> dict:
        return asdict(self)


def _bump_block(name: str, center, radius: float, m: int) -> ls.SeedBlock:
    # one-cell margin around the support ball
    spacing = 2.0 * radius / (m - 3)
    return ls.square_block(name, center, radius + spacing, m)


def _fundamental_signs(symmetry):
    if symmetry == ls.ODD_ODD:
        return ((1, 1),)
    if symmetry == ls.ODD_X2:
        return ((1, 1), (-1, 1))
    return _SIGNS


def _probe_block(settings: SolverSettings, symmetry) -> ls.SeedBlock:
    P, h = settings.probe_half_width, settings.probe_spacing
    m = int(round(P / h))
    if symmetry == ls.ODD_ODD:
        return ls.SeedBlock("probe", (P / 2, P / 2), h, (m + 1, m + 1))
    if symmetry == ls.ODD_X2:
        return ls.SeedBlock("probe", (0.0, P / 2), h, (2 * m + 1, m + 1))
    return ls.SeedBlock("probe", (0.0, 0.0), h, (2 * m + 1, 2 * m + 1))


def omega0_discretization(params: InflationParams, settings: SolverSettings, symmetry=ls.ODD_ODD):
    blocks = []
    for k in range(params.N + 1):
        c, rad = 2.0**-k, 2.0 ** -(k + 2)
        for e1, e2 in _fundamental_signs(symmetry):
            blocks.append(_bump_block(f"bump{k}{'+' if e1 > 0 else '-'}{'+' if e2 > 0 else '-'}", (e1 * c, e2 * c), rad, settings.seeds_per_side))
    blocks.append(_probe_block(settings, symmetry))
    names = {b.name for b in blocks if b.name != "probe"}
    return ls.discretize(
        lambda p: omega0(params, p[:, 0], p[:, 1]),
        blocks,
        source_blocks=names,
        delta_factor=settings.delta_factor,
        symmetry=symmetry,
    )


def beta_discretization(beta: BetaSpec, settings: SolverSettings, symmetry=ls.ODD_X2):
    """Lattices over the envelope around the mirrors of ``x_star`` in the fundamental domain."""
    wavelength = 2.0 * math.pi / beta.k
    spacing = wavelength / settings.beta_points_per_wavelength
    half = settings.beta_reach / beta.lam
    m = int(math.ceil(2 * half / spacing)) + 1
    blocks = []
    for e1, e2 in _fundamental_signs(symmetry):
        c = (e1 * beta.x_star[0], e2 * beta.x_star[1])
        blocks.append(ls.SeedBlock(f"beta{'+' if e1 > 0 else '-'}{'+' if e2 > 0 else '-'}", c, spacing, (m, m)))
    return ls.discretize(
        lambda p: beta(p[:, 0], p[:, 1]), blocks, delta_factor=settings.delta_factor, symmetry=symmetry
    )


@dataclass
class DeformationRun:
    params: InflationParams
    settings: SolverSettings
    times: list[float]
    entrywise: list[float]
    operator: list[float]
    d22: list[float]
    det_drift: list[float]
    energy: list[float]
    states: list = field(repr=False, default_factory=list)

    def series(self) -> list[dict]:
        return [
            {
                "t": t,
                "max_entry": a,
                "max_operator": b,
                "max_d2_eta2": c,
                "det_drift": d,
                "energy": e,
            }
            for t, a, b, c, d, e in zip(self.times, self.entrywise, self.operator, self.d22, self.det_drift, self.energy)
        ]

    def strictly_increasing(self) -> bool:
        return bool(np.all(np.diff(self.entrywise) > 0))

    def argmax_checkpoint(self) -> int:
        return int(np.argmax(self.entrywise))


def _record(state, settings, energy_grid):
    rep = ls.max_deformation(state)
    det = np.linalg.det(state.jacobians)
    return (
        rep.entrywise,
        rep.operator,
        float(np.max(np.abs(state.jacobians[:, 1, 1]))),
        float(np.max(np.abs(det - 1.0))),
        ls.kinetic_energy(state, energy_grid) if energy_grid is not None else float("nan"),
    )


def run_states(disc, params: InflationParams, settings: SolverSettings):
    dt = params.horizon / settings.n_steps
    traj = ls.integrate(ls.VortexState.initial(disc), params.horizon, dt, checkpoint_every=settings.checkpoint_every)
    return traj.states


def run_deformation(params: InflationParams, settings: SolverSettings | None = None, symmetry=ls.ODD_ODD) -> DeformationRun:
    """Integrate the unperturbed flow over ``[0, M^-3]`` and record ``|D eta|`` at checkpoints."""
    settings = settings or SolverSettings()
    disc = omega0_discretization(params, settings, symmetry)
    states = run_states(disc, params, settings)
    egrid = Grid2D(settings.probe_half_width, settings.energy_grid_n) if settings.energy_grid_n else None
    rows = [_record(s, settings, egrid) for s in states]
    cols = list(zip(*rows))
    return DeformationRun(
        params,
        settings,
        [s.t for s in states],
        list(cols[0]),
        list(cols[1]),
        list(cols[2]),
        list(cols[3]),
        list(cols[4]),
        states,
    )


def select_x_star(state, min_coordinate: float) -> tuple[float, float]:
    """Seed in the open first quadrant maximizing ``|d eta^2 / d x2|``.

    Seeds closer than ``min_coordinate`` to an axis are skipped so that the
    four mirrored packets stay apart; ties go to the lexicographically
    smallest seed.
    """
    seeds = state.disc.seeds
    ok = (seeds[:, 0] >= min_coordinate) & (seeds[:, 1] >= min_coordinate)
    if not np.any(ok):
        raise InvalidInputError("no admissible seed for x_star")
    idx = np.flatnonzero(ok)
    val = np.abs(state.jacobians[idx, 1, 1])
    order = np.lexsort((seeds[idx, 1], seeds[idx, 0], -val))
    best = idx[order[0]]
    return float(seeds[best, 0]), float(seeds[best, 1])


class _JacobianField:
    """Bicubic interpolation of the ``D eta^2`` row over the probe block (upper half-plane)."""

    def __init__(self, state):
        b = state.disc.block("probe")
        jac = state.block_jacobians("probe")
        a1, a2 = b.axis(0), b.axis(1)
        self.d1 = RectBivariateSpline(a1, a2, jac[..., 1, 0])
        self.d2 = RectBivariateSpline(a1, a2, jac[..., 1, 1])

    def __call__(self, x1, x2):
        return self.d1.ev(x1, x2), self.d2.ev(x1, x2)


def _upper_half_boxes(beta: BetaSpec, reach: float, spacing: float):
    """Midpoint-rule nodes covering the envelope boxes in the upper half-plane (no double counting)."""
    half = reach / beta.lam
    boxes = []
    for e1 in (1, -1):
        c1, c2 = e1 * beta.x_star[0], beta.x_star[1]
        boxes.append((c1 - half, c1 + half, max(0.0, c2 - half), c2 + half))
    for i, (x_lo, x_hi, y_lo, y_hi) in enumerate(boxes):
        n1 = max(1, math.ceil((x_hi - x_lo) / spacing))
        n2 = max(1, math.ceil((y_hi - y_lo) / spacing))
        a1 = x_lo + (np.arange(n1) + 0.5) * spacing
        a2 = y_lo + (np.arange(n2) + 0.5) * spacing
        for lo in range(0, n1, max(1, 2_000_000 // n2)):
            x1, x2 = np.meshgrid(a1[lo : lo + max(1, 2_000_000 // n2)], a2, indexing="ij")
            x1, x2 = x1.ravel(), x2.ravel()
            keep = np.ones(x1.shape, dtype=bool)
            for j in range(i):
                bx = boxes[j]
                keep &= ~((x1 >= bx[0]) & (x1 < bx[1]) & (x2 >= bx[2]) & (x2 < bx[3]))
            yield x1[keep], x2[keep], spacing**2


def lemma54_terms(state, beta: BetaSpec, r: float, reach: float = 6.0, points_per_wavelength: float = 10.0) -> dict:
    """``L^r`` norms of ``d2 beta d1 eta^2``, ``d1 beta d2 eta^2`` and of their combination.

    ``state`` must carry a probe block laid out for the odd-x2 or full layout;
    the integrands are even in ``x2`` so the upper half-plane is doubled.
    """
    jf = _JacobianField(state)
    spacing = 2.0 * math.pi / beta.k / points_per_wavelength
    acc = {"item1": 0.0, "item2": 0.0, "stretch": 0.0, "grad_beta": 0.0}
    for x1, x2, w in _upper_half_boxes(beta, reach, spacing):
        b1, b2 = beta.gradient(x1, x2)
        e1, e2 = jf(x1, x2)
        acc["item1"] += w * np.sum(np.abs(b2 * e1) ** r)
        acc["item2"] += w * np.sum(np.abs(b1 * e2) ** r)
        acc["stretch"] += w * np.sum(np.abs(-b1 * e2 + b2 * e1) ** r)
        acc["grad_beta"] += w * np.sum(np.hypot(b1, b2) ** r)
    return {key: float((2.0 * val) ** (1 / r)) for key, val in acc.items()}


def omega0_stretch_term(state, params: InflationParams, nodes: int = 64) -> float:
    """``|grad omega0 . grad-perp eta^2|_{L^r}`` from the bump blocks' own Jacobians."""
    total = 0.0
    sym = state.disc.symmetry
    copies = {ls.ODD_ODD: 4.0, ls.ODD_X2: 2.0}.get(sym, 1.0)
    for b in state.disc.blocks:
        if not b.name.startswith("bump"):
            continue
        jac = state.block_jacobians(b.name)
        a1, a2 = b.axis(0), b.axis(1)
        s1 = RectBivariateSpline(a1, a2, jac[..., 1, 0])
        s2 = RectBivariateSpline(a1, a2, jac[..., 1, 1])
        h1 = (a1[-1] - a1[0]) / nodes
        h2 = (a2[-1] - a2[0]) / nodes
        q1 = a1[0] + (np.arange(nodes) + 0.5) * h1
        q2 = a2[0] + (np.arange(nodes) + 0.5) * h2
        x1, x2 = np.meshgrid(q1, q2, indexing="ij")
        g1, g2 = omega0_gradient(params, x1, x2)
        val = -g1 * s2.ev(x1, x2) + g2 * s1.ev(x1, x2)
        total += h1 * h2 * np.sum(np.abs(val) ** params.r)
    return float((copies * total) ** (1 / params.r))


def flow_gap(base_states, pert_states, n_shared: int) -> float:
    """``sup_t |eta^n - eta|_{C^1}`` over the shared particles."""
    if len(base_states) != len(pert_states) or any(
        not math.isclose(a.t, b.t, rel_tol=0, abs_tol=1e-15) for a, b in zip(base_states, pert_states)
    ):
        raise InvalidInputError("checkpoint schedules of the two runs differ")
    gap = 0.0
    for a, b in zip(base_states, pert_states):
        d0 = np.max(np.abs(b.positions[:n_shared] - a.positions))
        d1 = np.max(np.abs(b.jacobians[:n_shared] - a.jacobians))
        gap = max(gap, float(d0 + d1))
    return gap


def evolved_vorticity(state, params: InflationParams, beta: BetaSpec | None, grid: Grid2D) -> ScalarField2D:
    """``omega(t) = omega0^n o eta(t)^-1`` on ``grid`` using the probe block's flow map.

    The grid must be symmetric enough that mirrored nodes stay inside the probe
    block; lower half-plane values follow from oddness in ``x2``.
    """
    x1, x2 = grid.coords()
    y = np.stack([x1.ravel(), np.abs(x2.ravel())], axis=1)
    sign = np.where(x2.ravel() < 0, -1.0, 1.0)
    if state.t == 0.0:
        pre = y
    else:
        pre = ls.invert_flow(state, y, "probe").preimages
    vals = omega0(params, pre[:, 0], pre[:, 1])
    if beta is not None:
        vals = vals + beta(pre[:, 0], pre[:, 1])
    return ScalarField2D(grid, (sign * vals).reshape(grid.shape))


@dataclass
class InflationReport:
    params: InflationParams
    settings: SolverSettings
    x_star: tuple[float, float]
    t_star: float
    checkpoint: int
    times: list[float]
    deformation: list[float]
    besov_perturbed: list[float]
    besov_unperturbed: list[float]
    ratio: list[float]
    stretch_beta: float
    stretch_omega0: float
    theta: float
    grad_omega_n: float
    gap_term: float
    item1: float
    item2: float
    n_particles: dict
    notes: list[str] = field(default_factory=list)

    @property
    def dominance(self) -> float:
        return self.stretch_beta / max(self.stretch_omega0, self.gap_term)

    @property
    def growth(self) -> float:
        return self.ratio[self.checkpoint] / self.ratio[0]

    def to_dict(self) -> dict:
        out = asdict(self)
        out["params"] = self.params.to_dict()
        out["dominance"] = self.dominance
        out["growth"] = self.growth
        return _jsonable(out)


def run_inflation(
    params: InflationParams,
    settings: SolverSettings | None = None,
    besov_grid: Grid2D | None = None,
) -> InflationReport:
    """Unperturbed and perturbed runs with matched seeds and schedule, plus the norm chain."""
    settings = settings or SolverSettings()
    sym = ls.ODD_X2
    base_disc = omega0_discretization(params, settings, sym)
    base_states = run_states(base_disc, params, settings)
    deform = [ls.max_deformation(s).entrywise for s in base_states]
    ck = int(np.argmax(deform))
    t_star_state = base_states[ck]
    x_star = params.x_star or select_x_star(t_star_state, settings.beta_reach / params.lam)
    beta = BetaSpec.from_params(params, x_star)
    pert_disc = ls.merge(base_disc, beta_discretization(beta, settings, sym))
    pert_states = run_states(pert_disc, params, settings)
    theta = flow_gap(base_states, pert_states, base_disc.n_particles)

    terms = lemma54_terms(t_star_state, beta, params.r)
    mom = bump_moments(params.r)
    grad_omega0 = params.prefactor * (4.0 * (params.N + 1)) ** (1 / params.r) * mom["gradient"]
    grad_n = grad_omega0 + terms["grad_beta"]
    stretch0 = omega0_stretch_term(t_star_state, params)

    besov_grid = besov_grid or Grid2D(settings.probe_half_width, 2048)
    check_beta_resolution(beta, besov_grid)
    bp = BesovParams(1.0, params.r, params.q)
    bank = build_filter_bank(besov_grid)
    pert_norms, base_norms = [], []
    for sb, sp in zip(base_states, pert_states):
        pert_norms.append(besov_norm(evolved_vorticity(sp, params, beta, besov_grid), bp, bank).value)
        base_norms.append(besov_norm(evolved_vorticity(sb, params, None, besov_grid), bp, bank).value)
    ratio = [v / pert_norms[0] for v in pert_norms]
    return InflationReport(
        params=params,
        settings=settings,
        x_star=x_star,
        t_star=t_star_state.t,
        checkpoint=ck,
        times=[s.t for s in base_states],
        deformation=deform,
        besov_perturbed=pert_norms,
        besov_unperturbed=base_norms,
        ratio=ratio,
        stretch_beta=terms["stretch"],
        stretch_omega0=stretch0,
        theta=theta,
        grad_omega_n=grad_n,
        gap_term=theta * grad_n,
        item1=terms["item1"],
        item2=terms["item2"],
        n_particles={"unperturbed": base_disc.n_particles, "perturbed": pert_disc.n_particles},
        notes=[
            "growth is measured at fixed desk-scale parameters; the asymptotic magnitude claim is not tested",
            "the gap term uses |grad omega0|_r + |grad beta|_r as an upper bound for |grad omega0^n|_r",
        ],
    )
