"""Numerical norms on uniform grids.

Sup, Lebesgue, Hölder (and the little-Hölder modulus), Besov through a
Littlewood-Paley filter bank, and fractional Sobolev norms. Hölder
quantities are lower bounds obtained from a deterministic pair-sampling
scheme; everything else is exact on the sample set up to quadrature.

Fourier convention: ``f^(xi) = int f(x) exp(-2 pi i <x, xi>) dx``, with
``xi`` in cycles per unit length.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import fft as sfft

from ._smooth import radial_cutoff
from .errors import InvalidInputError, ResolutionError
from .grid import Grid2D, NormReport, ScalarField2D, VectorField2D

# ---------------------------------------------------------------------------
# Lebesgue norms


def _check_p(p: float) -> float:
    p = float(p)
    if not p >= 1.0:
        raise InvalidInputError(f"exponent p must satisfy p >= 1, got {p}")
    return p


def _values(fld) -> np.ndarray:
    values = fld.values if isinstance(fld, ScalarField2D) else np.asarray(fld, dtype=float)
    if not np.all(np.isfinite(values)):
        raise InvalidInputError("field contains non-finite values")
    return values


def sup_norm(fld: ScalarField2D) -> float:
    """Maximum of ``|f|`` over the grid nodes."""
    values = _values(fld)
    return float(np.max(np.abs(values))) if values.size else 0.0


def _lp_array(values: np.ndarray, cell: float, p: float) -> float:
    if math.isinf(p):
        return float(np.max(np.abs(values)))
    peak = float(np.max(np.abs(values)))
    if peak == 0.0:
        return 0.0
    # factor out the peak so that f -> c f scales exactly and large p cannot overflow
    scaled = np.abs(values) / peak
    return peak * float(np.sum(scaled**p) * cell) ** (1.0 / p)


def lp_norm(fld: ScalarField2D, p: float) -> float:
    """Riemann-sum ``L^p`` norm; ``p = inf`` is the sup norm."""
    p = _check_p(p)
    return _lp_array(_values(fld), fld.grid.cell_area, p)


# ---------------------------------------------------------------------------
# Hölder seminorms by pair sampling


@dataclass(frozen=True)
class PairSampling:
    """Which node pairs a Hölder scan visits.

    Separations are grouped into dyadic bins ``2^b <= |d| < 2^(b+1)`` (grid
    units). Bins with ``b <= resolution`` are scanned exhaustively; in coarser
    bins only offsets that are multiples of ``2^(b - resolution)`` are kept,
    so every bin carries roughly the same number of directions. Each kept
    offset is compared at every node, so the 8 nearest neighbours and all
    short axis-aligned pairs are always present. Raising ``resolution``
    only adds offsets, hence never lowers the estimate.
    """

    resolution: int = 3
    max_separation: float | None = None  # physical length; None = whole grid
    extra_offsets: tuple[tuple[int, ...], ...] = ()

    def __post_init__(self):
        if self.resolution < 0:
            raise InvalidInputError("resolution must be >= 0")


def _canonical(offset: tuple[int, ...]) -> bool:
    for c in offset:
        if c != 0:
            return c > 0
    return False


@lru_cache(maxsize=64)
def _offsets_for_bin(b: int, resolution: int, ndim: int, limit: int) -> tuple[tuple[int, ...], ...]:
    stride = 2 ** max(0, b - resolution)
    lo, hi = 2**b, 2 ** (b + 1)
    reach = min(hi - 1, limit) // stride
    if reach < 1:
        return ()
    rng = np.arange(-reach, reach + 1) * stride
    grids = np.meshgrid(*([rng] * ndim), indexing="ij")
    cand = np.stack([g.ravel() for g in grids], axis=1)
    sq = np.sum(cand.astype(float) ** 2, axis=1)
    keep = (sq >= lo * lo) & (sq < hi * hi) & np.all(np.abs(cand) <= limit, axis=1)
    out = [tuple(int(c) for c in row) for row in cand[keep] if _canonical(tuple(int(c) for c in row))]
    out.sort(key=lambda o: (sum(c * c for c in o), o))
    return tuple(out)


def _pair_slices(shape, offset):
    a, b = [], []
    for n, d in zip(shape, offset):
        if d >= 0:
            a.append(slice(d, n))
            b.append(slice(0, n - d))
        else:
            a.append(slice(0, n + d))
            b.append(slice(-d, n))
    return tuple(a), tuple(b)


def _offset_max_diff(values: np.ndarray, offset) -> float:
    sa, sb = _pair_slices(values.shape, offset)
    block_a, block_b = values[sa], values[sb]
    if block_a.size == 0:
        return 0.0
    return float(np.max(np.abs(block_a - block_b)))


def _scan_offsets(values: np.ndarray, spacing: float, alpha: float, sampling: PairSampling):
    """Yield ``(bin, offset, separation, max quotient)`` for every sampled offset."""
    ndim = values.ndim
    limit = max(values.shape) - 1
    if sampling.max_separation is not None:
        limit = min(limit, int(math.floor(sampling.max_separation / spacing)))
    max_len = math.sqrt(ndim) * limit
    nbins = int(math.floor(math.log2(max_len))) + 1 if max_len >= 1 else 0
    seen = set()
    for b in range(nbins):
        for off in _offsets_for_bin(b, sampling.resolution, ndim, limit):
            seen.add(off)
            sep = math.sqrt(sum(c * c for c in off)) * spacing
            if sampling.max_separation is not None and sep > sampling.max_separation:
                continue
            yield b, off, sep, _offset_max_diff(values, off) / sep**alpha
    for off in sampling.extra_offsets:
        off = tuple(int(c) for c in off)
        if not _canonical(off):
            off = tuple(-c for c in off)
        if off in seen or not any(off):
            continue
        sep = math.sqrt(sum(c * c for c in off)) * spacing
        b = int(math.floor(math.log2(sep / spacing)))
        yield b, off, sep, _offset_max_diff(values, off) / sep**alpha


def _check_alpha(alpha: float) -> float:
    alpha = float(alpha)
    if not 0.0 < alpha < 1.0:
        raise InvalidInputError(f"Hölder exponent must lie in (0, 1), got {alpha}")
    return alpha


def holder_seminorm_array(values, spacing: float, alpha: float, pairs: PairSampling | None = None) -> NormReport:
    """Hölder seminorm lower bound for samples on a uniform grid of any dimension."""
    alpha = _check_alpha(alpha)
    values = np.asarray(values, dtype=float)
    if not np.all(np.isfinite(values)):
        raise InvalidInputError("field contains non-finite values")
    pairs = pairs or PairSampling()
    best, best_offset = 0.0, None
    bins: dict[int, dict] = {}
    for b, off, _sep, q in _scan_offsets(values, spacing, alpha, pairs):
        entry = bins.setdefault(b, {"bin": b, "offsets": 0, "max_quotient": 0.0})
        entry["offsets"] += 1
        entry["max_quotient"] = max(entry["max_quotient"], q)
        if q > best:
            best, best_offset = q, off
    return NormReport(
        value=best,
        method="holder-pair-sampling",
        resolution={"spacing": spacing, "shape": list(values.shape), "sampling_resolution": pairs.resolution},
        details={
            "alpha": alpha,
            "bins": [bins[k] for k in sorted(bins)],
            "argmax_offset": list(best_offset) if best_offset else None,
        },
    )


def holder_seminorm(fld: ScalarField2D, alpha: float, pairs: PairSampling | None = None) -> NormReport:
    """Lower bound for ``sup |f(x) - f(y)| / |x - y|^alpha`` over sampled node pairs."""
    return holder_seminorm_array(_values(fld), fld.grid.spacing, alpha, pairs)


def partial_derivatives(fld: ScalarField2D) -> tuple[np.ndarray, np.ndarray]:
    """Second-order centered differences, one-sided on the boundary frame."""
    h = fld.grid.spacing
    d1, d2 = np.gradient(fld.values, h, h, edge_order=2)
    return d1, d2


def holder_norm_C1alpha(fld: VectorField2D, alpha: float, pairs: PairSampling | None = None) -> NormReport:
    """``sum |u_i|_inf + sum |d_j u_i|_inf + sum [d_j u_i]_alpha`` over both components."""
    alpha = _check_alpha(alpha)
    grid = fld.grid
    sup_part, deriv_part, semi_part = 0.0, 0.0, 0.0
    per_partial = []
    for comp in fld.components:
        sup_part += sup_norm(comp)
        for d in partial_derivatives(comp):
            deriv_part += float(np.max(np.abs(d)))
            semi = holder_seminorm_array(d, grid.spacing, alpha, pairs).value
            semi_part += semi
            per_partial.append(semi)
    return NormReport(
        value=sup_part + deriv_part + semi_part,
        method="holder-C1alpha",
        resolution={"L": grid.half_width, "n": grid.n, "spacing": grid.spacing},
        details={
            "alpha": alpha,
            "sup_part": sup_part,
            "derivative_part": deriv_part,
            "seminorm_part": semi_part,
            "partial_seminorms": per_partial,
        },
    )


def holder_norm_1d(values, spacing: float, derivative, alpha: float, pairs: PairSampling | None = None) -> NormReport:
    """``|f|_inf + |f'|_inf + [f']_alpha`` for a profile sampled on a 1D grid.

    ``derivative`` holds samples of ``f'`` (exact or differenced by the caller).
    """
    values = np.asarray(values, dtype=float)
    derivative = np.asarray(derivative, dtype=float)
    semi = holder_seminorm_array(derivative, spacing, alpha, pairs)
    sup_part = float(np.max(np.abs(values)))
    deriv_part = float(np.max(np.abs(derivative)))
    return NormReport(
        value=sup_part + deriv_part + semi.value,
        method="holder-C1alpha-1d",
        resolution={"spacing": spacing, "n": int(values.size)},
        details={"sup_part": sup_part, "derivative_part": deriv_part, "seminorm_part": semi.value},
    )


@dataclass
class ModulusProfile:
    scales: list[float]
    profile: list[float]
    slope: float | None
    vanishing: bool

    def to_dict(self) -> dict:
        return {"scales": self.scales, "profile": self.profile, "slope": self.slope, "vanishing": self.vanishing}


def little_holder_modulus(
    fld: ScalarField2D, alpha: float, h_bins, pairs: PairSampling | None = None, slope_tol: float = 0.05
) -> ModulusProfile:
    """Hölder modulus restricted to separations below each ``h`` in ``h_bins``.

    The field is classified as vanishing when a least-squares fit of
    ``log(profile)`` against ``log(h)`` has slope of at least ``slope_tol``.
    A smooth field gives slope ``1 - alpha``; a genuine ``alpha``-cusp
    gives a flat profile and slope 0.
    """
    alpha = _check_alpha(alpha)
    h_bins = [float(h) for h in h_bins]
    spacing = fld.grid.spacing
    if len(h_bins) < 2 or any(b >= a for a, b in zip(h_bins, h_bins[1:])):
        raise InvalidInputError("h_bins must be strictly decreasing with at least two entries")
    if h_bins[-1] <= 2.0 * spacing:
        raise InvalidInputError(f"smallest h ({h_bins[-1]}) must exceed twice the grid spacing ({spacing})")
    base = pairs or PairSampling()
    sampling = PairSampling(base.resolution, h_bins[0], base.extra_offsets)
    values = _values(fld)
    scanned = [(sep, q) for _b, _o, sep, q in _scan_offsets(values, spacing, alpha, sampling)]
    profile = [max((q for sep, q in scanned if sep < h), default=0.0) for h in h_bins]
    if max(profile) == 0.0:
        return ModulusProfile(h_bins, profile, None, True)
    logs_h = np.log(h_bins)
    logs_p = np.log(np.maximum(profile, np.finfo(float).tiny))
    slope = float(np.polyfit(logs_h, logs_p, 1)[0])
    vanishing = slope >= slope_tol
    return ModulusProfile(h_bins, profile, slope, bool(vanishing))


# ---------------------------------------------------------------------------
# Littlewood-Paley bank and Besov norms


def mother_cutoff(rho):
    """Radial low-pass profile: 1 on ``|xi| <= 1``, 0 on ``|xi| >= 2``."""
    return radial_cutoff(rho, 1.0, 2.0)


def mother_bump(rho):
    """``psi_0(xi) = cutoff(xi) - cutoff(2 xi)``, supported in ``1/2 <= |xi| <= 2``."""
    rho = np.asarray(rho, dtype=float)
    return mother_cutoff(rho) - mother_cutoff(2.0 * rho)


def dyadic_multiplier(rho, l: int):
    """``psi_l(xi) = psi_0(2^-l xi)`` as a function of ``|xi|``."""
    return mother_bump(np.asarray(rho, dtype=float) * 2.0 ** (-l))


def default_band(grid: Grid2D) -> tuple[int, int]:
    """Lowest band touching the first nonzero frequency up to the last band below Nyquist."""
    l_min = int(math.floor(math.log2(grid.frequency_spacing)))
    l_max = int(math.floor(math.log2(grid.nyquist))) - 1
    return l_min, l_max


@dataclass(frozen=True, eq=False)
class DyadicFilterBank:
    grid: Grid2D
    l_min: int
    l_max: int
    mother: str = "psi0(xi) = S(|xi|) - S(2|xi|), S from exp(-1/(1-t^2)) step on [1, 2]"
    _radius: np.ndarray = field(repr=False, default=None)

    @property
    def bands(self) -> range:
        return range(self.l_min, self.l_max + 1)

    def radius(self, real: bool = True) -> np.ndarray:
        """``|xi|`` on the rfft2 layout (``real=True``) or the full fft2 layout."""
        if real:
            return self._radius
        f1, f2 = self.grid.frequencies()
        return np.hypot(f1, f2)

    def multiplier(self, l: int, real: bool = False) -> np.ndarray:
        if l not in self.bands:
            raise InvalidInputError(f"band {l} outside [{self.l_min}, {self.l_max}]")
        return dyadic_multiplier(self.radius(real), l)

    def partition_sum(self, real: bool = False) -> np.ndarray:
        rho = self.radius(real)
        return mother_cutoff(rho * 2.0 ** (-self.l_max)) - mother_cutoff(rho * 2.0 ** (1 - self.l_min))

    def covered_mask(self, real: bool = False) -> np.ndarray:
        rho = self.radius(real)
        return (rho >= 2.0**self.l_min) & (rho <= 2.0 ** (self.l_max - 1))

    def partition_residual(self) -> float:
        """Max of ``|sum_l psi_l - 1|`` over frequencies the bank claims to cover."""
        rho = self.radius(False)
        total = np.zeros_like(rho)
        for l in self.bands:
            total += dyadic_multiplier(rho, l)
        mask = self.covered_mask(False)
        return float(np.max(np.abs(total[mask] - 1.0))) if np.any(mask) else 0.0


def _rfft_radius(grid: Grid2D) -> np.ndarray:
    f1 = np.fft.fftfreq(grid.n, d=grid.spacing)
    f2 = np.fft.rfftfreq(grid.n, d=grid.spacing)
    return np.hypot(f1[:, None], f2[None, :])


def build_filter_bank(grid: Grid2D, l_min: int | None = None, l_max: int | None = None) -> DyadicFilterBank:
    d_min, d_max = default_band(grid)
    l_min = d_min if l_min is None else int(l_min)
    l_max = d_max if l_max is None else int(l_max)
    if l_max < l_min:
        raise InvalidInputError(f"empty band [{l_min}, {l_max}]")
    if 2.0 ** (l_max + 1) > grid.nyquist * (1 + 1e-12):
        raise ResolutionError(
            f"band l_max={l_max} reaches |xi| = {2.0 ** (l_max + 1)} beyond Nyquist {grid.nyquist}"
        )
    return DyadicFilterBank(grid, l_min, l_max, _radius=_rfft_radius(grid))


@dataclass(frozen=True)
class BesovParams:
    s: float
    p: float
    q: float

    def __post_init__(self):
        if not self.s > 0:
            raise InvalidInputError(f"Besov regularity s must be positive, got {self.s}")
        for name in ("p", "q"):
            v = float(getattr(self, name))
            if not v >= 1.0:
                raise InvalidInputError(f"Besov exponent {name} must be >= 1, got {v}")


def _lq_sum(terms, q: float) -> float:
    terms = np.asarray(terms, dtype=float)
    if terms.size == 0:
        return 0.0
    if math.isinf(q):
        return float(np.max(terms))
    peak = float(np.max(terms))
    if peak == 0.0:
        return 0.0
    return peak * float(np.sum((terms / peak) ** q)) ** (1.0 / q)


def littlewood_paley_blocks(fld: ScalarField2D, bank: DyadicFilterBank):
    """Yield ``(l, block)`` with ``block = F^-1[psi_l F f]`` sampled on the grid."""
    if bank.grid != fld.grid:
        raise InvalidInputError("filter bank and field live on different grids")
    spectrum = sfft.rfft2(fld.values)
    rho = bank.radius(True)
    n = fld.grid.n
    for l in bank.bands:
        yield l, sfft.irfft2(spectrum * dyadic_multiplier(rho, l), s=(n, n))


def spectral_mass_outside(fld: ScalarField2D, bank: DyadicFilterBank) -> float:
    """Fraction of the non-constant L^2 spectral mass outside ``[2^l_min, 2^l_max]``."""
    spectrum = sfft.rfft2(fld.values)
    weights = np.full(spectrum.shape, 2.0)
    weights[:, 0] = 1.0
    if fld.grid.n % 2 == 0:
        weights[:, -1] = 1.0
    energy = weights * np.abs(spectrum) ** 2
    total = float(np.sum(energy))
    if total == 0.0:
        return 0.0
    rho = bank.radius(True)
    outside = ((rho < 2.0**bank.l_min) | (rho > 2.0**bank.l_max)) & (rho > 0)
    return float(np.sum(energy[outside])) / total


def besov_norm(fld: ScalarField2D, params: BesovParams, bank: DyadicFilterBank | None = None) -> NormReport:
    """Inhomogeneous ``B^s_{p,q}`` norm: ``|f|_p + l^q_l(2^(s l) |Delta_l f|_p)``."""
    bank = bank or build_filter_bank(fld.grid)
    cell = fld.grid.cell_area
    p, q = float(params.p), float(params.q)
    lp = _lp_array(_values(fld), cell, p)
    blocks = []
    for l, block in littlewood_paley_blocks(fld, bank):
        blocks.append(2.0 ** (params.s * l) * _lp_array(block, cell, p))
    homogeneous = _lq_sum(blocks, q)
    warnings = []
    outside = spectral_mass_outside(fld, bank)
    if outside > 0.01:
        warnings.append(f"{100 * outside:.2f}% of spectral L2 mass lies outside the filter band")
    return NormReport(
        value=lp + homogeneous,
        method="besov-littlewood-paley-fft",
        resolution={"L": fld.grid.half_width, "n": fld.grid.n},
        details={
            "s": params.s,
            "p": p,
            "q": q,
            "band": [bank.l_min, bank.l_max],
            "lp_part": lp,
            "homogeneous_part": homogeneous,
            "weighted_blocks": blocks,
            "mass_outside_band": outside,
        },
        warnings=warnings,
    )


# ---------------------------------------------------------------------------
# Fourier multipliers and Sobolev norms


def apply_multiplier(fld: ScalarField2D, multiplier) -> ScalarField2D:
    """Apply a real, even Fourier multiplier given as a function of the rfft frequency arrays."""
    grid = fld.grid
    f1 = np.fft.fftfreq(grid.n, d=grid.spacing)[:, None]
    f2 = np.fft.rfftfreq(grid.n, d=grid.spacing)[None, :]
    spectrum = sfft.rfft2(fld.values) * multiplier(f1, f2)
    return ScalarField2D(grid, sfft.irfft2(spectrum, s=grid.shape))


def fractional_laplacian(fld: ScalarField2D, s: float) -> ScalarField2D:
    """``D^s f`` with symbol ``|2 pi xi|^s``; ``s = 0`` returns the field unchanged."""
    s = float(s)
    if s < 0:
        raise InvalidInputError(f"order s must be non-negative, got {s}")
    if s == 0.0:
        return fld
    return apply_multiplier(fld, lambda f1, f2: (2.0 * np.pi * np.hypot(f1, f2)) ** s)


def sobolev_norm(fld: ScalarField2D, s: float, p: float) -> NormReport:
    """``|f|_p + |D^s f|_p``."""
    p = _check_p(p)
    if math.isinf(p) or p == 1.0:
        raise InvalidInputError("Sobolev exponent must satisfy 1 < p < inf")
    base = lp_norm(fld, p)
    top = lp_norm(fractional_laplacian(fld, s), p)
    return NormReport(
        value=base + top,
        method="sobolev-fractional-laplacian",
        resolution={"L": fld.grid.half_width, "n": fld.grid.n},
        details={"s": s, "p": p, "lp_part": base, "derivative_part": top},
    )
