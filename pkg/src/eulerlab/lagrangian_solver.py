"""2D incompressible Euler in particle-trajectory form.

Vorticity is carried by particles seeded on rectangular lattices ("blocks").
Each particle moves with the regularized Biot-Savart velocity of all the
others and carries its deformation gradient ``D eta`` through the
variational equation ``d(D eta)/dt = grad u(eta) D eta``. Lattice points
with negligible vorticity stay in the state as passive tracers, which keeps
every block rectangular so the flow map can be interpolated and inverted.
"""

from __future__ import annotations

import csv
import json
import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.interpolate import RectBivariateSpline
from scipy.ndimage import map_coordinates
from scipy.spatial import cKDTree

from ._kernels import blob_velocity, blob_velocity_gradient
from .errors import BlowupError, InvalidInputError, InversionError
from .grid import Grid2D, ScalarField2D, VectorField2D

# weights below this fraction of their block's largest weight are dropped as sources
WEIGHT_FLOOR = 1e-14
ODD_ODD = "odd-odd"
ODD_X2 = "odd-x2"

# Mirror images (sign pattern applied to coordinates) and the weight factor of
# each image for the supported symmetry classes.
_MIRRORS = {
    ODD_ODD: ((1.0, 1.0), (-1.0, 1.0), (1.0, -1.0), (-1.0, -1.0)),
    ODD_X2: ((1.0, 1.0), (1.0, -1.0)),
}


def _image_sign(symmetry: str, mirror) -> float:
    if symmetry == ODD_ODD:
        return mirror[0] * mirror[1]
    return mirror[1]


def kernel_K2(x) -> np.ndarray:
    """Singular 2D Biot-Savart kernel ``(-x2, x1) / (2 pi |x|^2)``."""
    x = np.asarray(x, dtype=float)
    r2 = np.sum(x * x, axis=-1)
    if np.any(r2 == 0.0):
        raise InvalidInputError("K2 is singular at the origin; use the blob-regularized velocity")
    out = np.empty(x.shape)
    out[..., 0] = -x[..., 1] / (2.0 * np.pi * r2)
    out[..., 1] = x[..., 0] / (2.0 * np.pi * r2)
    return out


def kernel_K2_blob(x, delta) -> np.ndarray:
    """Krasny-regularized kernel with ``|x|^2`` replaced by ``|x|^2 + delta^2``."""
    x = np.asarray(x, dtype=float)
    d = np.sum(x * x, axis=-1) + np.asarray(delta, dtype=float) ** 2
    out = np.empty(x.shape)
    out[..., 0] = -x[..., 1] / (2.0 * np.pi * d)
    out[..., 1] = x[..., 0] / (2.0 * np.pi * d)
    return out


@dataclass(frozen=True)
class SeedBlock:
    """A rectangular lattice of seeds: ``center + (i - (m1-1)/2, j - (m2-1)/2) * spacing``."""

    name: str
    center: tuple[float, float]
    spacing: float
    shape: tuple[int, int]
    start: int = 0

    @property
    def size(self) -> int:
        return self.shape[0] * self.shape[1]

    @property
    def stop(self) -> int:
        return self.start + self.size

    def offsets(self, k: int) -> np.ndarray:
        m = self.shape[k]
        return (np.arange(m) - 0.5 * (m - 1)) * self.spacing

    def axis(self, k: int) -> np.ndarray:
        return self.center[k] + self.offsets(k)

    def points(self) -> np.ndarray:
        a1, a2 = np.meshgrid(self.axis(0), self.axis(1), indexing="ij")
        return np.stack([a1.ravel(), a2.ravel()], axis=1)


def square_block(name: str, center, half_width: float, m: int) -> SeedBlock:
    """``m x m`` block whose outermost seeds sit at ``center +- half_width``."""
    if m < 2:
        raise InvalidInputError("a block needs at least 2 seeds per side")
    spacing = 2.0 * half_width / (m - 1)
    return SeedBlock(name, (float(center[0]), float(center[1])), spacing, (m, m))


@dataclass(frozen=True, eq=False)
class VortexDiscretization:
    seeds: np.ndarray  # (P, 2)
    weights: np.ndarray  # (P,) circulation omega0(x_i) * cell area
    delta: np.ndarray  # (P,) blob radius used when the particle acts as a source
    blocks: tuple[SeedBlock, ...]
    # With a symmetry the stored particles represent one fundamental domain
    # (first quadrant for "odd-odd", upper half-plane for "odd-x2") and every
    # source is accompanied by its mirror images carrying sign-flipped weights.
    symmetry: str | None = None

    def __post_init__(self):
        if self.symmetry is not None and self.symmetry not in _MIRRORS:
            raise InvalidInputError(f"unknown symmetry {self.symmetry!r}")
        if np.any(self.delta[self.source_mask] <= 0):
            raise InvalidInputError("blob radius must be positive for every source")
        src = self.seeds[self.source_mask]
        if self.symmetry == ODD_ODD and np.any(src <= 0):
            raise InvalidInputError("odd-odd sources must lie strictly inside the first quadrant")
        if self.symmetry == ODD_X2 and np.any(src[:, 1] <= 0):
            raise InvalidInputError("odd-x2 sources must lie strictly in the upper half-plane")

    @property
    def n_particles(self) -> int:
        return int(self.seeds.shape[0])

    @property
    def source_mask(self) -> np.ndarray:
        return self.weights != 0.0

    @property
    def n_sources(self) -> int:
        return int(np.count_nonzero(self.source_mask))

    @property
    def total_circulation(self) -> float:
        if self.symmetry is not None:
            return 0.0
        return float(np.sum(self.weights))

    def block(self, name: str) -> SeedBlock:
        for b in self.blocks:
            if b.name == name:
                return b
        raise KeyError(name)


def discretize(
    vorticity, blocks, source_blocks=None, delta_factor: float = 2.0, symmetry: str | None = None
) -> VortexDiscretization:
    """Seed ``blocks`` and assign circulations ``omega0(x) h^2``.

    ``vorticity`` maps an ``(P, 2)`` array of points to values. Blocks whose
    name is not in ``source_blocks`` (all blocks when ``None``) carry zero
    weight. The blob radius of each particle is ``delta_factor`` times its
    block spacing.
    """
    laid, pts, wts, dlt = [], [], [], []
    start = 0
    for b in blocks:
        b = replace(b, start=start)
        start = b.stop
        laid.append(b)
        p = b.points()
        pts.append(p)
        if vorticity is not None and (source_blocks is None or b.name in source_blocks):
            w = np.asarray(vorticity(p), dtype=float) * b.spacing**2
        else:
            w = np.zeros(p.shape[0])
        w = np.where(np.abs(w) <= WEIGHT_FLOOR * np.max(np.abs(w), initial=0.0), 0.0, w)
        wts.append(w)
        dlt.append(np.full(p.shape[0], delta_factor * b.spacing))
    return VortexDiscretization(
        seeds=np.concatenate(pts) if pts else np.zeros((0, 2)),
        weights=np.concatenate(wts) if wts else np.zeros(0),
        delta=np.concatenate(dlt) if dlt else np.zeros(0),
        blocks=tuple(laid),
        symmetry=symmetry,
    )


def point_vortices(positions, circulations, delta: float) -> VortexDiscretization:
    """Free-standing particles (no lattice structure)."""
    positions = np.atleast_2d(np.asarray(positions, dtype=float))
    circ = np.asarray(circulations, dtype=float)
    return VortexDiscretization(positions.copy(), circ.copy(), np.full(circ.shape, float(delta)), ())


def merge(*discs: VortexDiscretization) -> VortexDiscretization:
    """Concatenate discretizations, re-basing block offsets."""
    symmetries = {d.symmetry for d in discs}
    if len(symmetries) > 1:
        raise InvalidInputError("cannot merge discretizations with different symmetries")
    blocks, offset = [], 0
    for d in discs:
        for b in d.blocks:
            blocks.append(replace(b, start=b.start + offset))
        offset += d.n_particles
    return VortexDiscretization(
        np.concatenate([d.seeds for d in discs]),
        np.concatenate([d.weights for d in discs]),
        np.concatenate([d.delta for d in discs]),
        tuple(blocks),
        symmetries.pop(),
    )


@dataclass(frozen=True, eq=False)
class VortexState:
    t: float
    positions: np.ndarray  # (P, 2)
    jacobians: np.ndarray  # (P, 2, 2)
    disc: VortexDiscretization

    @classmethod
    def initial(cls, disc: VortexDiscretization) -> VortexState:
        p = disc.n_particles
        return cls(0.0, disc.seeds.copy(), np.broadcast_to(np.eye(2), (p, 2, 2)).copy(), disc)

    def sources(self):
        return _masked(self.disc, self.positions)

    def block_positions(self, name: str) -> np.ndarray:
        b = self.disc.block(name)
        return self.positions[b.start : b.stop].reshape(b.shape + (2,))

    def block_jacobians(self, name: str) -> np.ndarray:
        b = self.disc.block(name)
        return self.jacobians[b.start : b.stop].reshape(b.shape + (2, 2))


def _source_arrays(state_or_disc):
    if isinstance(state_or_disc, VortexState):
        return state_or_disc.sources()
    return _masked(state_or_disc, state_or_disc.seeds)


def _masked(disc: VortexDiscretization, positions):
    mask = disc.source_mask
    src, w, d2 = positions[mask], disc.weights[mask], disc.delta[mask] ** 2
    if disc.symmetry is not None:
        mirrors = _MIRRORS[disc.symmetry]
        src = np.concatenate([src * np.array(m) for m in mirrors])
        w = np.concatenate([w * _image_sign(disc.symmetry, m) for m in mirrors])
        d2 = np.tile(d2, len(mirrors))
    return src, w, d2


def biot_savart_velocity(state_or_disc, queries, delta: float | None = None) -> np.ndarray:
    """Blob-regularized velocity ``sum_i K2_delta(q - eta_i) w_i`` at ``queries``."""
    src, w, d2 = _source_arrays(state_or_disc)
    if delta is not None:
        if delta <= 0:
            raise InvalidInputError("delta must be positive")
        d2 = np.full_like(w, float(delta) ** 2)
    return blob_velocity(np.atleast_2d(np.asarray(queries, dtype=float)), src, w, d2)


def biot_savart_gradient(state_or_disc, queries) -> tuple[np.ndarray, np.ndarray]:
    src, w, d2 = _source_arrays(state_or_disc)
    return blob_velocity_gradient(np.atleast_2d(np.asarray(queries, dtype=float)), src, w, d2)


def _rhs(disc: VortexDiscretization, positions, jacobians):
    src, w, d2 = _masked(disc, positions)
    vel, grad = blob_velocity_gradient(positions, src, w, d2)
    return vel, grad @ jacobians, grad


def step_rk4(state: VortexState, dt: float) -> VortexState:
    """One classical Runge-Kutta step for positions and deformation gradients."""
    if not dt > 0:
        raise InvalidInputError(f"dt must be positive, got {dt}")
    disc, x0, j0 = state.disc, state.positions, state.jacobians
    k1x, k1j, _ = _rhs(disc, x0, j0)
    k2x, k2j, _ = _rhs(disc, x0 + 0.5 * dt * k1x, j0 + 0.5 * dt * k1j)
    k3x, k3j, _ = _rhs(disc, x0 + 0.5 * dt * k2x, j0 + 0.5 * dt * k2j)
    k4x, k4j, _ = _rhs(disc, x0 + dt * k3x, j0 + dt * k3j)
    x1 = x0 + (dt / 6.0) * (k1x + 2.0 * k2x + 2.0 * k3x + k4x)
    j1 = j0 + (dt / 6.0) * (k1j + 2.0 * k2j + 2.0 * k3j + k4j)
    if not (np.all(np.isfinite(x1)) and np.all(np.isfinite(j1))):
        raise BlowupError(f"non-finite particle data at t = {state.t + dt}", last_state=state)
    return VortexState(state.t + dt, x1, j1, disc)


def max_velocity_gradient(state: VortexState) -> float:
    _, _, grad = _rhs(state.disc, state.positions, state.jacobians)
    return float(np.max(np.abs(grad))) if grad.size else 0.0


@dataclass
class Trajectory:
    states: list[VortexState] = field(default_factory=list)
    dts: list[float] = field(default_factory=list)


def integrate(
    state: VortexState,
    t_end: float,
    dt: float,
    checkpoint_every: int = 10,
    cfl: float = 0.1,
    callback=None,
) -> Trajectory:
    """Advance to ``t_end`` with RK4, keeping every ``checkpoint_every``-th state.

    The step is capped so that ``dt * max|grad u| <= cfl``; the cap is
    re-evaluated every 10 steps and the last step lands exactly on ``t_end``.
    """
    traj = Trajectory([state], [])
    step = 0
    cap = math.inf
    while state.t < t_end * (1 - 1e-14):
        if step % 10 == 0:
            g = max_velocity_gradient(state)
            cap = cfl / g if g > 0 else math.inf
        h = min(dt, cap, t_end - state.t)
        state = step_rk4(state, h)
        traj.dts.append(h)
        step += 1
        if step % checkpoint_every == 0 or state.t >= t_end * (1 - 1e-14):
            traj.states.append(state)
            if callback is not None:
                callback(state)
    return traj


def velocity_on_grid(state, grid: Grid2D) -> VectorField2D:
    vel = biot_savart_velocity(state, grid.points())
    return VectorField2D.from_arrays(grid, vel[:, 0].reshape(grid.shape), vel[:, 1].reshape(grid.shape))


def kinetic_energy(state, grid: Grid2D) -> float:
    u = velocity_on_grid(state, grid)
    return float(np.sum(u.first.values**2 + u.second.values**2) * grid.cell_area)


@dataclass
class DeformationReport:
    entrywise: float
    operator: float
    argmax: int

    def to_dict(self) -> dict:
        return {"entrywise": self.entrywise, "operator": self.operator, "argmax": self.argmax}


def max_deformation(state: VortexState, indices=None) -> DeformationReport:
    """Largest ``|D eta|`` entry and operator norm over the particles (or a subset)."""
    jac = state.jacobians if indices is None else state.jacobians[indices]
    entry = np.max(np.abs(jac), axis=(1, 2))
    op = np.linalg.norm(jac, ord=2, axis=(1, 2))
    i = int(np.argmax(entry))
    if indices is not None:
        i = int(np.asarray(indices).ravel()[i]) if not isinstance(indices, slice) else i + (indices.start or 0)
    return DeformationReport(float(np.max(entry)), float(np.max(op)), i)


# --- flow-map interpolation, inversion and composition -------------------------


class BlockMap:
    """Bicubic interpolant of the flow map over one seed block."""

    def __init__(self, state: VortexState, block: str):
        b = state.disc.block(block)
        if b.shape[0] < 4 or b.shape[1] < 4:
            raise InvalidInputError("bicubic interpolation needs at least 4 seeds per side")
        self.block = b
        pos = state.block_positions(block)
        a1, a2 = b.axis(0), b.axis(1)
        self._disp = [RectBivariateSpline(a1, a2, pos[..., k] - (a1[:, None] if k == 0 else a2[None, :])) for k in (0, 1)]
        self.lo = np.array([a1[0], a2[0]])
        self.hi = np.array([a1[-1], a2[-1]])
        self.forward_images = pos.reshape(-1, 2)
        self.seeds = b.points()

    def __call__(self, x) -> np.ndarray:
        x = np.atleast_2d(x)
        return x + np.stack([s.ev(x[:, 0], x[:, 1]) for s in self._disp], axis=1)

    def jacobian(self, x) -> np.ndarray:
        x = np.atleast_2d(x)
        jac = np.empty((x.shape[0], 2, 2))
        for k, s in enumerate(self._disp):
            jac[:, k, 0] = (1.0 if k == 0 else 0.0) + s.ev(x[:, 0], x[:, 1], dx=1)
            jac[:, k, 1] = (1.0 if k == 1 else 0.0) + s.ev(x[:, 0], x[:, 1], dy=1)
        return jac

    def inside(self, x, margin: float = 1e-12) -> np.ndarray:
        x = np.atleast_2d(x)
        return np.all((x >= self.lo - margin) & (x <= self.hi + margin), axis=1)


@dataclass
class InversionResult:
    preimages: np.ndarray  # (M, 2) points x with eta(x) = y
    displacement: np.ndarray  # x - y
    residual: float
    iterations: int


def invert_flow(state: VortexState, targets, block: str, tol: float = 1e-8, max_iter: int = 50) -> InversionResult:
    """Solve ``eta(x) = y`` for each target by Newton's method on the block interpolant.

    Each target is seeded at the seed whose forward image lies nearest to it.
    """
    fmap = BlockMap(state, block)
    y = np.atleast_2d(np.asarray(targets, dtype=float))
    disp0 = fmap.forward_images - fmap.seeds
    if not np.any(disp0):
        x = y.copy()
        return InversionResult(x, np.zeros_like(y), 0.0, 0)
    nearest = cKDTree(fmap.forward_images).query(y)[1]
    x = y - disp0[nearest]
    it = 0
    res = np.linalg.norm(fmap(x) - y, axis=1)
    while it < max_iter and np.max(res) >= tol:
        r = fmap(x) - y
        x = x - np.linalg.solve(fmap.jacobian(x), r[..., None])[..., 0]
        res = np.linalg.norm(fmap(x) - y, axis=1)
        it += 1
    bad = np.flatnonzero(~(res < tol))
    if bad.size:
        raise InversionError(f"Newton inversion failed at {bad.size} targets", failed_indices=bad.tolist())
    # a preimage beyond the block is an extrapolation of the interpolant, not a particle path
    bad = np.flatnonzero(~fmap.inside(x, margin=fmap.block.spacing))
    if bad.size:
        raise InversionError(f"{bad.size} targets have preimages outside block {block!r}", failed_indices=bad.tolist())
    return InversionResult(x, x - y, float(np.max(res)) if res.size else 0.0, it)


def compose_field(psi: ScalarField2D, points) -> np.ndarray:
    """Bicubic (cubic B-spline) interpolation of ``psi`` at ``points``; outside the grid the value is 0."""
    points = np.asarray(points, dtype=float)
    shape = points.shape[:-1]
    pts = points.reshape(-1, 2)
    g = psi.grid
    idx = np.stack([g.index_of(pts[:, 0], 0), g.index_of(pts[:, 1], 1)])
    outside = np.any((idx < 0) | (idx > g.n - 1), axis=0)
    if np.any(outside):
        warnings.warn(f"{int(np.sum(outside))} mapped points fall outside the grid; using 0 there", stacklevel=2)
    vals = map_coordinates(psi.values, idx, order=3, mode="constant", cval=0.0, prefilter=True)
    vals[outside] = 0.0
    return vals.reshape(shape)


def finite_difference_jacobian(state: VortexState, block: str) -> np.ndarray:
    """Centered differences of neighbouring trajectories within a block (interior seeds only)."""
    pos = state.block_positions(block)
    h = state.disc.block(block).spacing
    jac = np.full(pos.shape[:2] + (2, 2), np.nan)
    jac[1:-1, :, :, 0] = (pos[2:] - pos[:-2]) / (2 * h)
    jac[:, 1:-1, :, 1] = (pos[:, 2:] - pos[:, :-2]) / (2 * h)
    return jac


# --- checkpoints -------------------------------------------------------------------
#
# Both layouts start with a '#' line of JSON metadata (time, symmetry, blocks).
# CSV rows then hold x1, x2, eta1, eta2, w, delta, J11, J12, J21, J22 per
# particle; the binary layout stores the same table as little-endian float64.

STATE_COLUMNS = ("x1", "x2", "eta1", "eta2", "w", "delta", "J11", "J12", "J21", "J22")


def _state_table(state: VortexState) -> np.ndarray:
    d = state.disc
    return np.column_stack(
        [d.seeds, state.positions, d.weights, d.delta, state.jacobians.reshape(-1, 4)]
    )


def _state_meta(state: VortexState) -> str:
    blocks = [
        {"name": b.name, "center": list(b.center), "spacing": b.spacing, "shape": list(b.shape), "start": b.start}
        for b in state.disc.blocks
    ]
    meta = {"t": state.t, "symmetry": state.disc.symmetry, "blocks": blocks, "columns": list(STATE_COLUMNS)}
    return "# " + json.dumps(meta, sort_keys=True)


def _state_from(meta: dict, table: np.ndarray) -> VortexState:
    if table.ndim != 2 or table.shape[1] != len(STATE_COLUMNS):
        raise InvalidInputError("checkpoint table has the wrong number of columns")
    blocks = tuple(
        SeedBlock(b["name"], tuple(b["center"]), float(b["spacing"]), tuple(b["shape"]), int(b["start"]))
        for b in meta.get("blocks", [])
    )
    disc = VortexDiscretization(table[:, 0:2].copy(), table[:, 4].copy(), table[:, 5].copy(), blocks, meta.get("symmetry"))
    return VortexState(float(meta["t"]), table[:, 2:4].copy(), table[:, 6:10].reshape(-1, 2, 2).copy(), disc)


def write_state_csv(path, state: VortexState) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(_state_meta(state) + "\n")
        writer = csv.writer(fh)
        writer.writerow(STATE_COLUMNS)
        for row in _state_table(state):
            writer.writerow([repr(float(v)) for v in row])


def read_state_csv(path) -> VortexState:
    with open(path, newline="") as fh:
        first = fh.readline()
        if not first.startswith("#"):
            raise InvalidInputError("checkpoint is missing its metadata line")
        meta = json.loads(first[1:])
        reader = csv.reader(fh)
        next(reader)
        table = np.array([[float(v) for v in row] for row in reader if row], dtype=float)
    return _state_from(meta, table.reshape(-1, len(STATE_COLUMNS)))


def write_state_binary(path, state: VortexState) -> None:
    with open(path, "wb") as fh:
        fh.write((_state_meta(state) + "\n").encode())
        fh.write(np.ascontiguousarray(_state_table(state), dtype="<f8").tobytes())


def read_state_binary(path) -> VortexState:
    with open(path, "rb") as fh:
        raw = fh.read()
    end = raw.index(b"\n")
    meta = json.loads(raw[1:end].decode())
    table = np.frombuffer(raw[end + 1 :], dtype="<f8").reshape(-1, len(STATE_COLUMNS))
    return _state_from(meta, table)


def read_state(path) -> VortexState:
    """Read a checkpoint written by either writer (``.csv`` selects the text layout)."""
    if str(path).endswith(".csv"):
        return read_state_csv(path)
    return read_state_binary(path)
