"""Uniform grids on a truncated square and the fields sampled on them."""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .errors import InvalidInputError


@dataclass(frozen=True)
class Grid2D:
    """Square grid ``center + [-L, L)^2`` with ``n`` nodes per side.

    Node ``(i, j)`` sits at ``center + (-L + i*h, -L + j*h)`` with ``h = 2L/n``.
    Arrays sampled on the grid are indexed ``[i, j]`` (first axis is x1).
    """

    half_width: float
    n: int
    center: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        if not (self.half_width > 0 and np.isfinite(self.half_width)):
            raise InvalidInputError(f"half_width must be positive, got {self.half_width}")
        n = int(self.n)
        if n < 2 or n & (n - 1):
            raise InvalidInputError(f"n must be a power of two >= 2, got {self.n}")
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "center", (float(self.center[0]), float(self.center[1])))

    @property
    def spacing(self) -> float:
        return 2.0 * self.half_width / self.n

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n, self.n)

    @property
    def cell_area(self) -> float:
        return self.spacing**2

    def axis(self, k: int) -> np.ndarray:
        return self.center[k] - self.half_width + self.spacing * np.arange(self.n)

    def coords(self) -> tuple[np.ndarray, np.ndarray]:
        return np.meshgrid(self.axis(0), self.axis(1), indexing="ij")

    def points(self) -> np.ndarray:
        x1, x2 = self.coords()
        return np.stack([x1.ravel(), x2.ravel()], axis=1)

    def frequencies(self) -> tuple[np.ndarray, np.ndarray]:
        """Discrete frequencies (cycles per unit length) matching ``numpy.fft.fft2``."""
        f = np.fft.fftfreq(self.n, d=self.spacing)
        return np.meshgrid(f, f, indexing="ij")

    @property
    def nyquist(self) -> float:
        return 0.5 / self.spacing

    @property
    def frequency_spacing(self) -> float:
        return 1.0 / (2.0 * self.half_width)

    def index_of(self, x: float, axis: int = 0) -> float:
        """Fractional node index of coordinate ``x`` along ``axis``."""
        return (x - self.center[axis] + self.half_width) / self.spacing


def _check_values(values: np.ndarray, grid: Grid2D) -> np.ndarray:
    values = np.asarray(values, dtype=float)
    if values.shape != grid.shape:
        raise InvalidInputError(f"values shape {values.shape} does not match grid {grid.shape}")
    if not np.all(np.isfinite(values)):
        raise InvalidInputError("field contains non-finite values")
    return values


@dataclass(frozen=True, eq=False)
class ScalarField2D:
    grid: Grid2D
    values: np.ndarray

    def __post_init__(self):
        values = _check_values(self.values, self.grid)
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @classmethod
    def from_function(cls, grid: Grid2D, fn) -> ScalarField2D:
        x1, x2 = grid.coords()
        return cls(grid, np.asarray(fn(x1, x2), dtype=float) * np.ones(grid.shape))

    @classmethod
    def zeros(cls, grid: Grid2D) -> ScalarField2D:
        return cls(grid, np.zeros(grid.shape))

    def with_values(self, values) -> ScalarField2D:
        return ScalarField2D(self.grid, values)

    def __mul__(self, c: float) -> ScalarField2D:
        return ScalarField2D(self.grid, self.values * c)

    __rmul__ = __mul__

    def __add__(self, other) -> ScalarField2D:
        if isinstance(other, ScalarField2D):
            if other.grid != self.grid:
                raise InvalidInputError("fields live on different grids")
            return ScalarField2D(self.grid, self.values + other.values)
        return ScalarField2D(self.grid, self.values + float(other))

    def __sub__(self, other) -> ScalarField2D:
        return self + (-1.0) * other if isinstance(other, ScalarField2D) else self + (-float(other))

    def roll(self, shift: tuple[int, int]) -> ScalarField2D:
        return ScalarField2D(self.grid, np.roll(self.values, shift, axis=(0, 1)))


@dataclass(frozen=True, eq=False)
class VectorField2D:
    first: ScalarField2D
    second: ScalarField2D

    def __post_init__(self):
        if self.first.grid != self.second.grid:
            raise InvalidInputError("vector components must share a grid")

    @property
    def grid(self) -> Grid2D:
        return self.first.grid

    @property
    def components(self) -> tuple[ScalarField2D, ScalarField2D]:
        return (self.first, self.second)

    @classmethod
    def from_arrays(cls, grid: Grid2D, u1, u2) -> VectorField2D:
        return cls(ScalarField2D(grid, u1), ScalarField2D(grid, u2))


@dataclass
class NormReport:
    """A measured norm together with how it was measured."""

    value: float
    method: str
    resolution: dict = field(default_factory=dict)
    details: dict = field(default_factory=dict)
    warnings: list[str] = field(default_factory=list)

    def __post_init__(self):
        self.value = float(self.value)
        if not np.isfinite(self.value) or self.value < 0:
            raise InvalidInputError(f"norm value must be finite and non-negative, got {self.value}")

    def __float__(self) -> float:
        return self.value

    def to_dict(self) -> dict:
        return _jsonable(asdict(self))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)

    @classmethod
    def from_json(cls, text: str) -> NormReport:
        data = json.loads(text)
        return cls(**data)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


# --- field I/O -------------------------------------------------------------
#
# CSV layout: a '#' header line with JSON grid metadata, then one value per
# line in node-major order (row i, then column j). The binary layout is the
# same header line followed by little-endian float64 values.


def _header(grid: Grid2D) -> str:
    meta = {"L": grid.half_width, "n": grid.n, "center": list(grid.center)}
    return "# " + json.dumps(meta, sort_keys=True)


def _grid_from_header(line: str) -> Grid2D:
    if not line.startswith("#"):
        raise InvalidInputError("field file is missing its grid header")
    meta = json.loads(line[1:].strip())
    return Grid2D(float(meta["L"]), int(meta["n"]), tuple(meta.get("center", (0.0, 0.0))))


def write_field_csv(path, fld: ScalarField2D) -> None:
    path = Path(path)
    with path.open("w", newline="") as fh:
        fh.write(_header(fld.grid) + "\n")
        writer = csv.writer(fh)
        for v in fld.values.ravel():
            writer.writerow([repr(float(v))])


def read_field_csv(path) -> ScalarField2D:
    path = Path(path)
    with path.open() as fh:
        grid = _grid_from_header(fh.readline())
        values = np.array([float(row[0]) for row in csv.reader(fh) if row], dtype=float)
    if values.size != grid.n**2:
        raise InvalidInputError(f"expected {grid.n ** 2} values, found {values.size}")
    return ScalarField2D(grid, values.reshape(grid.shape))


def write_field_binary(path, fld: ScalarField2D) -> None:
    path = Path(path)
    with path.open("wb") as fh:
        fh.write((_header(fld.grid) + "\n").encode())
        fh.write(np.ascontiguousarray(fld.values, dtype="<f8").tobytes())


def read_field_binary(path) -> ScalarField2D:
    raw = Path(path).read_bytes()
    end = raw.index(b"\n")
    grid = _grid_from_header(raw[:end].decode())
    values = np.frombuffer(raw[end + 1 :], dtype="<f8")
    if values.size != grid.n**2:
        raise InvalidInputError(f"expected {grid.n ** 2} values, found {values.size}")
    return ScalarField2D(grid, values.reshape(grid.shape).copy())


def read_field(path) -> ScalarField2D:
    path = Path(path)
    if path.suffix == ".csv":
        return read_field_csv(path)
    return read_field_binary(path)
