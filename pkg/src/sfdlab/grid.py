"""Uniform cell-centred grids, grid fields and the integral functionals on them.

Every integral is a midpoint sum over cell centres. Nodes sit at
``x_i = -L + (i + 1/2) h`` so no node ever coincides with the origin of a
singular kernel centred on another node.
"""

from __future__ import annotations

import csv
import enum
import hashlib
import math
import io
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import (
    InvalidInputError,
    InvalidParameterError,
    UnsupportedDimensionError,
)

__all__ = [
    "Topology",
    "Exterior",
    "UniformGrid",
    "Field",
    "BallSpec",
    "Order",
    "lp_norm",
    "integral",
    "ball_mass",
    "rearrange_values",
    "decreasing_rearrangement",
    "concentration_compare",
    "field_to_csv",
    "field_from_csv",
]


class Topology(enum.Enum):
    TRUNCATED = "truncated"
    PERIODIC = "periodic"


class Exterior(enum.Enum):
    ZERO = "zero"
    PERIODIC = "periodic"
    # 1D only: beyond each end the field continues as edge * (x_edge / |y|)^p,
    # p = Field.tail_exponent (p = 0 holds the edge value)
    POWER_TAIL = "power_tail"


class Order(enum.Enum):
    EQUAL = "equal"
    LESS = "less"
    GREATER = "greater"
    INCOMPARABLE = "incomparable"


@dataclass(frozen=True)
class UniformGrid:
    """The box ``[-L, L]^N`` split into ``M`` cells per axis."""

    dimension: int
    half_width: float
    points_per_axis: int
    topology: Topology = Topology.TRUNCATED

    def __post_init__(self):
        if int(self.dimension) != self.dimension or self.dimension < 1:
            raise InvalidParameterError(f"dimension must be a positive integer, got {self.dimension}")
        if not (self.half_width > 0 and np.isfinite(self.half_width)):
            raise InvalidParameterError(f"half_width must be positive, got {self.half_width}")
        if int(self.points_per_axis) != self.points_per_axis or self.points_per_axis < 8:
            raise InvalidParameterError(f"points_per_axis must be an integer >= 8, got {self.points_per_axis}")
        if not isinstance(self.topology, Topology):
            object.__setattr__(self, "topology", Topology(self.topology))
        object.__setattr__(self, "dimension", int(self.dimension))
        object.__setattr__(self, "points_per_axis", int(self.points_per_axis))
        object.__setattr__(self, "half_width", float(self.half_width))

    @property
    def spacing(self) -> float:
        return 2.0 * self.half_width / self.points_per_axis

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.points_per_axis,) * self.dimension

    @property
    def size(self) -> int:
        return self.points_per_axis**self.dimension

    @property
    def cell_volume(self) -> float:
        return self.spacing**self.dimension

    @property
    def periodic(self) -> bool:
        return self.topology is Topology.PERIODIC

    def axis(self) -> np.ndarray:
        """Cell-centre coordinates along one axis."""
        i = np.arange(self.points_per_axis, dtype=float)
        return -self.half_width + (i + 0.5) * self.spacing

    def coordinates(self) -> list[np.ndarray]:
        """Coordinate arrays broadcast to ``shape`` (``ij`` indexing)."""
        ax = self.axis()
        return list(np.meshgrid(*([ax] * self.dimension), indexing="ij"))

    def radius(self) -> np.ndarray:
        return np.sqrt(sum(c * c for c in self.coordinates()))

    def default_exterior(self) -> Exterior:
        return Exterior.PERIODIC if self.periodic else Exterior.ZERO

    def with_half_width(self, half_width: float, keep_spacing: bool = True) -> "UniformGrid":
        """A grid on a different box; by default with the same spacing."""
        if keep_spacing:
            m = int(round(2.0 * half_width / self.spacing))
            half_width = m * self.spacing / 2.0
        else:
            m = self.points_per_axis
        return UniformGrid(self.dimension, half_width, m, self.topology)

    def checksum(self) -> str:
        key = f"{self.dimension}|{self.half_width!r}|{self.points_per_axis}|{self.topology.value}"
        return hashlib.sha256(key.encode()).hexdigest()[:16]

    def field(self, values, exterior: Exterior | None = None, floor: float = 0.0, tail_exponent: float = 0.0) -> "Field":
        return Field(self, values, exterior, floor, tail_exponent)

    def sample(self, fn: Callable, exterior: Exterior | None = None, floor: float = 0.0, tail_exponent: float = 0.0) -> "Field":
        """Evaluate ``fn(*coords)`` at the nodes."""
        return Field(self, np.asarray(fn(*self.coordinates()), dtype=float), exterior, floor, tail_exponent)

    def zeros(self) -> "Field":
        return Field(self, np.zeros(self.shape))


@dataclass(frozen=True, eq=False)
class Field:
    grid: UniformGrid
    values: np.ndarray
    exterior: Exterior | None = None
    floor: float = 0.0
    tail_exponent: float = 0.0

    def __post_init__(self):
        vals = np.array(self.values, dtype=float)
        if vals.size != self.grid.size:
            raise InvalidInputError(f"field has {vals.size} values, grid needs {self.grid.size}")
        vals = vals.reshape(self.grid.shape)
        if not np.all(np.isfinite(vals)):
            raise InvalidInputError("field values must be finite")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)
        ext = self.exterior
        if ext is None:
            ext = self.grid.default_exterior()
        elif not isinstance(ext, Exterior):
            ext = Exterior(ext)
        if (ext is Exterior.PERIODIC) != self.grid.periodic:
            raise InvalidInputError(f"exterior {ext.value} inconsistent with {self.grid.topology.value} grid")
        object.__setattr__(self, "exterior", ext)
        if self.floor < 0:
            raise InvalidParameterError("floor must be nonnegative")
        if not self.tail_exponent >= 0:
            raise InvalidParameterError("tail exponent must be nonnegative")
        if ext is Exterior.POWER_TAIL and self.grid.dimension != 1:
            raise UnsupportedDimensionError("power-tail exterior is implemented for N = 1 only")

    @property
    def flat(self) -> np.ndarray:
        return self.values.reshape(-1)

    def with_values(self, values, floor: float | None = None) -> "Field":
        return Field(self.grid, values, self.exterior, self.floor if floor is None else floor, self.tail_exponent)

    def shifted(self) -> np.ndarray:
        """``values + floor``: the u-level of a field stored in v-form."""
        return self.values + self.floor

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.values, dtype=dtype)


@dataclass(frozen=True)
class BallSpec:
    center: tuple[float, ...]
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(float(c) for c in np.atleast_1d(self.center)))
        if not self.radius > 0:
            raise InvalidParameterError(f"ball radius must be positive, got {self.radius}")

    def check_inside(self, grid: UniformGrid) -> None:
        if len(self.center) != grid.dimension:
            raise InvalidParameterError("ball centre dimension does not match the grid")
        for c in self.center:
            if abs(c) + self.radius > grid.half_width * (1 + 1e-12):
                raise InvalidParameterError(f"ball (centre {self.center}, radius {self.radius}) leaves the box")

    def mask(self, grid: UniformGrid) -> np.ndarray:
        coords = grid.coordinates()
        r2 = sum((x - c) ** 2 for x, c in zip(coords, self.center))
        return r2 <= self.radius**2 * (1 + 1e-12)


def integral(f: Field) -> float:
    """Midpoint-rule integral of the stored values over the box."""
    return float(np.sum(f.values) * f.grid.cell_volume)


def lp_norm(f: Field, p: float) -> float:
    if p < 1:
        raise InvalidParameterError(f"p must be >= 1, got {p}")
    a = np.abs(f.values)
    if np.isinf(p):
        return float(a.max(initial=0.0))
    # fsum is correctly rounded, so the norm does not depend on the node order
    if p == 1:
        return float(math.fsum(a.ravel()) * f.grid.cell_volume)
    scale = a.max(initial=0.0)
    if scale == 0.0:
        return 0.0
    return float(scale * (math.fsum(((a / scale) ** p).ravel()) * f.grid.cell_volume) ** (1.0 / p))


def ball_mass(f: Field, b: BallSpec) -> float:
    b.check_inside(f.grid)
    return float(np.sum(np.abs(f.values)[b.mask(f.grid)]) * f.grid.cell_volume)


def _node_order(x: np.ndarray) -> np.ndarray:
    # farthest from the origin first; at equal distance the more negative node first
    return np.lexsort((x, -np.abs(x)))


def rearrange_values(values: Sequence[float], x: Sequence[float] | None = None) -> np.ndarray:
    """Symmetric decreasing rearrangement of values sampled at symmetric nodes ``x``.

    The k-th smallest value goes to the k-th node in the order (farthest from
    0 first, more negative first), so the earlier of two tied candidates lands
    on the more negative node. Works for odd counts (node at 0) as well.
    """
    vals = np.asarray(values, dtype=float)
    if x is None:
        n = vals.size
        x = np.arange(n) - (n - 1) / 2.0
    x = np.asarray(x, dtype=float)
    out = np.empty_like(vals)
    out[_node_order(x)] = np.sort(vals, kind="stable")
    return out


def decreasing_rearrangement(f: Field) -> Field:
    if f.grid.dimension != 1:
        raise UnsupportedDimensionError("rearrangement is implemented for N = 1 only")
    if np.any(f.values < 0):
        raise InvalidInputError("rearrangement requires a nonnegative field")
    return f.with_values(rearrange_values(f.values, f.grid.axis()))


def _cumulative_ball_masses(f: Field) -> np.ndarray:
    x = f.grid.axis()
    h = f.grid.spacing
    radii = (np.arange((f.grid.points_per_axis + 1) // 2) + 0.5) * h
    counts = np.searchsorted(np.sort(np.abs(x)), radii * (1 + 1e-12), side="right")
    csum = np.concatenate([[0.0], np.cumsum(np.sort(f.values)[::-1])])
    return csum[counts] * h


def concentration_compare(u: Field, v: Field) -> Order:
    """Compare ``u`` and ``v`` in the concentration order of their rearrangements."""
    if u.grid != v.grid:
        raise InvalidInputError("fields live on different grids")
    if u.grid.dimension != 1:
        raise UnsupportedDimensionError("concentration comparison is implemented for N = 1 only")
    if np.any(u.values < 0) or np.any(v.values < 0):
        raise InvalidInputError("concentration comparison requires nonnegative fields")
    cu = _cumulative_ball_masses(u)
    cv = _cumulative_ball_masses(v)
    tol = 1e-12 * max(cu[-1], cv[-1])
    less = bool(np.all(cu <= cv + tol))
    greater = bool(np.all(cu >= cv - tol))
    if less and greater:
        return Order.EQUAL
    if less:
        return Order.LESS
    if greater:
        return Order.GREATER
    return Order.INCOMPARABLE


def field_to_csv(f: Field) -> str:
    """Serialise as ``x0[,x1,...],value`` rows in lexicographic node order."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([f"x{k}" for k in range(f.grid.dimension)] + ["value"])
    coords = [c.reshape(-1) for c in f.grid.coordinates()]
    for row in zip(*coords, f.flat):
        w.writerow([format(v, ".17g") for v in row])
    return buf.getvalue()


def field_from_csv(text: str, grid: UniformGrid, exterior: Exterior | None = None) -> Field:
    rows = list(csv.reader(io.StringIO(text)))
    header, body = rows[0], rows[1:]
    if header[-1] != "value" or len(header) != grid.dimension + 1:
        raise InvalidInputError(f"unexpected CSV header {header}")
    vals = np.array([float(r[-1]) for r in body])
    return Field(grid, vals, exterior)
