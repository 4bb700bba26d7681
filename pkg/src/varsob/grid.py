"""Tensor grids on intervals and rectangles, node functions with zero trace,
cell data, discrete measures and the finite-difference operators tying them
together.

Functions live on interior nodes (boundary nodes are structurally zero).
Gradients, exponents and all quadrature live on cells. In 2D every cell is
split into its two Friedrichs-Keller triangles; the cell gradient is the mean
of the two triangle gradients (equal to the bilinear-cell average), while
energies integrate over both triangles so that no checkerboard mode has zero
energy.
"""
from __future__ import annotations

import csv
import functools
from dataclasses import dataclass
from typing import Callable, NamedTuple, Sequence

import numpy as np
import scipy.sparse as sp

from .errors import BallTooSmall, GridMismatch, InvalidParameters


@dataclass(frozen=True)
class Grid:
    extents: tuple
    cells: tuple

    def __post_init__(self):
        extents = tuple((float(lo), float(hi)) for lo, hi in self.extents)
        cells = tuple(int(c) for c in self.cells)
        if len(cells) not in (1, 2) or len(extents) != len(cells):
            raise InvalidParameters("grid must be 1D or 2D with one extent per axis")
        if any(c < 2 for c in cells):
            raise InvalidParameters("need at least 2 cells per axis")
        if any(hi <= lo for lo, hi in extents):
            raise InvalidParameters("extents must satisfy lo < hi")
        object.__setattr__(self, "extents", extents)
        object.__setattr__(self, "cells", cells)

    @classmethod
    def interval(cls, cells: int, lo: float = 0.0, hi: float = 1.0) -> "Grid":
        return cls(((lo, hi),), (cells,))

    @classmethod
    def box(cls, cells: Sequence[int], extents=((0.0, 1.0), (0.0, 1.0))) -> "Grid":
        return cls(tuple(extents), tuple(cells))

    @property
    def dim(self) -> int:
        return len(self.cells)

    @property
    def spacing(self) -> tuple:
        return tuple((hi - lo) / c for (lo, hi), c in zip(self.extents, self.cells))

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    @property
    def volume(self) -> float:
        return float(np.prod([hi - lo for lo, hi in self.extents]))

    @property
    def diameter(self) -> float:
        return float(np.sqrt(sum((hi - lo) ** 2 for lo, hi in self.extents)))

    @property
    def ncells(self) -> int:
        return int(np.prod(self.cells))

    @property
    def interior_shape(self) -> tuple:
        return tuple(c - 1 for c in self.cells)

    @property
    def n_interior(self) -> int:
        return int(np.prod(self.interior_shape))

    @functools.cached_property
    def axis_centers(self) -> tuple:
        return tuple(lo + (np.arange(c) + 0.5) * h
                     for (lo, hi), c, h in zip(self.extents, self.cells, self.spacing))

    @functools.cached_property
    def axis_nodes(self) -> tuple:
        return tuple(lo + np.arange(c + 1) * h
                     for (lo, hi), c, h in zip(self.extents, self.cells, self.spacing))

    @functools.cached_property
    def cell_centers(self) -> np.ndarray:
        """Cell midpoints, shape (ncells, dim), C order."""
        mesh = np.meshgrid(*self.axis_centers, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)

    @functools.cached_property
    def interior_nodes(self) -> np.ndarray:
        mesh = np.meshgrid(*[a[1:-1] for a in self.axis_nodes], indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)

    def cell_index(self, flat: int) -> tuple:
        return tuple(int(i) for i in np.unravel_index(flat, self.cells))

    def locate(self, point) -> int:
        """Flat index of the cell containing ``point`` (clamped to the grid)."""
        point = np.atleast_1d(np.asarray(point, dtype=float))
        idx = []
        for x, (lo, hi), c, h in zip(point, self.extents, self.cells, self.spacing):
            idx.append(int(np.clip(np.floor((x - lo) / h), 0, c - 1)))
        return int(np.ravel_multi_index(tuple(idx), self.cells))

    def contains(self, point) -> bool:
        point = np.atleast_1d(np.asarray(point, dtype=float))
        return all(lo <= x <= hi for x, (lo, hi) in zip(point, self.extents))

    def boundary_distance(self, point) -> float:
        point = np.atleast_1d(np.asarray(point, dtype=float))
        return float(min(min(x - lo, hi - x) for x, (lo, hi) in zip(point, self.extents)))


def _check_same_grid(a: Grid, b: Grid):
    if a is not b and a != b:
        raise GridMismatch(f"grids differ: {a} vs {b}")


@dataclass(frozen=True, eq=False)
class GridFunction:
    """Values on interior nodes; the boundary trace is identically zero."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.size == self.grid.n_interior:
            values = values.reshape(self.grid.interior_shape)
        if values.shape != self.grid.interior_shape:
            raise GridMismatch(f"expected interior shape {self.grid.interior_shape}, got {values.shape}")
        object.__setattr__(self, "values", values)

    @classmethod
    def zeros(cls, grid: Grid) -> "GridFunction":
        return cls(grid, np.zeros(grid.interior_shape))

    @classmethod
    def from_callable(cls, grid: Grid, fn: Callable) -> "GridFunction":
        """Interpolate ``fn`` (taking an (n, dim) array of points) at interior nodes."""
        return cls(grid, np.asarray(fn(grid.interior_nodes), dtype=float))

    @property
    def flat(self) -> np.ndarray:
        return self.values.ravel()

    def full(self) -> np.ndarray:
        """Node values including the zero boundary, shape cells + 1 per axis."""
        return np.pad(self.values, 1)

    def at_cells(self) -> "CellField":
        """Midpoint values (mean of the cell's corner nodes)."""
        ops = operators(self.grid)
        return CellField(self.grid, (ops.avg @ self.flat).reshape(self.grid.cells))

    def _combine(self, other, op):
        if isinstance(other, GridFunction):
            _check_same_grid(self.grid, other.grid)
            return GridFunction(self.grid, op(self.values, other.values))
        return GridFunction(self.grid, op(self.values, float(other)))

    def __add__(self, other):
        return self._combine(other, np.add)

    def __sub__(self, other):
        return self._combine(other, np.subtract)

    def __mul__(self, c):
        return GridFunction(self.grid, self.values * float(c))

    __rmul__ = __mul__

    def __truediv__(self, c):
        return GridFunction(self.grid, self.values / float(c))

    def __neg__(self):
        return GridFunction(self.grid, -self.values)


@dataclass(frozen=True, eq=False)
class CellField:
    """Cellwise-constant data. A trailing axis holds equal-weight sub-cell samples."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.shape[: self.grid.dim] != self.grid.cells or values.ndim > self.grid.dim + 1:
            raise GridMismatch(f"cell data shape {values.shape} does not fit grid cells {self.grid.cells}")
        object.__setattr__(self, "values", values)

    @classmethod
    def constant(cls, grid: Grid, c: float) -> "CellField":
        return cls(grid, np.full(grid.cells, float(c)))

    @classmethod
    def from_callable(cls, grid: Grid, fn: Callable) -> "CellField":
        return cls(grid, np.asarray(fn(grid.cell_centers), dtype=float).reshape(grid.cells))

    @property
    def subsamples(self) -> int:
        return 1 if self.values.ndim == self.grid.dim else self.values.shape[-1]

    def weights(self) -> np.ndarray:
        return np.full(self.values.shape, self.grid.cell_volume / self.subsamples)

    def __mul__(self, c):
        return CellField(self.grid, self.values * float(c))

    __rmul__ = __mul__


@dataclass(frozen=True, eq=False)
class DiscreteMeasure:
    grid: Grid
    masses: np.ndarray

    def __post_init__(self):
        masses = np.asarray(self.masses, dtype=float).reshape(self.grid.cells)
        if np.any(masses < 0):
            raise InvalidParameters("measure masses must be nonnegative")
        object.__setattr__(self, "masses", masses)

    @property
    def total_mass(self) -> float:
        return float(self.masses.sum())

    def pair(self, psi) -> float:
        """Integrate a test function (callable on points or per-cell array) against the measure."""
        if callable(psi):
            psi = psi(self.grid.cell_centers)
        return float(np.dot(np.asarray(psi, dtype=float).ravel(), self.masses.ravel()))


class Operators(NamedTuple):
    avg: sp.csr_matrix    # interior nodes -> cell midpoints
    grad: tuple           # per axis: interior nodes -> (cell, sub) derivative
    nsub: int


@functools.lru_cache(maxsize=32)
def operators(grid: Grid) -> Operators:
    node_shape = tuple(c + 1 for c in grid.cells)
    full_ids = np.arange(int(np.prod(node_shape))).reshape(node_shape)
    interior = np.full(node_shape, -1)
    interior[tuple(slice(1, -1) for _ in grid.cells)] = np.arange(grid.n_interior).reshape(grid.interior_shape)
    h = grid.spacing

    def assemble(rows_cols_vals, nrows):
        rows, cols, vals = (np.concatenate(x) for x in zip(*rows_cols_vals))
        cols = interior.ravel()[cols]
        keep = cols >= 0
        return sp.csr_matrix((vals[keep], (rows[keep], cols[keep])), shape=(nrows, grid.n_interior))

    if grid.dim == 1:
        n = grid.cells[0]
        rows = np.arange(n)
        left, right = full_ids[:-1], full_ids[1:]
        avg = assemble([(rows, left, np.full(n, 0.5)), (rows, right, np.full(n, 0.5))], n)
        dx = assemble([(rows, left, np.full(n, -1 / h[0])), (rows, right, np.full(n, 1 / h[0]))], n)
        return Operators(avg, (dx,), 1)

    nx, ny = grid.cells
    ncell = nx * ny
    cell = np.arange(ncell)
    c00 = full_ids[:-1, :-1].ravel()
    c10 = full_ids[1:, :-1].ravel()
    c01 = full_ids[:-1, 1:].ravel()
    c11 = full_ids[1:, 1:].ravel()
    quarter = np.full(ncell, 0.25)
    avg = assemble([(cell, c, quarter) for c in (c00, c10, c01, c11)], ncell)
    # sub 0: lower-left triangle (c00, c10, c01); sub 1: upper-right (c11, c01, c10)
    r0, r1 = 2 * cell, 2 * cell + 1
    ix, iy = np.full(ncell, 1 / h[0]), np.full(ncell, 1 / h[1])
    dx = assemble([(r0, c10, ix), (r0, c00, -ix), (r1, c11, ix), (r1, c01, -ix)], 2 * ncell)
    dy = assemble([(r0, c01, iy), (r0, c00, -iy), (r1, c11, iy), (r1, c10, -iy)], 2 * ncell)
    return Operators(avg, (dx, dy), 2)


def subcell_gradient(u: GridFunction) -> np.ndarray:
    """Gradient samples of shape cells + (nsub, dim)."""
    ops = operators(u.grid)
    comps = [(d @ u.flat).reshape(u.grid.cells + (ops.nsub,)) for d in ops.grad]
    return np.stack(comps, axis=-1)


def gradient(u: GridFunction) -> np.ndarray:
    """Cell gradient, shape cells + (dim,)."""
    return subcell_gradient(u).mean(axis=-2)


def gradient_magnitude(u: GridFunction) -> CellField:
    """|grad u| as cell data; 2D keeps both triangle samples on a trailing axis."""
    mag = np.linalg.norm(subcell_gradient(u), axis=-1)
    if mag.shape[-1] == 1:
        mag = mag[..., 0]
    return CellField(u.grid, mag)


def energy_measure(u: GridFunction, p) -> DiscreteMeasure:
    """Cell masses of |grad u|^p(x) dx."""
    _check_same_grid(u.grid, p.grid)
    mag = gradient_magnitude(u)
    exps = p.values.reshape(u.grid.cells)
    if mag.values.ndim > u.grid.dim:
        exps = exps[..., None]
    dens = np.power(mag.values, exps) * mag.weights()
    if dens.ndim > u.grid.dim:
        dens = dens.sum(axis=-1)
    return DiscreteMeasure(u.grid, dens)


def _center_distances(grid: Grid, center) -> np.ndarray:
    center = np.atleast_1d(np.asarray(center, dtype=float))
    return np.linalg.norm(grid.cell_centers - center, axis=1).reshape(grid.cells)


def mass_in_ball(m: DiscreteMeasure, center, radius: float) -> float:
    if radius <= 0:
        raise InvalidParameters("radius must be positive")
    inside = _center_distances(m.grid, center) <= radius
    return float(m.masses[inside].sum())


def restrict_to_ball(grid: Grid, center, radius: float) -> np.ndarray:
    """Boolean cell mask of B_radius(center) intersected with the grid."""
    if radius < 2 * max(grid.spacing) * (1 - 1e-12):
        raise BallTooSmall(f"radius {radius} is below two grid spacings ({2 * max(grid.spacing)})")
    return _center_distances(grid, center) <= radius


def free_nodes(grid: Grid, mask: np.ndarray | None) -> np.ndarray:
    """Interior nodes all of whose adjacent cells are masked."""
    if mask is None:
        return np.ones(grid.interior_shape, dtype=bool)
    mask = np.asarray(mask, dtype=bool).reshape(grid.cells)
    if grid.dim == 1:
        return mask[:-1] & mask[1:]
    return mask[:-1, :-1] & mask[1:, :-1] & mask[:-1, 1:] & mask[1:, 1:]


def support_cells(u: GridFunction) -> np.ndarray:
    """Cells touching a nonzero node value."""
    nz = (u.full() != 0).astype(int)
    if u.grid.dim == 1:
        return (nz[:-1] + nz[1:]) > 0
    return (nz[:-1, :-1] + nz[1:, :-1] + nz[:-1, 1:] + nz[1:, 1:]) > 0


# --- CSV serialization ---------------------------------------------------------

_AXES = ("i", "j")
_COORDS = ("x", "y")


def write_grid_function(path, u: GridFunction):
    """One row per interior node: full-grid node multi-index then value."""
    grid = u.grid
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(list(_AXES[: grid.dim]) + ["value"])
        for idx in np.ndindex(*grid.interior_shape):
            w.writerow([i + 1 for i in idx] + [repr(float(u.values[idx]))])


def read_grid_function(path, grid: Grid) -> GridFunction:
    values = np.zeros(grid.interior_shape)
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        header = next(r)
        if header[: grid.dim] != list(_AXES[: grid.dim]):
            raise GridMismatch(f"unexpected header {header}")
        for row in r:
            idx = tuple(int(v) - 1 for v in row[: grid.dim])
            values[idx] = float(row[grid.dim])
    return GridFunction(grid, values)


def write_measure(path, m: DiscreteMeasure):
    grid = m.grid
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(list(_AXES[: grid.dim]) + list(_COORDS[: grid.dim]) + ["mass"])
        for flat, center in enumerate(grid.cell_centers):
            idx = grid.cell_index(flat)
            w.writerow(list(idx) + [repr(float(c)) for c in center] + [repr(float(m.masses[idx]))])
