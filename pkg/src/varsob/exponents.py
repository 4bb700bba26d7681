"""Variable exponents sampled at cell midpoints, Sobolev conjugates and the
critical set where q reaches p*."""
from __future__ import annotations

import csv
import re
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import ConfigParseError, GridMismatch, InvalidExponent, SupercriticalExponent
from .grid import Grid, _check_same_grid


@dataclass(frozen=True, eq=False)
class ExponentField:
    grid: Grid
    values: np.ndarray
    declared_bounds: Optional[tuple] = None
    func: Optional[Callable] = field(default=None, repr=False)
    label: str = ""

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.size != self.grid.ncells:
            raise GridMismatch(f"need one exponent per cell ({self.grid.ncells}), got {values.size}")
        values = values.reshape(self.grid.cells)
        if not np.all(np.isfinite(values)):
            raise InvalidExponent("exponents must be finite")
        lo, hi = float(values.min()), float(values.max())
        if lo <= 1.0:
            raise InvalidExponent(f"exponent must exceed 1 everywhere (min {lo})")
        bounds = self.declared_bounds if self.declared_bounds is not None else (lo, hi)
        blo, bhi = float(bounds[0]), float(bounds[1])
        if not (1.0 < blo <= lo and hi <= bhi < np.inf):
            raise InvalidExponent(f"values in [{lo}, {hi}] violate declared bounds ({blo}, {bhi})")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "declared_bounds", (blo, bhi))

    @property
    def lo(self) -> float:
        return float(self.values.min())

    @property
    def hi(self) -> float:
        return float(self.values.max())

    @property
    def is_constant(self) -> bool:
        return self.lo == self.hi

    def at(self, point) -> float:
        """Exponent at an arbitrary point: exact when built from a formula,
        otherwise the value of the containing cell."""
        if self.func is not None:
            return float(np.asarray(self.func(np.atleast_2d(np.asarray(point, dtype=float)))).ravel()[0])
        return float(self.values.ravel()[self.grid.locate(point)])

    def shifted(self, delta: float) -> "ExponentField":
        func = None if self.func is None else (lambda x, f=self.func: f(x) + delta)
        return ExponentField(self.grid, self.values + delta, func=func, label=f"{self.label}{delta:+g}")

    def conjugate(self) -> "ExponentField":
        """Hoelder conjugate p/(p-1)."""
        return ExponentField(self.grid, self.values / (self.values - 1.0), label=f"({self.label})'")


def from_callable(grid: Grid, fn: Callable, label: str = "") -> ExponentField:
    return ExponentField(grid, np.asarray(fn(grid.cell_centers), dtype=float), func=fn, label=label)


def constant(grid: Grid, c: float) -> ExponentField:
    c = float(c)
    return from_callable(grid, lambda x: np.full(len(x), c), f"constant({c:g})")


def affine(grid: Grid, a: float, b: float) -> ExponentField:
    """a + b * x_1."""
    a, b = float(a), float(b)
    return from_callable(grid, lambda x: a + b * x[:, 0], f"affine({a:g}, {b:g})")


def radial(grid: Grid, c: float, s: float, x0) -> ExponentField:
    """c + s * |x - x0|."""
    c, s = float(c), float(s)
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    return from_callable(grid, lambda x: c + s * np.linalg.norm(x - x0, axis=1), f"radial({c:g}, {s:g})")


def _piecewise_fn(default: float, boxes) -> Callable:
    default = float(default)
    boxes = [(tuple((float(lo), float(hi)) for lo, hi in box), float(v)) for box, v in boxes]

    def fn(x):
        out = np.full(len(x), default)
        for box, v in boxes:
            inside = np.ones(len(x), dtype=bool)
            for k, (lo, hi) in enumerate(box):
                inside &= (x[:, k] >= lo) & (x[:, k] < hi)
            out[inside] = v
        return out

    return fn


def piecewise(grid: Grid, default: float, boxes) -> ExponentField:
    """``boxes`` is a list of (((lo, hi), ...), value); later boxes win. Membership is lo <= x < hi."""
    return from_callable(grid, _piecewise_fn(default, boxes), "piecewise")


_SPEC = re.compile(r"^\s*(constant|affine|radial|piecewise)\s*\((.*)\)\s*$")


def _floats(text):
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError as exc:
        raise ConfigParseError(f"bad number in '{text}'") from exc


def spec_callable(grid: Grid, text: str) -> Callable:
    """Parse ``constant(c)``, ``affine(a, b)``, ``radial(c, s, x0...)`` or
    ``piecewise(default; lo:hi [x lo:hi] = value; ...)`` into a function of
    an (n, dim) array of points."""
    m = _SPEC.match(text)
    if not m:
        raise ConfigParseError(f"unknown constructor '{text}'")
    kind, body = m.groups()
    if kind == "piecewise":
        parts = [s.strip() for s in body.split(";")]
        default = _floats(parts[0])
        if len(default) != 1:
            raise ConfigParseError("piecewise needs a single default value first")
        boxes = []
        for part in parts[1:]:
            if "=" not in part:
                raise ConfigParseError(f"piecewise box '{part}' lacks '= value'")
            box_txt, val = part.split("=", 1)
            box = []
            for axis in box_txt.split("x"):
                bounds_ = _floats(axis.replace(":", ","))
                if len(bounds_) != 2:
                    raise ConfigParseError(f"axis range '{axis.strip()}' is not lo:hi")
                box.append(tuple(bounds_))
            if len(box) != grid.dim:
                raise ConfigParseError(f"box '{box_txt.strip()}' has {len(box)} axes, grid has {grid.dim}")
            boxes.append((tuple(box), _floats(val)[0]))
        return _piecewise_fn(default[0], boxes)
    args = _floats(body)
    need = {"constant": 1, "affine": 2, "radial": 2 + grid.dim}[kind]
    if len(args) != need:
        raise ConfigParseError(f"{kind} expects {need} arguments, got {len(args)}")
    if kind == "constant":
        c = args[0]
        return lambda x: np.full(len(x), c)
    if kind == "affine":
        a, b = args
        return lambda x: a + b * x[:, 0]
    c, s, x0 = args[0], args[1], np.asarray(args[2:])
    return lambda x: c + s * np.linalg.norm(x - x0, axis=1)


def field_from_spec(grid: Grid, text: str) -> ExponentField:
    return from_callable(grid, spec_callable(grid, text), text.strip())


def bounds(f: ExponentField) -> tuple:
    return f.lo, f.hi


def sobolev_conjugate(f: ExponentField, dim: int) -> np.ndarray:
    """n p / (n - p) per cell, ``np.inf`` where p >= n."""
    p = f.values
    out = np.full(p.shape, np.inf)
    sub = p < dim
    out[sub] = dim * p[sub] / (dim - p[sub])
    return out


def log_hoelder_pair(px: float, py: float, dist: float) -> float:
    return abs((px - py) * np.log(dist))


def log_hoelder_modulus(f: ExponentField, chunk: int = 256) -> float:
    """max |(p(x) - p(y)) log|x - y|| over distinct cell centers with |x - y| < 1/2."""
    x = f.grid.cell_centers
    p = f.values.ravel()
    best = 0.0
    for start in range(0, len(x), chunk):
        xs, ps = x[start:start + chunk], p[start:start + chunk]
        d = np.linalg.norm(xs[:, None, :] - x[None, :, :], axis=-1)
        ok = (d > 0) & (d < 0.5)
        if not ok.any():
            continue
        with np.errstate(divide="ignore"):
            vals = np.abs((ps[:, None] - p[None, :]) * np.log(np.where(ok, d, 1.0)))
        best = max(best, float(vals[ok].max()))
    return best


@dataclass(frozen=True, eq=False)
class CriticalSetReport:
    cells: list
    gap: np.ndarray
    tolerance: float

    def __contains__(self, cell) -> bool:
        return int(cell) in self._set

    @property
    def _set(self):
        return set(self.cells)

    @property
    def empty(self) -> bool:
        return not self.cells


def critical_set(p: ExponentField, q: ExponentField, dim: int, tol: float) -> CriticalSetReport:
    _check_same_grid(p.grid, q.grid)
    if tol <= 0:
        raise InvalidExponent("tolerance must be positive")
    gap = (sobolev_conjugate(p, dim) - q.values).ravel()
    bad = np.flatnonzero(gap < -tol)
    if bad.size:
        raise SupercriticalExponent(int(bad[0]), float(gap[bad[0]]))
    return CriticalSetReport([int(i) for i in np.flatnonzero(gap <= tol)], gap, float(tol))


def write_csv(path, f: ExponentField):
    grid = f.grid
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["cell_index"] + ["x", "y"][: grid.dim] + ["value"])
        for i, (c, v) in enumerate(zip(grid.cell_centers, f.values.ravel())):
            w.writerow([i] + [repr(float(t)) for t in c] + [repr(float(v))])


def read_csv(path, grid: Grid) -> ExponentField:
    values = np.empty(grid.ncells)
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        next(r)
        for row in r:
            values[int(row[0])] = float(row[-1])
    return ExponentField(grid, values)
