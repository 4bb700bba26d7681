"""Epsilon sweeps, localized constants, bubbles and the compact/concentrating
dichotomy for extremals of the subcritical problems."""
from __future__ import annotations

import csv
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import brentq
from scipy.spatial import cKDTree

from .errors import (BubbleTouchesBoundary, InvalidParameters, MassBudgetExceeded,
                     MissingLocalizedConstant, NonConvergence, OverlappingSupports,
                     TargetMassInfeasible, TooFewRecords, VarsobError)
from .exponents import CriticalSetReport, ExponentField, critical_set, sobolev_conjugate
from .grid import (DiscreteMeasure, GridFunction, energy_measure, mass_in_ball,
                   restrict_to_ball, support_cells)
from .norms import modular
from .solver import ExtremalProblem, ExtremalRecord, SolverOptions, quotient_constant, solve

CONCENTRATION_THRESHOLD = 0.9
COMPACT_THRESHOLD = 0.05
ATOM_THRESHOLD = 0.25
SUFFICIENT_MARGIN = 0.02
INCLUSION_SLACK = 5e-3


# --- extrapolation ------------------------------------------------------------

def extrapolate_limit(xs: Sequence[float], values: Sequence[float]) -> float:
    """Limit as x -> 0 of values ~ a + b x^c, fitted through the last three points.

    The exponent c comes from the ratio of successive differences; the last
    value is returned when fewer than three points are given, when the last x
    is already 0, or when the differences do not fit the model.
    """
    xs = [float(x) for x in xs]
    values = [float(v) for v in values]
    if not values:
        raise InvalidParameters("nothing to extrapolate")
    if len(values) < 3 or xs[-1] == 0.0:
        return values[-1]
    (x1, x2, x3), (f1, f2, f3) = xs[-3:], values[-3:]
    d1, d2 = f1 - f2, f2 - f3
    if d1 == 0 or d2 == 0 or np.sign(d1) != np.sign(d2) or abs(d2) >= abs(d1):
        return values[-1]
    target = d1 / d2

    def mismatch(c):
        return (x1 ** c - x2 ** c) / (x2 ** c - x3 ** c) - target

    lo, hi = 0.05, 10.0
    if np.sign(mismatch(lo)) == np.sign(mismatch(hi)):
        return values[-1]
    c = brentq(mismatch, lo, hi, xtol=1e-12)
    b = d1 / (x1 ** c - x2 ** c)
    return float(f3 - b * x3 ** c)


# --- dichotomy -------------------------------------------------------------------

def argmax_cell(u: GridFunction) -> int:
    """Cell with the largest |u| at its midpoint (lowest index on ties)."""
    return int(np.argmax(np.abs(u.at_cells().values.ravel())))


def concentration_ratio(u: GridFunction, p: ExponentField, r: float) -> float:
    m = energy_measure(u, p)
    total = m.total_mass
    if total == 0:
        return 0.0
    center = u.grid.cell_centers[argmax_cell(u)]
    return min(1.0, mass_in_ball(m, center, r) / total)


def difference_modular(u: GridFunction, v: GridFunction, q: ExponentField) -> float:
    """L^{q(x)} modular of u - v with v's sign chosen to minimize it."""
    return min(modular(u - v, q).value, modular(u + v, q).value)


@dataclass(frozen=True)
class Dichotomy:
    classification: str
    conc_ratio: float
    argmax_cells: tuple
    difference_modular: float
    concentration_point: Optional[int]
    conc_threshold: float
    compact_threshold: float
    radius: float


def classify_dichotomy(records: Sequence[ExtremalRecord], r: float, crit: CriticalSetReport,
                       conc_threshold: float = CONCENTRATION_THRESHOLD,
                       compact_threshold: float = COMPACT_THRESHOLD) -> Dichotomy:
    """Label the tail of an extremal sequence compact, concentrating or undecided."""
    if len(records) < 3:
        raise TooFewRecords(f"need at least 3 records, got {len(records)}")
    last = records[-1]
    grid = last.u.grid
    if r < 2 * max(grid.spacing) * (1 - 1e-12):
        raise InvalidParameters(f"radius {r} is below two grid spacings")
    ratio = concentration_ratio(last.u, last.problem.p, r)
    cells = tuple(argmax_cell(rec.u) for rec in records[-3:])
    centers = grid.cell_centers[list(cells)]
    spread = max(np.linalg.norm(a - b) for a in centers for b in centers)
    diff = difference_modular(last.u, records[-2].u, last.problem.q)

    point = None
    if ratio > conc_threshold and spread <= r and cells[-1] in crit:
        label, point = "concentrating", cells[-1]
    elif diff < compact_threshold * last.objective and ratio < 0.5:
        label = "compact"
    else:
        label = "undecided"
    return Dichotomy(label, ratio, cells, diff, point, conc_threshold, compact_threshold, r)


# --- sweeps ----------------------------------------------------------------------

@dataclass(eq=False)
class SweepReport:
    schedule: list
    records: list
    failed: list
    conc_ratio: list
    argmax_cell: list
    limit_estimate: float
    classification: str
    concentration_point: Optional[int]
    critical: CriticalSetReport
    radius: float
    conc_threshold: float = CONCENTRATION_THRESHOLD
    compact_threshold: float = COMPACT_THRESHOLD
    difference_modular: float = float("nan")
    q_lo_below_p_hi: bool = True

    @property
    def objectives(self) -> list:
        return [rec.objective if rec is not None else float("nan") for rec in self.records]

    @property
    def differences(self) -> list:
        objs = [o for o in self.objectives if np.isfinite(o)]
        return [abs(a - b) for a, b in zip(objs, objs[1:])]


def run_sweep(p: ExponentField, q: ExponentField, schedule: Sequence[float],
              opts: SolverOptions | None = None, mask=None, r: float | None = None,
              crit_tol: float = 1e-6, conc_threshold: float = CONCENTRATION_THRESHOLD,
              compact_threshold: float = COMPACT_THRESHOLD) -> SweepReport:
    """Solve along a decreasing eps schedule, warm-starting each eps from the last
    successful extremal. A failing eps is recorded and the sweep continues."""
    schedule = [float(e) for e in schedule]
    if not schedule:
        raise InvalidParameters("empty schedule")
    if any(e < 0 for e in schedule) or any(a <= b for a, b in zip(schedule, schedule[1:])):
        raise InvalidParameters("schedule must be strictly decreasing and nonnegative")
    opts = opts or SolverOptions()
    grid = p.grid
    r = 2 * max(grid.spacing) if r is None else float(r)
    crit = critical_set(p, q, grid.dim, crit_tol)

    records, failed, warm = [], [], ()
    for eps in schedule:
        try:
            rec = solve(ExtremalProblem(p, q, eps, mask=mask, crit_tol=crit_tol), opts, warm=warm)
        except NonConvergence as err:
            rec = err.record
            failed.append(eps)
        except VarsobError:
            records.append(None)
            failed.append(eps)
            continue
        records.append(rec)
        warm = (rec.u,)

    done = [(e, rec) for e, rec in zip(schedule, records) if rec is not None]
    ratios = [concentration_ratio(rec.u, p, r) if rec is not None else float("nan") for rec in records]
    cells = [argmax_cell(rec.u) if rec is not None else -1 for rec in records]
    limit = extrapolate_limit([e for e, _ in done], [rec.objective for _, rec in done]) if done else float("nan")

    label, point, diff = "undecided", None, float("nan")
    if len(done) >= 3:
        verdict = classify_dichotomy([rec for _, rec in done], r, crit, conc_threshold, compact_threshold)
        label, point, diff = verdict.classification, verdict.concentration_point, verdict.difference_modular
    return SweepReport(schedule, records, failed, ratios, cells, limit, label, point, crit, r,
                       conc_threshold, compact_threshold, diff, q.lo < p.hi)


def write_sweep_csv(path, report: SweepReport):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["eps", "objective", "grad_norm", "iterations", "conc_ratio",
                    "argmax_i", "argmax_j", "limit_estimate", "classification"])
        for eps, rec, ratio, cell in zip(report.schedule, report.records, report.conc_ratio,
                                         report.argmax_cell):
            if rec is None:
                w.writerow([repr(eps), "nan", "nan", 0, "nan", -1, -1,
                            repr(report.limit_estimate), report.classification])
                continue
            grid = rec.u.grid
            idx = list(grid.cell_index(cell)) + [0] * (2 - grid.dim)
            w.writerow([repr(eps), repr(rec.objective), repr(rec.grad_norm), rec.iterations,
                        repr(ratio), idx[0], idx[1], repr(report.limit_estimate),
                        report.classification])


# --- localized constants ------------------------------------------------------------

@dataclass(eq=False)
class LocalizedConstant:
    center: tuple
    radii: list
    values: list
    records: list
    extrapolated: float

    @property
    def finest(self) -> ExtremalRecord:
        return self.records[int(np.argmin(self.radii))]


def localized_constant(p: ExponentField, q: ExponentField, center, radii: Sequence[float],
                       eps: float = 0.0, opts: SolverOptions | None = None,
                       crit_tol: float = 1e-6) -> LocalizedConstant:
    """Masked solves on B_r(center) for each radius.

    Radii are solved from smallest to largest, each seeded with the previous
    extremal, so values are nondecreasing in r by construction. The limit r -> 0
    is extrapolated and capped at the finest value, since the true limit cannot
    exceed it.
    """
    radii = [float(r) for r in radii]
    if not radii:
        raise InvalidParameters("no radii given")
    center = tuple(float(c) for c in np.atleast_1d(center))
    if not p.grid.contains(center):
        raise InvalidParameters(f"center {center} lies outside the domain")
    opts = opts or SolverOptions()
    masks = [restrict_to_ball(p.grid, center, r) for r in radii]

    order = np.argsort(radii, kind="stable")
    records = [None] * len(radii)
    warm = ()
    for k in order:
        prob = ExtremalProblem(p, q, eps, mask=masks[k], crit_tol=crit_tol)
        try:
            rec = solve(prob, opts, warm=warm)
        except NonConvergence as err:
            rec = err.record
        records[k] = rec
        warm = (rec.u,)

    values = [rec.objective for rec in records]
    desc = list(order[::-1])
    fit = extrapolate_limit([radii[k] for k in desc], [values[k] for k in desc])
    finest = values[order[0]]
    return LocalizedConstant(center, radii, values, records, float(min(max(fit, 0.0), finest)))


def write_localized_csv(path, results: Sequence[LocalizedConstant]):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        dim = len(results[0].center) if results else 1
        w.writerow(["x", "y"][:dim] + ["radius", "value", "extrapolation"])
        for res in results:
            for r, v in zip(res.radii, res.values):
                w.writerow([repr(c) for c in res.center] + [repr(r), repr(v), repr(res.extrapolated)])


@dataclass(frozen=True)
class SobLocIdentity:
    lhs: float
    rhs: float
    rel_gap: float
    radius: float
    lhs_extrapolated: float
    rhs_extrapolated: float


def sobloc_identity(loc: LocalizedConstant, q: ExponentField) -> SobLocIdentity:
    """Modular-form localized constant against the quotient form raised to
    -q(center), both taken from the same extremals at the finest radius."""
    q0 = q.at(loc.center)
    rhs_values = [quotient_constant(rec.problem, record=rec) ** (-q0) for rec in loc.records]
    k = int(np.argmin(loc.radii))
    lhs, rhs = loc.values[k], rhs_values[k]
    desc = list(np.argsort(loc.radii, kind="stable")[::-1])
    rhs_fit = extrapolate_limit([loc.radii[i] for i in desc], [rhs_values[i] for i in desc])
    return SobLocIdentity(lhs, rhs, abs(lhs - rhs) / max(lhs, rhs), loc.radii[k],
                          loc.extrapolated, float(min(max(rhs_fit, 0.0), rhs)))


def check_sobloc_identity(p: ExponentField, q: ExponentField, center, radii: Sequence[float],
                          opts: SolverOptions | None = None,
                          crit_tol: float = 1e-6) -> SobLocIdentity:
    return sobloc_identity(localized_constant(p, q, center, radii, 0.0, opts, crit_tol), q)


# --- bubbles ---------------------------------------------------------------------------

def _phi_smooth(s):
    out = np.zeros_like(s)
    inside = s < 0.5
    out[inside] = np.exp(1.0 / (s[inside] ** 2 - 0.25))
    return out


def _phi_tent(s):
    return np.maximum(0.0, 1.0 - 2.0 * s)


PROFILES = {"smooth": _phi_smooth, "tent": _phi_tent}


def bubble_profile(center, eps: float, p: ExponentField, profile: str = "smooth") -> GridFunction:
    """eps^{-(n - p(center)) / p(center)} phi((x - center) / eps) at the nodes."""
    if profile not in PROFILES:
        raise InvalidParameters(f"unknown profile '{profile}'")
    grid = p.grid
    center = np.atleast_1d(np.asarray(center, dtype=float))
    if eps <= 0:
        raise InvalidParameters("bubble scale must be positive")
    if grid.boundary_distance(center) - eps / 2 < 2 * max(grid.spacing) * (1 - 1e-12):
        raise BubbleTouchesBoundary(
            f"support of radius {eps / 2} around {tuple(center)} comes within two spacings of the boundary")
    pc = p.at(center)
    scale = eps ** (-(grid.dim - pc) / pc)
    s = np.linalg.norm(grid.interior_nodes - center, axis=1) / eps
    return GridFunction(grid, scale * PROFILES[profile](s))


def scale_to_energy(shape: GridFunction, p: ExponentField, target_mass: float) -> GridFunction:
    """t * shape with t > 0 chosen so the energy modular equals target_mass."""
    if not 0 < target_mass <= 1:
        raise TargetMassInfeasible(f"target mass {target_mass} is outside (0, 1]")
    base = energy_measure(shape, p).total_mass
    if base == 0 or not np.isfinite(base):
        raise TargetMassInfeasible("profile has no resolvable gradient on this grid")

    def excess(log_t):
        return energy_measure(shape * np.exp(log_t), p).total_mass - target_mass

    guess = np.log(target_mass / base) / p.hi
    lo, hi = guess - 1.0, guess + 1.0
    while excess(lo) > 0:
        lo -= 1.0
    while excess(hi) < 0:
        hi += 1.0
    log_t = brentq(excess, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500)
    return shape * np.exp(log_t)


def make_bubble(center, eps: float, p: ExponentField, target_mass: float = 1.0,
                profile="smooth") -> GridFunction:
    """Bubble of scale eps at center whose energy modular equals target_mass.

    ``profile`` is "smooth" (exp cutoff), "tent", or a GridFunction supported in
    B_{eps/2}(center), typically a localized extremal.
    """
    if isinstance(profile, GridFunction):
        grid = p.grid
        center = np.atleast_1d(np.asarray(center, dtype=float))
        if grid.boundary_distance(center) - eps / 2 < 2 * max(grid.spacing) * (1 - 1e-12):
            raise BubbleTouchesBoundary(f"support of radius {eps / 2} comes within two spacings of the boundary")
        nz = profile.flat != 0
        reach = np.linalg.norm(grid.interior_nodes[nz] - center, axis=1)
        if reach.size and reach.max() > eps / 2 + 1e-12:
            raise InvalidParameters("profile extends beyond B_{eps/2}(center)")
        shape = profile
    else:
        shape = bubble_profile(center, eps, p, profile)
    return scale_to_energy(shape, p, target_mass)


def make_multi_bubble(atoms: Sequence, eps: float, p: ExponentField, profiles=None) -> GridFunction:
    """Sum of disjoint bubbles, atom i carrying energy mu_i. ``atoms`` holds
    (center, mass) pairs; ``profiles`` optionally gives one profile per atom."""
    masses = [float(m) for _, m in atoms]
    if sum(masses) >= 1:
        raise MassBudgetExceeded(f"atom masses sum to {sum(masses)} >= 1")
    profiles = profiles or ["smooth"] * len(atoms)
    total = GridFunction.zeros(p.grid)
    covered = np.zeros(p.grid.cells, dtype=bool)
    for (center, mass), prof in zip(atoms, profiles):
        bubble = make_bubble(center, eps, p, mass, prof)
        cells = support_cells(bubble)
        if np.any(cells & covered):
            raise OverlappingSupports(f"bubble at {tuple(np.atleast_1d(center))} overlaps another atom")
        covered |= cells
        total = total + bubble
    return total


# --- functionals and atoms --------------------------------------------------------------

def eval_F_eps(u: GridFunction, eps: float, q: ExponentField) -> float:
    """int |u|^{q(x) - eps}."""
    return modular(u, q.shifted(-eps) if eps else q).value


@dataclass(frozen=True)
class AtomicDecomposition:
    atoms: tuple  # (cell index, mass) pairs
    diffuse_mass: float
    atom_radius: float
    threshold: float

    @property
    def total_mass(self) -> float:
        return self.diffuse_mass + sum(m for _, m in self.atoms)


def detect_atoms(m: DiscreteMeasure, atom_radius: float, threshold: float = ATOM_THRESHOLD) -> AtomicDecomposition:
    """Greedy atom extraction: cells whose ball of radius atom_radius holds at
    least threshold * total, taken by descending mass, at least 2 * atom_radius
    apart. Each cell's mass is credited to at most one atom."""
    if atom_radius <= 0:
        raise InvalidParameters("atom radius must be positive")
    grid = m.grid
    masses = m.masses.ravel()
    total = float(masses.sum())
    centers = grid.cell_centers
    tree = cKDTree(centers)
    neighbors = tree.query_ball_point(centers, atom_radius)
    ball = np.array([masses[nb].sum() for nb in neighbors])
    cutoff = threshold * total
    taken = np.zeros(len(masses), dtype=bool)
    atoms, chosen = [], []
    for cell in np.argsort(-ball, kind="stable"):
        if ball[cell] < cutoff or total == 0:
            break
        if any(np.linalg.norm(centers[cell] - centers[c]) < 2 * atom_radius for c in chosen):
            continue
        nb = np.array(neighbors[cell])
        nb = nb[~taken[nb]]
        mass = float(masses[nb].sum())
        if mass < cutoff:
            continue
        taken[nb] = True
        chosen.append(int(cell))
        atoms.append((int(cell), mass))
    diffuse = total - sum(a[1] for a in atoms)
    return AtomicDecomposition(tuple(atoms), max(diffuse, 0.0), float(atom_radius), float(cutoff))


def eval_F_star(u: GridFunction, atoms: AtomicDecomposition, p: ExponentField, q: ExponentField,
                localized: dict) -> float:
    """int |u|^q + sum mu_i^{p*(x_i)/p(x_i)} Sbar_{x_i}^{-p*(x_i)}."""
    value = modular(u, q).value
    pstar = sobolev_conjugate(p, p.grid.dim).ravel()
    pv = p.values.ravel()
    for cell, mu in atoms.atoms:
        if cell not in localized:
            raise MissingLocalizedConstant(f"no localized constant for atom cell {cell}")
        ps = pstar[cell]
        if not np.isfinite(ps):
            raise InvalidParameters(f"atom cell {cell} has p >= n, no critical exponent")
        value += mu ** (ps / pv[cell]) * float(localized[cell]) ** (-ps)
    return float(value)


# --- sufficient condition -----------------------------------------------------------------

@dataclass(eq=False)
class SufficientCondition:
    sup_local: float
    global_value: float
    strict: bool
    inclusion_holds: bool
    margin: float
    samples: list = field(default_factory=list)  # (cell, LocalizedConstant)


def sample_critical_cells(crit: CriticalSetReport, grid, count: int = 3, min_clearance: float = 0.0) -> list:
    """Evenly spaced picks from the critical set, skipping cells closer than
    min_clearance to the boundary when possible."""
    cells = [c for c in crit.cells if grid.boundary_distance(grid.cell_centers[c]) >= min_clearance]
    cells = cells or list(crit.cells)
    if len(cells) <= count:
        return cells
    picks = np.linspace(0, len(cells) - 1, count + 2)[1:-1]
    return [cells[int(round(k))] for k in picks]


def check_sufficient_condition(p: ExponentField, q: ExponentField, crit: CriticalSetReport,
                               global_value: float, radii: Sequence[float],
                               opts: SolverOptions | None = None, cells=None,
                               margin: float = SUFFICIENT_MARGIN, threads: int = 1) -> SufficientCondition:
    """Compare sup over sampled critical cells of the localized constant with the
    global one; strict when the gap exceeds ``margin``."""
    if crit.empty:
        raise InvalidParameters("critical set is empty")
    grid = p.grid
    if cells is None:
        cells = sample_critical_cells(crit, grid, min_clearance=max(radii))
    centers = [grid.cell_centers[c] for c in cells]

    def one(center):
        return localized_constant(p, q, center, radii, 0.0, opts)

    if threads > 1 and len(centers) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(one, centers))
    else:
        results = [one(c) for c in centers]
    sup_local = max(res.extrapolated for res in results)
    finest = max(max(res.values) for res in results)
    return SufficientCondition(
        sup_local, float(global_value), sup_local < global_value * (1 - margin),
        finest <= global_value * (1 + INCLUSION_SLACK), margin, list(zip(cells, results)))
