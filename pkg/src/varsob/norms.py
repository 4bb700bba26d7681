"""Modulars, Luxemburg norms and numerical checks of the variable-exponent
inequalities (Hoelder, Sobolev-type, and the elementary pointwise bound)."""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import InvalidParameters, NonConvergence
from .exponents import ExponentField
from .grid import CellField, GridFunction, _check_same_grid, gradient_magnitude

ROOT_RTOL = 1e-12
MAX_BISECTIONS = 200
CHECK_SLACK = 1e-12


def as_cells(u) -> CellField:
    if isinstance(u, GridFunction):
        return u.at_cells()
    if isinstance(u, CellField):
        return u
    raise TypeError(f"expected GridFunction or CellField, got {type(u).__name__}")


def _broadcast(cells: CellField, f: ExponentField) -> np.ndarray:
    _check_same_grid(cells.grid, f.grid)
    exps = f.values
    if cells.values.ndim > cells.grid.dim:
        exps = np.broadcast_to(exps[..., None], cells.values.shape)
    return exps


@dataclass(frozen=True)
class ModularValue:
    value: float
    field_ref: str = ""
    function_ref: str = ""

    def __float__(self):
        return self.value


@dataclass(frozen=True)
class LuxemburgNorm:
    value: float
    residual: float
    iterations: int

    def __float__(self):
        return self.value


def modular_from_values(absvals, exps, weights) -> float:
    return float(np.sum(weights * np.power(absvals, exps)))


def modular(u, f: ExponentField) -> ModularValue:
    cells = as_cells(u)
    exps = _broadcast(cells, f)
    value = modular_from_values(np.abs(cells.values), exps, cells.weights())
    return ModularValue(value, f.label, type(u).__name__)


def luxemburg_from_values(absvals, exps, weights, volume, rtol=ROOT_RTOL,
                          max_iter=MAX_BISECTIONS) -> LuxemburgNorm:
    """inf{lam > 0 : sum w (a/lam)^p <= 1} by bracketing and bisection in log(lam).

    The returned value is the upper (feasible) end of the final bracket.
    """
    absvals = np.asarray(absvals, dtype=float).ravel()
    exps = np.asarray(exps, dtype=float).ravel()
    weights = np.asarray(weights, dtype=float).ravel()
    nz = absvals > 0
    if not nz.any():
        return LuxemburgNorm(0.0, 0.0, 0)
    loga, e, w = np.log(absvals[nz]), exps[nz], weights[nz]

    def rho(t):
        return float(np.dot(w, np.exp(e * (loga - t))))

    it = 0
    t_hi = np.log(absvals.max() * volume ** (1.0 / e.min()) + 1.0)
    while rho(t_hi) > 1.0:
        t_hi += np.log(2.0)
        it += 1
    t_lo = t_hi - np.log(2.0)
    while rho(t_lo) <= 1.0:
        t_hi = t_lo
        t_lo -= np.log(2.0)
        it += 1
        if it > max_iter:
            raise NonConvergence("could not bracket the Luxemburg norm")
    while t_hi - t_lo > rtol:
        mid = 0.5 * (t_lo + t_hi)
        if mid in (t_lo, t_hi):
            break
        if rho(mid) > 1.0:
            t_lo = mid
        else:
            t_hi = mid
        it += 1
        if it > max_iter:
            raise NonConvergence(f"bisection exceeded {max_iter} iterations")
    return LuxemburgNorm(float(np.exp(t_hi)), abs(rho(t_hi) - 1.0), it)


def luxemburg_norm(u, f: ExponentField) -> LuxemburgNorm:
    cells = as_cells(u)
    exps = _broadcast(cells, f)
    return luxemburg_from_values(np.abs(cells.values), exps, cells.weights(), cells.grid.volume)


def gradient_norm(u: GridFunction, p: ExponentField) -> LuxemburgNorm:
    """||grad u||_{p(x)}."""
    return luxemburg_norm(gradient_magnitude(u), p)


def _power_bounds(rho: float, lo: float, hi: float) -> tuple:
    a, b = rho ** (1.0 / lo), rho ** (1.0 / hi)
    return min(a, b), max(a, b)


def norm_modular_bounds(u, f: ExponentField) -> tuple:
    """(min, max) of rho^{1/p-}, rho^{1/p+}; the Luxemburg norm lies between them."""
    rho = modular(u, f).value
    return _power_bounds(rho, f.lo, f.hi)


@dataclass(frozen=True)
class InequalityRecord:
    lhs: float
    rhs: float
    holds: bool


def hoelder_check(f, g, p: ExponentField) -> InequalityRecord:
    """Test int f g <= (1/p- + 1/p'-) max{rho_p(f)^{1/p-}, rho_p(f)^{1/p+}} ||g||_{p'}."""
    fc, gc = as_cells(f), as_cells(g)
    _check_same_grid(fc.grid, gc.grid)
    lhs = float(np.sum(fc.weights() * fc.values * gc.values))
    pc = p.conjugate()
    const = 1.0 / p.lo + 1.0 / pc.lo
    rho = modular(fc, p).value
    rhs = const * _power_bounds(rho, p.lo, p.hi)[1] * luxemburg_norm(gc, pc).value
    return InequalityRecord(lhs, rhs, lhs <= rhs + CHECK_SLACK)


def hoelder_fuzz(grid, trials: int, seed: int, p_range=(1.1, 8.0), max_pieces: int = 4) -> dict:
    """Random (f, g, piecewise p) triples; returns counts and the worst lhs - rhs."""
    rng = np.random.default_rng(seed)
    violations, worst = 0, -np.inf
    x = grid.cell_centers[:, 0]
    lo_x, hi_x = grid.extents[0]
    for _ in range(trials):
        k = int(rng.integers(1, max_pieces + 1))
        cuts = np.sort(rng.uniform(lo_x, hi_x, k - 1))
        vals = rng.uniform(*p_range, k)
        p = ExponentField(grid, vals[np.searchsorted(cuts, x)])
        scale_f, scale_g = np.exp(rng.uniform(-3, 3, 2))
        f = CellField(grid, scale_f * rng.standard_normal(grid.cells))
        g = CellField(grid, scale_g * rng.standard_normal(grid.cells))
        rec = hoelder_check(f, g, p)
        worst = max(worst, rec.lhs - rec.rhs)
        violations += not rec.holds
    return {"trials": trials, "violations": violations, "worst_excess": float(worst)}


def _elementary_ratio(a, b, p, theta):
    na = np.linalg.norm(a, axis=1)
    nb = np.linalg.norm(b, axis=1)
    nab = np.linalg.norm(a + b, axis=1)
    num = np.abs(nab ** p - na ** p - nb ** p)
    den = na ** (p - theta) * nb ** theta + na ** theta * nb ** (p - theta)
    out = np.zeros_like(num)
    ok = (na > 0) & (nb > 0)
    out[ok] = num[ok] / den[ok]
    return out


def elementary_inequality_constant(p_lo: float, p_hi: float, theta: float, samples: int,
                                   seed: int, log_ratio: float = 6.0, chunk: int = 200_000) -> float:
    """Empirical sup of ||a+b|^p - |a|^p - |b|^p| / (|a|^{p-t}|b|^t + |a|^t|b|^{p-t}).

    Both sides are p-homogeneous in (a, b), so |b| is fixed to 1 and |a| is drawn
    log-uniformly in [e^-log_ratio, e^log_ratio]; directions are uniform on the
    sphere, half the draws in R^2 and half in R^3.
    """
    if not (1.0 < p_lo <= p_hi) or not (0.0 < theta <= 1.0) or samples < 1:
        raise InvalidParameters(f"need 1 < p_lo <= p_hi, 0 < theta <= 1, samples >= 1 "
                                f"(got {p_lo}, {p_hi}, {theta}, {samples})")
    rng = np.random.default_rng(seed)
    best = 0.0
    done = 0
    while done < samples:
        n = min(chunk, samples - done)
        planar = rng.random(n) < 0.5
        a = rng.standard_normal((n, 3))
        b = rng.standard_normal((n, 3))
        a[planar, 2] = 0.0
        b[planar, 2] = 0.0
        a /= np.linalg.norm(a, axis=1, keepdims=True)
        b /= np.linalg.norm(b, axis=1, keepdims=True)
        a *= np.exp(rng.uniform(-log_ratio, log_ratio, n))[:, None]
        p = rng.uniform(p_lo, p_hi, n)
        best = max(best, float(_elementary_ratio(a, b, p, theta).max()))
        done += n
    return best


def write_fuzz_csv(path, rows):
    """rows: dicts with seed, samples, p_lo, p_hi, theta, empirical_constant."""
    cols = ["seed", "samples", "p_lo", "p_hi", "theta", "empirical_constant"]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(cols)
        for row in rows:
            w.writerow([row[c] if isinstance(row[c], int) else repr(float(row[c])) for c in cols])


def sobolev_inequality_check(u: GridFunction, p: ExponentField, q: ExponentField,
                             S_tilde_inv: float) -> InequalityRecord:
    """int |u|^q <= S~^-1 max{||grad u||^{q+}, ||grad u||^{q-}}."""
    lhs = modular(u, q).value
    g = gradient_norm(u, p).value
    rhs = S_tilde_inv * max(g ** q.hi, g ** q.lo)
    return InequalityRecord(lhs, rhs, lhs <= rhs * (1 + 1e-9))
