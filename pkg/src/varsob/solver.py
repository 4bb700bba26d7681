"""Projected ascent for sup { int |u|^{q(x)-eps} : ||grad u||_{p(x)} <= 1 }.

Each iteration takes the gradient of the scale-invariant quotient
F(u / ||grad u||), maps it through the inverse of the linearized p(x)-Laplacian
(refactored every ``metric_refresh`` iterations), steps, and renormalizes onto
the unit sphere of ||grad u||_{p(x)} by Luxemburg homogeneity. The step length is backtracked until the objective does not
decrease.
"""
from __future__ import annotations

import functools
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import InfeasibleProblem, NonConvergence, SupercriticalExponent, ZeroFunction
from .exponents import ExponentField, sobolev_conjugate
from .grid import GridFunction, _check_same_grid, free_nodes, operators
from .norms import ROOT_RTOL, gradient_norm, luxemburg_from_values, luxemburg_norm, modular

MIN_EXPONENT_MARGIN = 1e-6
# dividing by slightly more than the computed norm keeps the re-measured norm <= 1
SHRINK = 1 + 4 * ROOT_RTOL


@dataclass(frozen=True)
class SolverOptions:
    tol: float = 1e-9
    patience: int = 5
    max_iters: int = 5000
    restarts: int = 4
    seed: int = 0
    eta0: float = 1.0
    eta_max: float = 1e8
    precondition: bool = True
    metric_refresh: int = 20
    threads: int = 1


@dataclass(frozen=True, eq=False)
class ExtremalProblem:
    p: ExponentField
    q: ExponentField
    eps: float = 0.0
    mask: Optional[np.ndarray] = None
    dim: Optional[int] = None
    crit_tol: float = 1e-6

    def __post_init__(self):
        _check_same_grid(self.p.grid, self.q.grid)
        if self.dim is None:
            object.__setattr__(self, "dim", self.p.grid.dim)
        if self.mask is not None:
            mask = np.asarray(self.mask, dtype=bool).reshape(self.grid.cells)
            object.__setattr__(self, "mask", mask)
        if self.eps < 0:
            raise InfeasibleProblem("eps must be nonnegative")
        if self.q.lo - self.eps < 1 + MIN_EXPONENT_MARGIN:
            raise InfeasibleProblem(f"q - eps drops to {self.q.lo - self.eps:.6g} < 1")
        gap = self.gap.ravel()
        region = self.region.ravel()
        bad = np.flatnonzero(region & (gap < -self.crit_tol))
        if bad.size:
            raise SupercriticalExponent(int(bad[0]), float(gap[bad[0]]))

    @property
    def grid(self):
        return self.p.grid

    @property
    def region(self) -> np.ndarray:
        return np.ones(self.grid.cells, dtype=bool) if self.mask is None else self.mask

    @property
    def gap(self) -> np.ndarray:
        """p* - q per cell."""
        return sobolev_conjugate(self.p, self.dim) - self.q.values

    @property
    def critical(self) -> bool:
        """True when eps = 0 and q touches p* somewhere in the region."""
        return self.eps == 0 and bool(np.any(self.gap[self.region] <= self.crit_tol))

    @functools.cached_property
    def target_exponent(self) -> ExponentField:
        return self.q.shifted(-self.eps) if self.eps else self.q

    def with_eps(self, eps: float) -> "ExtremalProblem":
        return ExtremalProblem(self.p, self.q, eps, self.mask, self.dim, self.crit_tol)


@dataclass(eq=False)
class ExtremalRecord:
    problem: ExtremalProblem
    u: GridFunction
    objective: float
    grad_norm: float
    iterations: int
    restarts_used: int
    converged: bool
    critical: bool = False
    restart_objectives: list = field(default_factory=list)
    history: list = field(default_factory=list, repr=False)

    @property
    def eps(self) -> float:
        return self.problem.eps

    @property
    def restart_dispersion(self) -> float:
        objs = [o for o in self.restart_objectives if np.isfinite(o)]
        return float(max(objs) - min(objs)) if objs else 0.0


def objective(u: GridFunction, prob: ExtremalProblem) -> float:
    """Midpoint quadrature of |u|^{q(x) - eps}."""
    return modular(u, prob.target_exponent).value


def project_to_unit_ball(u: GridFunction, p: ExponentField) -> GridFunction:
    norm = gradient_norm(u, p).value
    if norm == 0:
        raise ZeroFunction("cannot normalize the zero function")
    return u / (norm * SHRINK)


class _Discrete:
    """Problem restricted to the free nodes, with cached sparse operators."""

    def __init__(self, prob: ExtremalProblem):
        grid = prob.grid
        ops = operators(grid)
        self.grid = grid
        self.free = free_nodes(grid, prob.mask).ravel()
        if not self.free.any():
            raise InfeasibleProblem("no free nodes inside the admissible region")
        cols = np.flatnonzero(self.free)
        self.cols = cols
        self.A = ops.avg[:, cols].tocsr()
        self.AT = self.A.T.tocsr()
        self.G = [g[:, cols].tocsr() for g in ops.grad]
        self.nsub = ops.nsub
        vol = grid.cell_volume
        self.w = np.full(grid.ncells, vol)
        self.qe = prob.target_exponent.values.ravel()
        self.p_sub = np.repeat(prob.p.values.ravel(), ops.nsub)
        self.w_sub = np.full(grid.ncells * ops.nsub, vol / ops.nsub)
        self.volume = grid.volume

    def _factor(self, weights):
        K = sum(g.T @ sp.diags(weights) @ g for g in self.G)
        return spla.factorized(sp.csc_matrix(K))

    @functools.cached_property
    def laplacian_solve(self):
        return self._factor(self.w_sub)

    def metric_solve(self, x):
        """Inverse of the linearized p(x)-Laplacian at x, with |grad x|^2 floored
        by 1e-4 of its mean; falls back to the plain Dirichlet Laplacian."""
        a2 = sum((g @ x) ** 2 for g in self.G)
        floor = 1e-4 * float(np.mean(a2))
        if floor <= 0:
            return self.laplacian_solve
        return self._factor(self.w_sub * (a2 + floor) ** ((self.p_sub - 2) / 2))

    def F(self, x):
        return float(np.dot(self.w, np.abs(self.A @ x) ** self.qe))

    def dF(self, x):
        v = self.A @ x
        return self.AT @ (self.w * self.qe * np.abs(v) ** (self.qe - 1) * np.sign(v))

    def dN(self, x):
        """Gradient of the Luxemburg gradient norm at a point where it equals 1."""
        g = [G @ x for G in self.G]
        a = np.sqrt(sum(c ** 2 for c in g))
        pos = a > 0
        coef = np.zeros_like(a)
        coef[pos] = self.w_sub[pos] * self.p_sub[pos] * a[pos] ** (self.p_sub[pos] - 2)
        denom = float(np.dot(self.w_sub[pos] * self.p_sub[pos], a[pos] ** self.p_sub[pos]))
        return sum(G.T @ (coef * c) for G, c in zip(self.G, g)) / denom

    def dR(self, x):
        """Gradient of the scale-invariant quotient F(x / N(x)) at N(x) = 1."""
        g = self.dF(x)
        return g - float(np.dot(g, x)) * self.dN(x)

    def gnorm(self, x, rtol=1e-12):
        mag = np.sqrt(sum((g @ x) ** 2 for g in self.G))
        return luxemburg_from_values(mag, self.p_sub, self.w_sub, self.volume, rtol=rtol).value

    def embed(self, x) -> GridFunction:
        full = np.zeros(self.grid.n_interior)
        full[self.cols] = x
        return GridFunction(self.grid, full)

    def restrict(self, u: GridFunction):
        return u.flat[self.cols].copy()


def _bump(disc: _Discrete, prob: ExtremalProblem):
    pts = disc.grid.interior_nodes[disc.cols]
    region_centers = disc.grid.cell_centers[prob.region.ravel()]
    c = region_centers.mean(axis=0)
    r = np.max(np.linalg.norm(region_centers - c, axis=1)) + max(disc.grid.spacing)
    s2 = np.sum((pts - c) ** 2, axis=1) / r ** 2
    out = np.zeros(len(pts))
    inside = s2 < 1
    out[inside] = np.exp(1.0 / (s2[inside] - 1.0))
    return out


def _smoothed_noise(disc: _Discrete, rng, sweeps: int = 5, omega: float = 2 / 3):
    full = np.zeros(disc.grid.n_interior)
    full[disc.cols] = rng.random(len(disc.cols))
    free = disc.free.reshape(disc.grid.interior_shape)
    u = full.reshape(disc.grid.interior_shape)
    nd = u.ndim
    for _ in range(sweeps):
        padded = np.pad(u, 1)
        nb = np.zeros_like(u)
        for axis in range(nd):
            for shifted in (slice(None, -2), slice(2, None)):
                idx = [slice(1, -1)] * nd
                idx[axis] = shifted
                nb += padded[tuple(idx)]
        u = (1 - omega) * u + omega * nb / (2 * nd)
        u = np.where(free, u, 0.0)
    return u.ravel()[disc.cols]


def initial_guesses(disc: _Discrete, prob: ExtremalProblem, opts: SolverOptions, warm=()):
    rng = np.random.default_rng(opts.seed)
    guesses = [disc.restrict(w) for w in warm]
    defaults = [lambda: _bump(disc, prob), lambda: _smoothed_noise(disc, rng),
                lambda: np.ones(len(disc.cols))]
    k = 0
    while len(guesses) < max(opts.restarts, len(warm)):
        make = defaults[k] if k < len(defaults) else (lambda: _smoothed_noise(disc, rng))
        guesses.append(make())
        k += 1
    return guesses


def _ascend(disc: _Discrete, x0, opts: SolverOptions):
    n0 = disc.gnorm(x0)
    if n0 == 0:
        raise ZeroFunction("initial guess has zero gradient")
    x = x0 / (n0 * SHRINK)
    fx = disc.F(x)
    history = [fx]
    precond = disc.laplacian_solve if opts.precondition else None
    eta = opts.eta0
    small = 0
    converged = False
    it = 0
    for it in range(1, opts.max_iters + 1):
        d = disc.dR(x)
        if opts.precondition:
            if opts.metric_refresh and (it - 1) % opts.metric_refresh == 0:
                precond = disc.metric_solve(x)
            d = precond(d)
        dn = disc.gnorm(d, rtol=1e-6)
        if dn == 0:
            converged = True
            break
        d = d / dn
        step = opts.eta0 if it == 1 else min(2 * eta, opts.eta_max)
        while True:
            y = x + step * d
            ny = disc.gnorm(y)
            if ny > 0:
                y = y / (ny * SHRINK)
                fy = disc.F(y)
                if fy >= fx:
                    break
            step *= 0.5
            if step < 1e-14:
                y, fy = x, fx
                break
        rel = abs(fy - fx) / max(abs(fx), 1e-300)
        x, fx, eta = y, fy, max(step, 1e-14)
        history.append(fx)
        small = small + 1 if rel < opts.tol else 0
        if small >= opts.patience:
            converged = True
            break
    return x, fx, it, converged, history


def solve(prob: ExtremalProblem, opts: SolverOptions | None = None,
          warm: Sequence[GridFunction] = ()) -> ExtremalRecord:
    """Best of several projected-ascent runs; raises NonConvergence (carrying the
    best record) if no restart met the stopping rule."""
    opts = opts or SolverOptions()
    disc = _Discrete(prob)
    guesses = initial_guesses(disc, prob, opts, warm)

    def run(x0):
        return _ascend(disc, x0, opts)

    if opts.threads > 1 and len(guesses) > 1:
        with ThreadPoolExecutor(max_workers=opts.threads) as pool:
            results = list(pool.map(run, guesses))
    else:
        results = [run(g) for g in guesses]

    objs = [r[1] for r in results]
    best = int(np.argmax(objs))  # first index wins ties
    x, fx, iters, conv, hist = results[best]
    u = disc.embed(x)
    record = ExtremalRecord(
        problem=prob, u=u, objective=fx,
        grad_norm=gradient_norm(u, prob.p).value, iterations=iters,
        restarts_used=len(guesses), converged=conv, critical=prob.critical,
        restart_objectives=objs, history=hist)
    if not any(r[3] for r in results):
        err = NonConvergence(f"no restart converged within {opts.max_iters} iterations")
        err.record = record
        raise err
    return record


def quotient_constant(prob: ExtremalProblem, opts: SolverOptions | None = None,
                      record: ExtremalRecord | None = None) -> float:
    """||grad u*||_{p} / ||u*||_{q - eps} at the extremal of ``solve``."""
    record = record or solve(prob, opts)
    return record.grad_norm / luxemburg_norm(record.u, prob.target_exponent).value
