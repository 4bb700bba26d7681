import numpy as np
import pytest
from hypothesis import given, strategies as st

from varsob import exponents as ex
from varsob.errors import InfeasibleProblem, NonConvergence, SupercriticalExponent, ZeroFunction
from varsob.grid import Grid, GridFunction, restrict_to_ball
from varsob.norms import gradient_norm, luxemburg_norm
from varsob.solver import (ExtremalProblem, SolverOptions, objective, project_to_unit_ball,
                           quotient_constant, solve)


@pytest.fixture(scope="module")
def eigen256():
    grid = Grid.interval(256)
    p = ex.constant(grid, 2.0)
    prob = ExtremalProblem(p, p, 0.0)
    return prob, solve(prob)


def test_objective_of_zero(line8):
    p = ex.constant(line8, 2.0)
    assert objective(GridFunction.zeros(line8), ExtremalProblem(p, p)) == 0.0


@given(st.integers(0, 10 ** 6), st.floats(0.01, 0.9))
def test_objective_nondecreasing_in_eps_on_unit_range(seed, eps):
    grid = Grid.interval(20)
    rng = np.random.default_rng(seed)
    u = GridFunction(grid, rng.uniform(-1, 1, 19))
    p = ex.constant(grid, 1.5)
    q = ex.ExponentField(grid, rng.uniform(2.0, 4.0, 20))
    assert objective(u, ExtremalProblem(p, q, eps)) >= objective(u, ExtremalProblem(p, q, 0.0))


def test_objective_sign_invariant(square16, rng):
    u = GridFunction(square16, rng.standard_normal(square16.interior_shape))
    prob = ExtremalProblem(ex.constant(square16, 1.5), ex.constant(square16, 3.0), 0.1)
    assert objective(u, prob) == objective(-u, prob)


def test_projection_of_hat(line8):
    # hat of height a at x = 1/2 has ||u'||_2 = 4a
    u = GridFunction(line8, 3.0 * np.eye(7)[3])
    v = project_to_unit_ball(u, ex.constant(line8, 2.0))
    assert v.values.max() == pytest.approx(0.25, rel=1e-10)


@given(st.floats(1e-3, 1e3), st.integers(0, 1000))
def test_projection_scale_invariant_and_idempotent(c, seed):
    grid = Grid.box((6, 6))
    rng = np.random.default_rng(seed)
    p = ex.ExponentField(grid, rng.uniform(1.3, 3.0, 36))
    u = GridFunction(grid, rng.standard_normal(grid.interior_shape))
    v = project_to_unit_ball(u, p)
    assert np.allclose(project_to_unit_ball(u * c, p).values, v.values, rtol=1e-10, atol=0)
    assert np.allclose(project_to_unit_ball(v, p).values, v.values, rtol=1e-10, atol=0)
    assert 1 - 1e-10 <= gradient_norm(v, p).value <= 1.0


def test_projection_of_zero(line8):
    with pytest.raises(ZeroFunction):
        project_to_unit_ball(GridFunction.zeros(line8), ex.constant(line8, 2.0))


def test_infeasible_shift(line8):
    p = ex.constant(line8, 2.0)
    with pytest.raises(InfeasibleProblem):
        ExtremalProblem(p, ex.constant(line8, 1.5), eps=0.5)


def test_supercritical_rejected():
    grid = Grid.box((4, 4))
    with pytest.raises(SupercriticalExponent):
        ExtremalProblem(ex.constant(grid, 1.5), ex.constant(grid, 7.0))


def test_eigen_oracle(eigen256):
    prob, rec = eigen256
    assert rec.objective == pytest.approx(np.pi ** -2, rel=0.01)
    assert quotient_constant(prob, record=rec) == pytest.approx(np.pi, rel=0.01)
    assert 1 - 1e-8 <= rec.grad_norm <= 1.0
    assert rec.converged and not rec.critical


def test_eigen_extremal_is_sine(eigen256):
    _, rec = eigen256
    grid = rec.u.grid
    s = GridFunction.from_callable(grid, lambda x: np.sin(np.pi * x[:, 0]))
    s = project_to_unit_ball(s, ex.constant(grid, 2.0))
    u = rec.u if rec.u.values.sum() > 0 else -rec.u
    dist = luxemburg_norm(u - s, ex.constant(grid, 2.0)).value
    assert dist / luxemburg_norm(s, ex.constant(grid, 2.0)).value < 0.02


def test_quotient_matches_objective_for_constant_q():
    grid = Grid.interval(128)
    prob = ExtremalProblem(ex.constant(grid, 2.0), ex.constant(grid, 4.0), 0.5)
    rec = solve(prob)
    s = quotient_constant(prob, record=rec)
    assert s ** -(4.0 - 0.5) == pytest.approx(rec.objective, rel=1e-9)


def test_warm_start_is_fixed_point(eigen256):
    prob, rec = eigen256
    opts = SolverOptions(restarts=1)
    again = solve(prob, opts, warm=[rec.u])
    assert again.iterations <= opts.patience
    assert again.objective == pytest.approx(rec.objective, rel=1e-9)


def test_history_nondecreasing():
    grid = Grid.box((12, 12))
    prob = ExtremalProblem(ex.constant(grid, 1.5), ex.affine(grid, 3.0, 1.0), 0.0)
    rec = solve(prob, SolverOptions(restarts=2))
    assert np.all(np.diff(rec.history) >= 0)
    assert rec.objective == max(rec.restart_objectives)


def test_nonconvergence_carries_record():
    grid = Grid.interval(64)
    prob = ExtremalProblem(ex.constant(grid, 2.0), ex.constant(grid, 3.0))
    with pytest.raises(NonConvergence) as info:
        solve(prob, SolverOptions(max_iters=2, restarts=2))
    assert info.value.record.objective > 0
    assert not info.value.record.converged


def test_masked_solution_vanishes_outside_ball():
    grid = Grid.box((16, 16))
    mask = restrict_to_ball(grid, (0.5, 0.5), 0.25)
    prob = ExtremalProblem(ex.constant(grid, 1.5), ex.constant(grid, 4.0), mask=mask)
    rec = solve(prob, SolverOptions(restarts=2))
    d = np.linalg.norm(grid.interior_nodes - 0.5, axis=1)
    assert np.all(rec.u.flat[d > 0.25 + 1e-12] == 0)


def test_threads_do_not_change_result():
    grid = Grid.box((10, 10))
    prob = ExtremalProblem(ex.constant(grid, 1.8), ex.constant(grid, 3.0))
    a = solve(prob, SolverOptions(threads=1))
    b = solve(prob, SolverOptions(threads=3))
    assert np.array_equal(a.u.values, b.u.values)
    assert a.restart_objectives == b.restart_objectives
