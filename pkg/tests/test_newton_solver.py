import numpy as np
import pytest

from conftest import THETA
from nemcell.asymptotics import uniaxial_limit_profile
from nemcell.continuation import solve_ee_warm
from nemcell.discretization import Grid, Profile, el_residual, l2_distance, linear_ee_profile, linear_profile, nodal_norms
from nemcell.newton_solver import (
    SolveOptions,
    gradient_flow_descent,
    multi_start,
    resolve_jobs,
    solve_ee,
    solve_full,
)
from nemcell.qtensor import MaterialConstants

MAX_NORM = MaterialConstants.from_theta(THETA).max_norm


def _check_solution(out, lam):
    assert out.converged
    assert out.final_residual <= out.tolerance
    p = out.profile if isinstance(out.profile, Profile) else out.profile.embed()
    assert np.abs(el_residual(p, lam, THETA)).max() <= out.tolerance
    assert nodal_norms(p).max() <= MAX_NORM * (1 + 1e-3)


@pytest.mark.parametrize(
    "kwargs", [{"residual_tolerance": 0.0}, {"shrink": 1.0}, {"shrink": 0.0}, {"max_iterations": -1}]
)
def test_options_validated(kwargs):
    with pytest.raises(ValueError):
        SolveOptions(**kwargs)


def test_full_solve_small_lambda_is_ee(grid):
    out = solve_full(linear_profile(grid, THETA), 0.2, THETA)
    _check_solution(out, 0.2)
    assert np.abs(out.profile.q3).max() < 1e-10


def test_full_solve_large_lambda_from_geodesic(grid):
    start = uniaxial_limit_profile(grid, THETA).profile
    out = gradient_flow_descent(start, 50.0, THETA)
    _check_solution(out, 50.0)
    assert out.profile.q3[grid.mid] > 0


def test_solution_is_a_fixed_point(ee_solutions):
    chi = ee_solutions[1.0].profile
    out = solve_ee(chi, 1.0, THETA)
    assert out.iterations <= 1
    assert np.abs(out.profile.q - chi.q).max() < 1e-12


@pytest.mark.parametrize("lam", [0.1, 0.5, 2.0, 10.0, 20.0])
def test_ee_structure(grid, lam):
    out = solve_ee_warm(lam, THETA, grid)
    _check_solution(out, lam)
    chi = out.profile
    assert np.abs(chi.q1 - 2 / 3).max() < 1e-8
    assert np.abs(chi.q2 + chi.q2[::-1]).max() < 1e-8


@pytest.mark.parametrize("lam", [0.5, 1.0, 2.0, 5.0, 10.0])
def test_q2_strictly_decreasing(ee_solutions, lam):
    assert np.all(np.diff(ee_solutions[lam].profile.q2) < 0)


def test_quadratic_convergence(grid):
    # Newton from a perturbed solution: res_{k+1} <= C res_k^2 over the last three steps
    from nemcell.discretization import ee_residual

    chi = solve_ee_warm(1.0, THETA, grid).profile
    x = grid.nodes[1:-1]
    bump = 0.5 * np.column_stack([np.cos(np.pi * x / 2), np.sin(np.pi * x)])
    p = chi.with_interior(chi.interior + bump)
    res = [np.abs(ee_residual(p, 1.0, THETA)).max()]
    for k in range(1, 5):
        out = solve_ee(p, 1.0, THETA, SolveOptions(max_iterations=k, residual_tolerance=1e-300))
        res.append(np.abs(ee_residual(out.profile, 1.0, THETA)).max())
    C = np.array(res[2:]) / np.array(res[1:-1]) ** 2
    assert res[-1] < 1e-5
    assert np.all(C < 1.0)


def test_newton_failure_is_reported(grid):
    out = solve_ee(linear_ee_profile(grid, THETA), 15.0, THETA, SolveOptions(max_iterations=3))
    assert not out.converged
    assert out.message


def test_gradient_flow_random_start_small_lambda(grid):
    rng = np.random.default_rng(11)
    from nemcell.newton_solver import _random_ball_start

    out = gradient_flow_descent(_random_ball_start(grid, THETA, rng), 0.2, THETA)
    _check_solution(out, 0.2)
    ref = solve_ee_warm(0.2, THETA, grid).profile
    assert l2_distance(out.profile, ref) < 1e-7
    hist = np.array(out.energy_history)
    assert np.all(np.diff(hist) <= 0)


def test_gradient_flow_selects_mirror_branch(grid):
    base = solve_ee_warm(5.0, THETA, grid).profile.embed()
    x = grid.nodes
    sols = []
    for s in (1, -1):
        q = base.q.copy()
        q[:, 2] += s * 0.5 * np.cos(np.pi * x / 2)
        out = gradient_flow_descent(Profile(grid, q), 5.0, THETA)
        _check_solution(out, 5.0)
        assert np.sign(out.profile.q3[grid.mid]) == s
        sols.append(out)
    assert abs(sols[0].energy - sols[1].energy) < 1e-10
    assert l2_distance(sols[0].profile, sols[1].profile) > 0.1
    assert np.abs(sols[0].profile.mirrored().q - sols[1].profile.q).max() < 1e-8


def test_multi_start_unique_small_lambda(grid):
    sols = multi_start(0.2, THETA, 20, seed=0, grid=grid)
    assert len(sols) == 1
    assert np.abs(sols[0].profile.q3).max() < 1e-8


def test_multi_start_finds_bd_at_lambda_five():
    g = Grid(201)
    sols = multi_start(5.0, THETA, 20, seed=1, grid=g)
    assert len(sols) >= 2
    q3 = sorted(round(float(s.profile.q3[g.mid]), 6) for s in sols)
    assert any(abs(v) > 0.5 for v in q3)


def test_multi_start_deterministic():
    g = Grid(101)
    a = multi_start(3.0, THETA, 6, seed=4, grid=g)
    b = multi_start(3.0, THETA, 6, seed=4, grid=g)
    assert len(a) == len(b)
    assert all(np.array_equal(x.profile.q, y.profile.q) for x, y in zip(a, b))


def test_multi_start_parallel_matches_serial():
    g = Grid(101)
    a = multi_start(3.0, THETA, 4, seed=2, grid=g, jobs=1)
    b = multi_start(3.0, THETA, 4, seed=2, grid=g, jobs=2)
    assert [x.energy for x in a] == [y.energy for y in b]


def test_resolve_jobs(monkeypatch):
    monkeypatch.setenv("NEMCELL_JOBS", "3")
    assert resolve_jobs(None) == 3
    assert resolve_jobs(2) == 2
    monkeypatch.delenv("NEMCELL_JOBS")
    assert resolve_jobs(None) == 1


def test_conjugation_maps_solutions_to_solutions(grid):
    out = gradient_flow_descent(uniaxial_limit_profile(grid, THETA).profile, 3.0, THETA)
    m = out.profile.mirrored()
    assert np.abs(el_residual(m, 3.0, THETA)).max() <= out.tolerance
    from nemcell.discretization import total_energy

    assert abs(total_energy(m, 3.0, THETA) - out.energy) < 1e-10
