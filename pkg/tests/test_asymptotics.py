import math

import numpy as np
import pytest

from conftest import THETA
from nemcell.asymptotics import (
    HeteroclinicError,
    front_energy,
    h1_distance,
    heteroclinic_solver,
    hessian_norm_sup,
    limit_minimizer,
    mu_infinity_estimate,
    rescaled_profile,
    uniaxial_limit_profile,
    uniqueness_radius,
)
from nemcell.discretization import Grid, Profile, linear_profile
from nemcell.newton_solver import multi_start
from nemcell.qtensor import components_to_matrix, q_plus, uniaxial_minimizer
from nemcell.stability import hessian_smallest_eigenvalue


@pytest.fixture(scope="module")
def het():
    return heteroclinic_solver(20.0, 4001)


def test_geodesic_profile(grid):
    Q = uniaxial_limit_profile(grid, THETA).profile
    assert Q.satisfies_bc(THETA)
    qp = q_plus(THETA)
    assert Q.q3[grid.mid] == pytest.approx(3 * qp, rel=1e-14)
    # every node is the uniaxial minimizer with the rotating director
    a = np.pi / 4 - np.pi * grid.nodes / 4
    n = np.column_stack([np.zeros_like(a), np.cos(a), np.sin(a)])
    assert np.allclose(components_to_matrix(Q.q), uniaxial_minimizer(n, THETA), atol=1e-14)


def test_h1_distance_properties(grid):
    a = uniaxial_limit_profile(grid, THETA).profile
    b = linear_profile(grid, THETA)
    assert h1_distance(a, a) == 0.0
    assert h1_distance(a, b) == pytest.approx(h1_distance(b, a))
    assert h1_distance(a, b) > 0
    with pytest.raises(ValueError):
        h1_distance(a, linear_profile(Grid(11), THETA))


def test_h1_distance_of_known_function():
    # q3 = 1 - x^2 against zero: |u|_H1^2 = 2 (int u'^2 + u^2) = 2 (8/3 + 16/15)
    g = Grid(2001)
    q = np.zeros((g.n_nodes, 3))
    q[:, 2] = 1 - g.nodes**2
    d = h1_distance(Profile(g, q), Profile(g, np.zeros_like(q)))
    assert d == pytest.approx(math.sqrt(2 * (8 / 3 + 16 / 15)), rel=1e-5)


def test_minimizers_approach_geodesic(grid):
    Q = uniaxial_limit_profile(grid, THETA).profile
    d, q3 = [], []
    for lam in (5.0, 10.0, 20.0, 50.0):
        out = limit_minimizer(lam, THETA, grid)
        assert out.converged
        d.append(h1_distance(out.profile, Q))
        q3.append(out.profile.q3[grid.mid])
    assert np.all(np.diff(d) < 0) and min(d) >= 0
    assert abs(q3[-1] - 2.0) < 0.2


def test_heteroclinic_matches_tanh(het):
    nodes = np.abs(het.y) <= 5
    assert np.abs(het.values[nodes] + 2 * np.tanh(math.sqrt(2) * het.y[nodes])).max() < 1e-6
    y = np.linspace(-5, 5, 2001) + 0.0037  # off the nodes
    assert np.abs(het(y) + 2 * np.tanh(math.sqrt(2) * y)).max() < 1e-6
    assert het.values[het.y.size // 2] == 0.0
    assert np.all(np.diff(het.values) <= 4 * np.finfo(float).eps)  # ulp noise in the saturated tails
    core = np.abs(het.y) <= 10  # beyond this the front equals +-2 in double precision
    assert np.all(np.diff(het.values[core]) < 0)
    assert np.array_equal(het.values, -het.values[::-1])
    assert np.abs(het.values).max() <= 2.0
    assert het(-100.0) == 2.0 and het(100.0) == -2.0


def test_tanh_solves_the_ode():
    # symbolic check of the oracle: q'' - (q^2 - 4) q vanishes for q = -2 tanh(sqrt(2) y)
    import sympy as sp

    y = sp.symbols("y", real=True)
    q = -2 * sp.tanh(sp.sqrt(2) * y)
    assert sp.simplify(sp.diff(q, y, 2) - (q**2 - 4) * q) == 0


def test_heteroclinic_validation():
    with pytest.raises(ValueError):
        heteroclinic_solver(5.0)
    with pytest.raises(ValueError):
        heteroclinic_solver(20.0, 4000)
    with pytest.raises(HeteroclinicError):
        heteroclinic_solver(20.0, 4001, max_iter=1)


def test_front_energy_stabilizes():
    e15 = front_energy(heteroclinic_solver(15.0, 3001))
    e20 = front_energy(heteroclinic_solver(20.0, 4001))
    assert abs(e20 - e15) < 1e-8
    assert e20 == pytest.approx(16 * math.sqrt(2), rel=1e-4)


def test_mu_limit_estimates(het):
    est = mu_infinity_estimate(het)
    # undoubled Rayleigh quotient of h = q': -(int q^2 q'^2)/(int q'^2) = -(64 sqrt2/15)/(16 sqrt2/3) = -4/5 * 2
    assert est.quotient == pytest.approx(-1.6, abs=1e-3)
    assert est.test_value == pytest.approx(2 * est.quotient)
    assert est.eigen_value == pytest.approx(-4.0, abs=1e-3)
    assert est.eigen_value <= est.test_value < 0


def test_closed_form_integrals():
    # oracle for the quotient: integrals of q = -2 tanh(sqrt2 y) on the line
    from scipy.integrate import quad

    dq = lambda y: -2 * math.sqrt(2) / math.cosh(math.sqrt(2) * y) ** 2
    q = lambda y: -2 * math.tanh(math.sqrt(2) * y)
    a = quad(lambda y: dq(y) ** 2, -30, 30, limit=200)[0]
    b = quad(lambda y: q(y) ** 2 * dq(y) ** 2, -30, 30, limit=200)[0]
    assert a == pytest.approx(16 * math.sqrt(2) / 3, rel=1e-10)
    assert b == pytest.approx(64 * math.sqrt(2) / 15, rel=1e-10)


def test_rescaled_profile(ee_solutions, het):
    y = np.linspace(-3, 3, 601)
    vals = {}
    for lam in (2.0, 5.0, 10.0):
        r = rescaled_profile(ee_solutions[lam].profile, lam)
        assert r(0.0) == pytest.approx(0.0, abs=1e-12)
        assert np.abs(r.values).max() <= 2.0 + 1e-12
        assert r(-lam - 1) == 2.0 and r(lam + 1) == -2.0
        vals[lam] = r(y)
    assert np.abs(vals[10.0] - het(y)).max() < 1e-3


def test_rescaled_family_monotone(grid):
    # resolved range at N = 1001: the lambda-increments exceed the O(h^2 lambda^2) error
    from nemcell.continuation import solve_ee_warm

    ys = np.array([0.25, 0.5, 1.0, 1.5])
    rows = [rescaled_profile(solve_ee_warm(lam, THETA, grid).profile, lam)(ys) for lam in (1.0, 1.5, 2.0, 3.0)]
    assert np.all(np.diff(np.array(rows), axis=0) >= 0)


def test_rescaled_family_large_lambda_error_is_second_order():
    # beyond lambda ~ 4 the increments drop below the discretization error, which shrinks 16x per 4x refinement
    from nemcell.continuation import solve_ee_warm

    ref = -2 * np.tanh(math.sqrt(2) * 0.25)
    errs = [abs(rescaled_profile(solve_ee_warm(6.0, THETA, Grid(n)).profile, 6.0)(0.25) - ref) for n in (1001, 4001)]
    assert 12 < errs[0] / errs[1] < 20


def test_certificate(grid):
    c = uniqueness_radius(THETA)
    assert c.c1 == pytest.approx(math.pi**2 / 32, rel=1e-15)
    assert c.c1 > 0 and c.c2 > 0
    assert c.lambda0 == math.sqrt(c.c1 / (2 * c.c2))
    assert c.bound_radius == max(c.radial_radius, c.boundary_norm)
    assert c.boundary_norm == pytest.approx(2 * math.sqrt(6) * q_plus(THETA))
    d = c.as_dict()
    assert {"theta", "c1", "c2", "bound_radius", "lambda0", "resolution"} <= set(d)


def test_certificate_monotone_in_theta():
    l0 = [uniqueness_radius(t).lambda0 for t in (-8.0, -12.0, -16.0)]
    assert l0[0] > l0[1] > l0[2]


def test_hessian_sup_is_attained_and_resolution_stable():
    c_coarse = hessian_norm_sup(THETA, 3.0, resolution=31)
    c_fine = hessian_norm_sup(THETA, 3.0, resolution=61)
    assert c_fine >= c_coarse * (1 - 1e-12)
    assert c_fine == pytest.approx(c_coarse, rel=1e-2)


def test_uniqueness_below_lambda0(grid):
    c = uniqueness_radius(THETA)
    for frac in (0.3, 0.6, 0.9):
        lam = frac * c.lambda0
        sols = multi_start(lam, THETA, 5 if frac < 0.9 else 20, seed=0, grid=grid)
        assert len(sols) == 1
        assert hessian_smallest_eigenvalue(sols[0].profile, lam, THETA) > 0
