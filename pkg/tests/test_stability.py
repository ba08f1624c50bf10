import numpy as np
import pytest

from conftest import THETA, random_profile
from nemcell import _extended
from nemcell.continuation import solve_ee_warm
from nemcell.discretization import Grid, ee_energy, energy_hessian, total_energy
from nemcell.stability import (
    EigenSolverError,
    QuadFormOperator,
    assemble_phi,
    assemble_psi,
    cross_term_check,
    dense_smallest_eigenvalue,
    eta,
    eta_spectrum,
    mu,
    nu,
    nu_spectrum,
    phi_coefficients,
    scalar_sturm_liouville,
    smallest_eigenpair,
)


def _second_difference(fun, eps=1e-4):
    return (fun(eps) - 2 * fun(0.0) + fun(-eps)) / eps**2


def test_phi_block_diagonal_at_minus_eight(ee_solutions):
    chi = ee_solutions[2.0].profile
    _, _, cross = phi_coefficients(chi.q1, chi.q2, THETA)
    assert np.abs(cross).max() < 1e-12
    op = assemble_phi(chi, 2.0, THETA)
    assert np.abs(op.stiffness.diag[:, 0, 1]).max() < 1e-14


def test_phi_equals_ee_hessian_form_and_energy_difference():
    g = Grid(201)
    theta = -3.0
    rng = np.random.default_rng(2)
    chi = random_profile(g, theta, rng).to_ee()
    lam = 1.7
    op = assemble_phi(chi, lam, theta)
    from nemcell.discretization import ee_hessian

    H = ee_hessian(chi, lam, theta)
    for _ in range(3):
        v = rng.standard_normal((g.n_interior, 2))
        assert op.value(v) == pytest.approx(H.quad(v), rel=1e-12)
        fd = _second_difference(lambda e: ee_energy(chi.with_interior(chi.interior + e * v), lam, theta))
        assert op.value(v) == pytest.approx(fd, rel=1e-6)
    assert op.value(np.zeros((g.n_interior, 2))) == 0.0


def test_psi_matches_q3_block_and_energy(ee_solutions):
    chi = ee_solutions[1.0].profile
    op = assemble_psi(chi, 1.0, THETA)
    H = energy_hessian(chi.embed(), 1.0, THETA)
    assert np.allclose(op.stiffness.diag[:, 0, 0], H.diag[:, 2, 2], rtol=1e-14)
    assert np.allclose(op.stiffness.lower[:, 0, 0], H.lower[:, 2, 2], rtol=1e-14)
    rng = np.random.default_rng(0)
    w = rng.standard_normal(chi.grid.n_interior)
    p = chi.embed()

    def energy_along(e):
        u = p.interior.copy()
        u[:, 2] += e * w
        return total_energy(p.with_interior(u), 1.0, THETA)

    assert op.value(w) == pytest.approx(_second_difference(energy_along), rel=1e-6)
    # theta = -8, q1 = 2/3: the potential is 2 (q2^2 - 4)
    V = (op.stiffness.diag[:, 0, 0] - 2 * 2 / chi.grid.h) / chi.grid.h
    assert np.allclose(V, 2 * (chi.q2[1:-1] ** 2 - 4), atol=1e-8)


@pytest.mark.parametrize("lam, w", [(1.0, 0.0), (2.0, 0.0), (1.0, -3.0), (0.5, 2.5)])
def test_constant_potential_spectrum(lam, w):
    g = Grid(1001)
    from nemcell.discretization import EEProfile

    chi = EEProfile(g, np.zeros((g.n_nodes, 2)))
    res = smallest_eigenpair(assemble_psi(chi, lam, THETA, potential=w))
    exact = 2 * (np.pi / 2) ** 2 / lam**2 + 2 * w
    assert res.eigenvalue == pytest.approx(exact, abs=2 * (np.pi / 2) ** 4 * g.h**2 / lam**2)
    v = res.eigenfunction[:, 0]
    assert np.all(v > 0)


def test_zero_potential_is_second_order():
    errs = []
    for n in (51, 101, 201):
        g = Grid(n)
        op = scalar_sturm_liouville(g, 2.0, np.zeros(g.n_interior))
        errs.append(smallest_eigenpair(op).eigenvalue - 2 * (np.pi / 2) ** 2)
    assert 3.9 < errs[0] / errs[1] < 4.1 and 3.9 < errs[1] / errs[2] < 4.1


@pytest.mark.parametrize("seed", range(10))
def test_eigensolver_matches_dense(seed):
    g = Grid(51)
    rng = np.random.default_rng(seed)
    V = rng.uniform(-30, 30, g.n_interior)
    op = scalar_sturm_liouville(g, 2.0 / rng.uniform(0.3, 3) ** 2, V)
    res = smallest_eigenpair(op)
    assert res.eigenvalue == pytest.approx(dense_smallest_eigenvalue(op), abs=1e-10)
    v = res.eigenfunction
    rq = op.value(v) / np.sum(op.mass * v**2)
    assert rq == pytest.approx(res.eigenvalue, rel=1e-10)
    assert np.all(v[:, 0] > 0)


def test_block_eigensolver_matches_dense():
    g = Grid(51)
    rng = np.random.default_rng(7)
    chi = random_profile(g, -2.0, rng, amplitude=1.0).to_ee()
    op = assemble_phi(chi, 2.0, -2.0)
    res = smallest_eigenpair(op)
    assert res.eigenvalue == pytest.approx(dense_smallest_eigenvalue(op), abs=1e-10)
    v = res.eigenfunction
    assert op.value(v) / np.sum(op.mass * v**2) == pytest.approx(res.eigenvalue, rel=1e-10)


def test_quad_form_operator_validation():
    g = Grid(11)
    op = scalar_sturm_liouville(g, 1.0, np.zeros(g.n_interior))
    with pytest.raises(ValueError):
        QuadFormOperator(op.stiffness, -op.mass)
    with pytest.raises(ValueError):
        QuadFormOperator(op.stiffness, np.ones((3, 1)))


def test_nu_positive(ee_solutions):
    for lam in (0.5, 1.0, 2.0, 5.0, 10.0):
        chi = ee_solutions[lam].profile
        assert nu(chi, lam, THETA) > 0


def test_nu_extended_precision_agrees_where_double_resolves(ee_solutions):
    # at lambda = 2 double precision resolves nu; the extended path must agree
    chi = ee_solutions[2.0].profile
    dbl = nu_spectrum(chi, 2.0, THETA, extended="never")
    assert dbl.resolved
    ext = _extended.smallest_phi_eigenvalue(chi, 2.0, THETA)
    assert ext.negative_count == 0
    assert ext.value == pytest.approx(dbl.eigenvalue, rel=1e-8)


def test_nu_below_double_resolution_is_certified(ee_solutions):
    chi = ee_solutions[10.0].profile
    dbl = nu_spectrum(chi, 10.0, THETA, extended="never")
    assert not dbl.resolved
    res = nu_spectrum(chi, 10.0, THETA)
    assert res.extended and res.eigenvalue > 0
    # translation-mode estimate 384 exp(-4 sqrt(2) lambda), within a factor 3
    est = 384 * np.exp(-4 * np.sqrt(2) * 10.0)
    assert est / 3 < res.eigenvalue < 3 * est


def test_mu_sign_at_extremes(grid):
    assert mu(solve_ee_warm(0.2, THETA, grid).profile, 0.2, THETA) > 0
    assert mu(solve_ee_warm(20.0, THETA, grid).profile, 20.0, THETA) < 0
    assert mu(solve_ee_warm(50.0, THETA, grid).profile, 50.0, THETA) == pytest.approx(-4.0, abs=0.1)


def test_eta(grid):
    vals = [eta(lam, grid) for lam in (0.1, 0.5, 1.0, 2.0, 5.0)]
    assert all(v > 0 for v in vals)
    assert np.all(np.diff(vals) < 0)
    assert vals[0] > 2 * (np.pi / 2) ** 2 / 0.1**2 - 8.0 * 2  # Poincare shift dominates


def test_eta_equals_nu_at_minus_eight(ee_solutions):
    chi = ee_solutions[1.0].profile
    assert eta_spectrum(chi, 1.0).eigenvalue == pytest.approx(nu(chi, 1.0, THETA), rel=1e-10)


def test_cross_term_vanishes_at_ee(ee_solutions):
    rng = np.random.default_rng(0)
    for lam in (0.5, 2.0):
        p = ee_solutions[lam].profile.embed()
        n = p.grid.n_nodes
        for _ in range(5):
            a = np.zeros((n, 2))
            a[1:-1] = rng.standard_normal((n - 2, 2))
            b = np.zeros(n)
            b[1:-1] = rng.standard_normal(n - 2)
            assert cross_term_check(p, a, b, lam, THETA) == 0.0
        assert cross_term_check(p, np.zeros((n, 2)), b, lam, THETA) == 0.0


def test_cross_term_nonzero_off_ee():
    g = Grid(101)
    rng = np.random.default_rng(9)
    p = random_profile(g, THETA, rng)
    a = np.zeros((g.n_nodes, 2))
    a[1:-1] = rng.standard_normal((g.n_nodes - 2, 2))
    b = np.zeros(g.n_nodes)
    b[1:-1] = rng.standard_normal(g.n_nodes - 2)
    val = cross_term_check(p, a, b, 1.0, THETA)
    assert abs(val) > 1e-3
    # directional difference of the gradient along (0, 0, h3), paired with (h1, h2, 0)
    from nemcell.discretization import energy_gradient_raw

    A = np.column_stack([a, np.zeros(g.n_nodes)])[1:-1]
    B = np.column_stack([np.zeros((g.n_nodes, 2)), b])[1:-1]
    e = 1e-6
    gp = energy_gradient_raw(p.with_interior(p.interior + e * B), 1.0, THETA)
    gm = energy_gradient_raw(p.with_interior(p.interior - e * B), 1.0, THETA)
    fd = float(np.sum(A * (gp - gm))) / (2 * e)
    assert val == pytest.approx(fd, rel=1e-6)
    with pytest.raises(ValueError):
        bad = b.copy()
        bad[0] = 1.0
        cross_term_check(p, a, bad, 1.0, THETA)


def test_eigensolver_error_type():
    assert issubclass(EigenSolverError, RuntimeError)
