"""Second variations at eigenvalue-exchange profiles and their smallest eigenvalues.

Phi acts on symmetry-preserving perturbations (h1, h2, 0), Psi on symmetry-breaking
ones (0, 0, h3).  Both are assembled from their pointwise coefficients

    Phi: (6 h1'^2 + 2 h2'^2)/lam^2 + 6(theta/3 + 4 q1 + 9 q1^2 + q2^2) h1^2
         + 2(theta/3 - 4 q1 + 3 q1^2 + 3 q2^2) h2^2 + 8 q2 (3 q1 - 2) h1 h2
    Psi: 2 h3'^2/lam^2 + 2(theta/3 - 4 q1 + 3 q1^2 + q2^2) h3^2

rather than from the bulk Hessian, so agreement with ``energy_hessian`` is a check.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg

from . import _extended, _kernels
from .discretization import BlockTridiagonal, EEProfile, Grid, Profile, check_lambda, energy_hessian
from .qtensor import check_theta

EPS = np.finfo(float).eps


@dataclass(frozen=True)
class QuadFormOperator:
    """Quadratic form v^T K v with lumped diagonal mass weights ``mass`` (n, b)."""

    stiffness: BlockTridiagonal
    mass: np.ndarray

    def __post_init__(self):
        if np.any(self.mass <= 0):
            raise ValueError("mass weights must be positive")
        if self.mass.shape != self.stiffness.diag.shape[:2]:
            raise ValueError("mass shape does not match the stiffness blocks")

    def value(self, v: np.ndarray) -> float:
        return self.stiffness.quad(np.reshape(v, self.mass.shape))

    def scaled(self) -> BlockTridiagonal:
        """M^{-1/2} K M^{-1/2}: a standard symmetric eigenproblem."""
        s = 1.0 / np.sqrt(self.mass)
        D = self.stiffness.diag * s[:, :, None] * s[:, None, :]
        E = self.stiffness.lower * s[1:, :, None] * s[:-1, None, :]
        return BlockTridiagonal(D, E)


@dataclass
class SpectrumResult:
    eigenvalue: float
    eigenfunction: np.ndarray  # (n_interior, b), normalized sum(mass * v^2) = 1
    resolution: float = 0.0
    extended: bool = False

    @property
    def resolved(self) -> bool:
        return self.extended or abs(self.eigenvalue) > self.resolution


class EigenSolverError(RuntimeError):
    pass


def _gershgorin(A: BlockTridiagonal) -> tuple[float, float]:
    D, E = A.diag, A.lower
    diag = np.einsum("irr->ir", D)
    radius = np.abs(D).sum(axis=2) - np.abs(diag)
    radius[1:] += np.abs(E).sum(axis=2)
    radius[:-1] += np.abs(E).sum(axis=1)
    return float((diag - radius).min()), float((diag + radius).max())


def smallest_eigenpair(op: QuadFormOperator, max_inverse_iterations: int = 50) -> SpectrumResult:
    """Smallest eigenvalue of K v = sigma M v with its eigenfunction.

    Bisection on the block Sturm count brackets the eigenvalue to rounding
    level; shifted inverse iteration from just below the bracket yields the
    eigenvector and a Rayleigh quotient, which is cross-checked against the count.
    """
    A = op.scaled()
    lo, hi = _gershgorin(A)
    norm = max(abs(lo), abs(hi), 1.0)
    width = 8.0 * EPS * norm
    a, b = lo - width, hi + width
    if _kernels.sturm_count(A.diag, A.lower, a) != 0:
        raise EigenSolverError("Sturm count inconsistent with Gershgorin bound")
    for _ in range(200):
        if b - a <= width:
            break
        m = 0.5 * (a + b)
        if _kernels.sturm_count(A.diag, A.lower, m) >= 1:
            b = m
        else:
            a = m
    shift = a - 4.0 * width
    ab, w = A.banded()
    ab = ab.copy()
    ab[w] -= shift
    n, bs = op.mass.shape
    x = np.ones(n * bs) / np.sqrt(n * bs)
    x += 1e-3 * np.cos(np.arange(n * bs))
    rq = np.nan
    for _ in range(max_inverse_iterations):
        try:
            y = linalg.solve_banded((w, w), ab, x, check_finite=False)
        except linalg.LinAlgError:
            ab[w] -= width
            continue
        y /= np.linalg.norm(y)
        new = float(y @ A.matvec(y))
        done = np.isfinite(rq) and abs(new - rq) <= 4.0 * EPS * norm
        x, rq = y, new
        if done:
            break
    if not np.isfinite(rq):
        raise EigenSolverError("inverse iteration did not produce a finite eigenvalue")
    # cross-check: no eigenvalue below the Rayleigh quotient beyond rounding
    if _kernels.sturm_count(A.diag, A.lower, rq - 64.0 * width) != 0 or not (a - 64 * width <= rq <= b + 64 * width):
        raise EigenSolverError("inverse iteration converged to a non-minimal eigenvalue")
    v = (x / np.sqrt(op.mass.ravel())).reshape(op.mass.shape)
    v /= np.sqrt(np.sum(op.mass * v**2))
    k = np.unravel_index(np.argmax(np.abs(v)), v.shape)
    if v[k] < 0:
        v = -v
    return SpectrumResult(rq, v, resolution=64.0 * width)


def dense_smallest_eigenvalue(op: QuadFormOperator) -> float:
    """Oracle: full dense eigensolve of the scaled matrix."""
    return float(np.linalg.eigvalsh(op.scaled().dense())[0])


# assembly -------------------------------------------------------------------

def phi_coefficients(q1: np.ndarray, q2: np.ndarray, theta: float):
    a1 = 6.0 * (theta / 3.0 + 4.0 * q1 + 9.0 * q1**2 + q2**2)
    a2 = 2.0 * (theta / 3.0 - 4.0 * q1 + 3.0 * q1**2 + 3.0 * q2**2)
    cross = 8.0 * q2 * (3.0 * q1 - 2.0)
    return a1, a2, cross


def psi_potential(q1: np.ndarray, q2: np.ndarray, theta: float) -> np.ndarray:
    return 2.0 * (theta / 3.0 - 4.0 * q1 + 3.0 * q1**2 + q2**2)


def assemble_phi(chi: EEProfile, lam: float, theta: float) -> QuadFormOperator:
    lam = check_lambda(lam)
    theta = check_theta(theta)
    h = chi.grid.h
    q1, q2 = chi.q1[1:-1], chi.q2[1:-1]
    n = q1.size
    a1, a2, cross = phi_coefficients(q1, q2, theta)
    s = np.array([6.0, 2.0]) / (lam**2 * h)
    D = np.empty((n, 2, 2))
    D[:, 0, 0] = 2.0 * s[0] + h * a1
    D[:, 1, 1] = 2.0 * s[1] + h * a2
    D[:, 0, 1] = D[:, 1, 0] = 0.5 * h * cross
    E = np.zeros((n - 1, 2, 2))
    E[:, 0, 0] = -s[0]
    E[:, 1, 1] = -s[1]
    return QuadFormOperator(BlockTridiagonal(D, E), np.full((n, 2), h))


def assemble_psi(chi: EEProfile, lam: float, theta: float, potential: np.ndarray | None = None) -> QuadFormOperator:
    """Psi operator.

    ``potential`` (scalar or interior nodes) replaces the bracket
    theta/3 - 4 q1 + 3 q1^2 + q2^2, which enters the form with a factor 2.
    """
    lam = check_lambda(lam)
    theta = check_theta(theta)
    if potential is None:
        V = psi_potential(chi.q1[1:-1], chi.q2[1:-1], theta)
    else:
        V = 2.0 * np.broadcast_to(np.asarray(potential, dtype=float), (chi.grid.n_interior,))
    return scalar_sturm_liouville(chi.grid, 2.0 / lam**2, V)


def scalar_sturm_liouville(grid: Grid, stiffness: float, potential: np.ndarray) -> QuadFormOperator:
    """Discretization of int(stiffness h'^2 + V h^2) with Dirichlet ends."""
    h = grid.h
    n = grid.n_interior
    D = (2.0 * stiffness / h + h * np.asarray(potential, dtype=float)).reshape(n, 1, 1)
    E = np.full((n - 1, 1, 1), -stiffness / h)
    return QuadFormOperator(BlockTridiagonal(D, E), np.full((n, 1), h))


# eigenvalues ------------------------------------------------------------------

def nu_spectrum(chi: EEProfile, lam: float, theta: float, extended: str = "auto") -> SpectrumResult:
    """Smallest Phi eigenvalue; ``extended`` in {"auto", "always", "never"}.

    With "auto", values below the double-precision resolution of the operator
    are recomputed in extended precision.
    """
    res = smallest_eigenpair(assemble_phi(chi, lam, theta))
    if extended == "always" or (extended == "auto" and not res.resolved):
        ext = _extended.smallest_phi_eigenvalue(chi, lam, theta)
        if ext.negative_count == 0:
            return SpectrumResult(ext.value, res.eigenfunction, res.resolution, extended=True)
        if not res.resolved:
            value = -max(abs(res.eigenvalue), np.finfo(float).tiny)
            return SpectrumResult(value, res.eigenfunction, res.resolution, extended=True)
    return res


def nu(chi: EEProfile, lam: float, theta: float, extended: str = "auto") -> float:
    return nu_spectrum(chi, lam, theta, extended).eigenvalue


def mu_spectrum(chi: EEProfile, lam: float, theta: float) -> SpectrumResult:
    return smallest_eigenpair(assemble_psi(chi, lam, theta))


def mu(chi: EEProfile, lam: float, theta: float) -> float:
    return mu_spectrum(chi, lam, theta).eigenvalue


def eta_spectrum(chi: EEProfile, lam: float, extended: str = "auto") -> SpectrumResult:
    """Smallest eigenvalue of the h2-block of Phi (theta = -8, q1 = 2/3 profile)."""
    op = assemble_phi(chi, lam, -8.0)
    block = QuadFormOperator(op.stiffness.sub([1]), op.mass[:, 1:])
    res = smallest_eigenpair(block)
    if extended == "always" or (extended == "auto" and not res.resolved):
        # at theta=-8 the h1-block is bounded below by 24, so nu and eta coincide
        ext = _extended.smallest_phi_eigenvalue(chi, lam, -8.0)
        if ext.negative_count == 0 and ext.value < 24.0:
            return SpectrumResult(ext.value, res.eigenfunction, res.resolution, extended=True)
    return res


def eta(lam: float, grid: Grid | None = None, extended: str = "auto") -> float:
    from .continuation import solve_ee_warm

    grid = grid or Grid(1001)
    chi = solve_ee_warm(lam, -8.0, grid).profile
    return eta_spectrum(chi, lam, extended).eigenvalue


def cross_term_check(p: Profile, hsp: np.ndarray, hsb: np.ndarray, lam: float, theta: float) -> float:
    """Mixed bilinear form D^2E(p)[(h1,h2,0), (0,0,h3)] for nodal perturbations."""
    hsp = np.asarray(hsp, dtype=float)
    hsb = np.asarray(hsb, dtype=float)
    n = p.grid.n_nodes
    if hsp.shape != (n, 2) or hsb.shape != (n,):
        raise ValueError("expected nodal arrays of shapes (n_nodes, 2) and (n_nodes,)")
    if np.any(hsp[[0, -1]] != 0) or np.any(hsb[[0, -1]] != 0):
        raise ValueError("perturbations must vanish at the boundary")
    a = np.zeros((n - 2, 3))
    a[:, :2] = hsp[1:-1]
    b = np.zeros((n - 2, 3))
    b[:, 2] = hsb[1:-1]
    return energy_hessian(p, lam, theta).quad(b, a)


def hessian_smallest_eigenvalue(p: Profile, lam: float, theta: float) -> float:
    """Smallest eigenvalue of the full discrete Hessian against the lumped mass h."""
    H = energy_hessian(p, lam, theta)
    op = QuadFormOperator(H, np.full(H.diag.shape[:2], p.grid.h))
    return smallest_eigenpair(op).eigenvalue
