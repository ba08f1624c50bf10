"""Uniform-grid discretization of the cell energy and its derivatives.

Energy:  E = sum_edges (1/lam^2) sum_c k_c (dq_c)^2 / h  +  trapezoid sum of f,
with elastic weights k = (3, 1, 1) (half the metric weights 6, 2, 2).  Unknowns
are interior nodal values; Dirichlet rows are eliminated so every Hessian is a
symmetric block-tridiagonal matrix with one block per interior node.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .qtensor import MaterialConstants, check_theta, frobenius_norm

ELASTIC_WEIGHTS = np.array([3.0, 1.0, 1.0])


def check_lambda(lam: float) -> float:
    lam = float(lam)
    if not np.isfinite(lam) or lam <= 0.0:
        raise ValueError(f"lambda must be positive, got {lam!r}")
    return lam


@dataclass(frozen=True)
class Grid:
    n_nodes: int

    def __post_init__(self):
        n = self.n_nodes
        if int(n) != n or n < 3 or n % 2 == 0:
            raise ValueError(f"n_nodes must be an odd integer >= 3, got {n!r}")

    @property
    def h(self) -> float:
        return 2.0 / (self.n_nodes - 1)

    @property
    def nodes(self) -> np.ndarray:
        return np.linspace(-1.0, 1.0, self.n_nodes)

    @property
    def n_interior(self) -> int:
        return self.n_nodes - 2

    @property
    def mid(self) -> int:
        return (self.n_nodes - 1) // 2

    def trapezoid_weights(self) -> np.ndarray:
        w = np.full(self.n_nodes, self.h)
        w[0] = w[-1] = self.h / 2.0
        return w


@dataclass(frozen=True)
class BoundaryData:
    left: np.ndarray
    right: np.ndarray


def boundary_data(theta: float) -> BoundaryData:
    qp = MaterialConstants.from_theta(theta).q_plus
    return BoundaryData(np.array([qp, 3.0 * qp, 0.0]), np.array([qp, -3.0 * qp, 0.0]))


@dataclass(frozen=True)
class Profile:
    """Nodal values of (q1, q2, q3); ``q`` has shape (n_nodes, 3)."""

    grid: Grid
    q: np.ndarray = field(repr=False)

    def __post_init__(self):
        q = np.array(self.q, dtype=float)
        if q.shape != (self.grid.n_nodes, 3):
            raise ValueError(f"expected shape {(self.grid.n_nodes, 3)}, got {q.shape}")
        q.setflags(write=False)
        object.__setattr__(self, "q", q)

    q1 = property(lambda self: self.q[:, 0])
    q2 = property(lambda self: self.q[:, 1])
    q3 = property(lambda self: self.q[:, 2])

    @property
    def interior(self) -> np.ndarray:
        return self.q[1:-1]

    def with_interior(self, u: np.ndarray) -> "Profile":
        q = self.q.copy()
        q[1:-1] = np.reshape(u, (-1, 3))
        return Profile(self.grid, q)

    def mirrored(self) -> "Profile":
        """Image under the q3 -> -q3 conjugation."""
        return Profile(self.grid, self.q * np.array([1.0, 1.0, -1.0]))

    def to_ee(self) -> "EEProfile":
        return EEProfile(self.grid, self.q[:, :2])

    def satisfies_bc(self, theta: float, tol: float = 0.0) -> bool:
        bc = boundary_data(theta)
        return bool(
            np.all(np.abs(self.q[0] - bc.left) <= tol) and np.all(np.abs(self.q[-1] - bc.right) <= tol)
        )


@dataclass(frozen=True)
class EEProfile:
    """Eigenvalue-exchange profile: (q1, q2) with q3 identically zero."""

    grid: Grid
    q: np.ndarray = field(repr=False)

    def __post_init__(self):
        q = np.array(self.q, dtype=float)
        if q.shape != (self.grid.n_nodes, 2):
            raise ValueError(f"expected shape {(self.grid.n_nodes, 2)}, got {q.shape}")
        q.setflags(write=False)
        object.__setattr__(self, "q", q)

    q1 = property(lambda self: self.q[:, 0])
    q2 = property(lambda self: self.q[:, 1])

    @property
    def interior(self) -> np.ndarray:
        return self.q[1:-1]

    def with_interior(self, u: np.ndarray) -> "EEProfile":
        q = self.q.copy()
        q[1:-1] = np.reshape(u, (-1, 2))
        return EEProfile(self.grid, q)

    def embed(self) -> Profile:
        return Profile(self.grid, np.column_stack([self.q, np.zeros(self.grid.n_nodes)]))

    def satisfies_bc(self, theta: float, tol: float = 0.0) -> bool:
        return self.embed().satisfies_bc(theta, tol)


def linear_profile(grid: Grid, theta: float) -> Profile:
    bc = boundary_data(theta)
    s = (grid.nodes + 1.0) / 2.0
    return Profile(grid, np.outer(1.0 - s, bc.left) + np.outer(s, bc.right))


def linear_ee_profile(grid: Grid, theta: float) -> EEProfile:
    return linear_profile(grid, theta).to_ee()


@dataclass(frozen=True)
class BlockTridiagonal:
    """Symmetric block-tridiagonal matrix: ``diag`` (n,b,b), ``lower`` (n-1,b,b)."""

    diag: np.ndarray
    lower: np.ndarray

    @property
    def n_blocks(self) -> int:
        return self.diag.shape[0]

    @property
    def block_size(self) -> int:
        return self.diag.shape[1]

    def matvec(self, v: np.ndarray) -> np.ndarray:
        shape = np.shape(v)
        v = np.reshape(v, (self.n_blocks, self.block_size))
        return _kernels.blocks_matvec(self.diag, self.lower, v).reshape(shape)

    def quad(self, v: np.ndarray, w: np.ndarray | None = None) -> float:
        w = v if w is None else w
        return float(np.vdot(np.ravel(w), np.ravel(self.matvec(v))))

    def dense(self) -> np.ndarray:
        return _kernels.blocks_to_dense(self.diag, self.lower)

    def banded(self) -> tuple[np.ndarray, int]:
        return _kernels.blocks_to_banded(self.diag, self.lower)

    def upper_banded(self) -> np.ndarray:
        return _kernels.blocks_to_upper_banded(self.diag, self.lower)

    def sub(self, comps) -> "BlockTridiagonal":
        comps = np.asarray(comps)
        ix = np.ix_(np.arange(self.n_blocks), comps, comps)
        ixl = np.ix_(np.arange(self.n_blocks - 1), comps, comps)
        return BlockTridiagonal(self.diag[ix], self.lower[ixl])


# full system ------------------------------------------------------------------

def _fields(q: np.ndarray, theta: float):
    consts = MaterialConstants.from_theta(theta)
    return _kernels.bulk_fields(q, consts.theta, consts.c_theta)


def total_energy(p: Profile, lam: float, theta: float) -> float:
    lam = check_lambda(lam)
    theta = check_theta(theta)
    h = p.grid.h
    dq = np.diff(p.q, axis=0)
    elastic = float(np.sum(dq**2 @ ELASTIC_WEIGHTS)) / (lam**2 * h)
    f, _, _ = _fields(p.q, theta)
    return elastic + float(np.dot(p.grid.trapezoid_weights(), f))


def energy_gradient_raw(p: Profile, lam: float, theta: float) -> np.ndarray:
    """Exact partial derivatives of ``total_energy`` w.r.t. interior values, (n-2, 3)."""
    lam = check_lambda(lam)
    theta = check_theta(theta)
    h = p.grid.h
    q = p.q
    lap = 2.0 * q[1:-1] - q[:-2] - q[2:]
    _, g, _ = _fields(q[1:-1], theta)
    return (2.0 / (lam**2 * h)) * lap * ELASTIC_WEIGHTS + h * g


def energy_gradient(p: Profile, lam: float, theta: float) -> np.ndarray:
    """L^2 gradient per interior node: raw gradient divided by the lumped mass h.

    Equals -(2k/lam^2) q'' + grad f with the central second difference.
    """
    return energy_gradient_raw(p, lam, theta) / p.grid.h


def el_residual(p: Profile, lam: float, theta: float) -> np.ndarray:
    """Scaled Euler-Lagrange residual -q'' + lam^2 (grad f)/(2k), per interior node.

    This is the convergence measure used by the solvers: its rounding floor is
    independent of lambda, unlike the 1/lam^2 form.
    """
    lam = check_lambda(lam)
    return energy_gradient(p, lam, theta) * lam**2 / (2.0 * ELASTIC_WEIGHTS)


def energy_hessian(p: Profile, lam: float, theta: float) -> BlockTridiagonal:
    """Hessian of ``total_energy`` w.r.t. interior values (3x3 blocks)."""
    lam = check_lambda(lam)
    theta = check_theta(theta)
    h = p.grid.h
    n = p.grid.n_interior
    _, _, H = _fields(p.q[1:-1], theta)
    stiff = 2.0 * ELASTIC_WEIGHTS / (lam**2 * h)
    diag = h * H
    diag[:, [0, 1, 2], [0, 1, 2]] += 2.0 * stiff
    lower = np.zeros((n - 1, 3, 3))
    lower[:, [0, 1, 2], [0, 1, 2]] = -stiff
    return BlockTridiagonal(diag, lower)


# eigenvalue-exchange restriction ------------------------------------------------

def ee_energy(p: EEProfile, lam: float, theta: float) -> float:
    return total_energy(p.embed(), lam, theta)


def ee_gradient_raw(p: EEProfile, lam: float, theta: float) -> np.ndarray:
    return energy_gradient_raw(p.embed(), lam, theta)[:, :2]


def ee_gradient(p: EEProfile, lam: float, theta: float) -> np.ndarray:
    return energy_gradient(p.embed(), lam, theta)[:, :2]


def ee_residual(p: EEProfile, lam: float, theta: float) -> np.ndarray:
    return el_residual(p.embed(), lam, theta)[:, :2]


def ee_hessian(p: EEProfile, lam: float, theta: float) -> BlockTridiagonal:
    return energy_hessian(p.embed(), lam, theta).sub([0, 1])


def nodal_norms(p: Profile) -> np.ndarray:
    """Frobenius norm of Q at every node."""
    return frobenius_norm(p.q)


def l2_distance(a, b) -> float:
    """Discrete L^2 distance (lumped mass h, Frobenius metric) between two profiles."""
    qa = a.embed().q if isinstance(a, EEProfile) else a.q
    qb = b.embed().q if isinstance(b, EEProfile) else b.q
    if a.grid != b.grid:
        raise ValueError("profiles live on different grids")
    d = frobenius_norm(qa - qb)
    return float(np.sqrt(np.dot(a.grid.trapezoid_weights(), d**2)))
