"""Bulk Landau-de Gennes potential in the reduced (q1, q2, q3) parameterization.

The Q-tensor is restricted to the form

    Q = [[-2 q1, 0, 0], [0, q1 - q2, q3], [0, q3, q1 + q2]]

so that |Q|^2 = 6 q1^2 + 2 q2^2 + 2 q3^2.  Gradients below are plain partial
derivatives in component space; divide by ``METRIC_WEIGHTS`` to get the
right-hand sides of the component Euler-Lagrange system.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

METRIC_WEIGHTS = np.array([6.0, 2.0, 2.0])
MATRIX_SHAPE_TOL = 1e-10


def check_theta(theta: float) -> float:
    theta = float(theta)
    if not math.isfinite(theta) or theta >= 1.0:
        raise ValueError(f"reduced temperature must satisfy theta < 1, got {theta!r}")
    return theta


def q_plus(theta: float) -> float:
    """Scalar order parameter of the uniaxial minimizers, (1 + sqrt(1 - theta))/6."""
    theta = check_theta(theta)
    return (1.0 + math.sqrt(1.0 - theta)) / 6.0


def bulk_offset(theta: float) -> float:
    """Constant c(theta) that makes the minimum of the bulk density zero."""
    qp = q_plus(theta)
    return -(4.0 * theta * qp**2 - 32.0 * qp**3 + 72.0 * qp**4)


@dataclass(frozen=True)
class MaterialConstants:
    theta: float
    q_plus: float
    c_theta: float
    max_norm: float

    @classmethod
    def from_theta(cls, theta: float) -> "MaterialConstants":
        qp = q_plus(theta)
        return cls(float(theta), qp, bulk_offset(theta), 2.0 * math.sqrt(6.0) * qp)


# Scalar formulas. Written with plain arithmetic so they accept floats, numpy
# arrays and mpmath numbers alike.

def density_scalar(q1, q2, q3, theta, c):
    s = 3 * q1 * q1 + q2 * q2 + q3 * q3
    return theta / 3 * s + 4 * q1 * (q1 * q1 - q2 * q2 - q3 * q3) + s * s / 2 + c


def gradient_scalar(q1, q2, q3, theta):
    s = 3 * q1 * q1 + q2 * q2 + q3 * q3
    g1 = 2 * theta * q1 + 12 * q1 * q1 - 4 * (q2 * q2 + q3 * q3) + 6 * q1 * s
    g2 = 2 * theta / 3 * q2 - 8 * q1 * q2 + 2 * q2 * s
    g3 = 2 * theta / 3 * q3 - 8 * q1 * q3 + 2 * q3 * s
    return g1, g2, g3


def hessian_scalar(q1, q2, q3, theta):
    """Upper-triangle entries (h11, h12, h13, h22, h23, h33)."""
    s = 3 * q1 * q1 + q2 * q2 + q3 * q3
    h11 = 2 * theta + 24 * q1 + 6 * s + 36 * q1 * q1
    h12 = q2 * (12 * q1 - 8)
    h13 = q3 * (12 * q1 - 8)
    base = 2 * theta / 3 - 8 * q1 + 2 * s
    h22 = base + 4 * q2 * q2
    h23 = 4 * q2 * q3
    h33 = base + 4 * q3 * q3
    return h11, h12, h13, h22, h23, h33


def _split(q):
    q = np.asarray(q, dtype=float)
    if q.shape[-1] != 3:
        raise ValueError("last axis must hold (q1, q2, q3)")
    return q[..., 0], q[..., 1], q[..., 2]


def bulk_energy(q, theta: float):
    """Bulk density f(q1, q2, q3); broadcasts over leading axes."""
    theta = check_theta(theta)
    q1, q2, q3 = _split(q)
    out = density_scalar(q1, q2, q3, theta, bulk_offset(theta))
    return float(out) if np.ndim(out) == 0 else out


def bulk_gradient(q, theta: float) -> np.ndarray:
    theta = check_theta(theta)
    q1, q2, q3 = _split(q)
    return np.stack(np.broadcast_arrays(*gradient_scalar(q1, q2, q3, theta)), axis=-1)


def bulk_hessian(q, theta: float) -> np.ndarray:
    theta = check_theta(theta)
    q1, q2, q3 = _split(q)
    h11, h12, h13, h22, h23, h33 = np.broadcast_arrays(*hessian_scalar(q1, q2, q3, theta))
    rows = [
        np.stack([h11, h12, h13], axis=-1),
        np.stack([h12, h22, h23], axis=-1),
        np.stack([h13, h23, h33], axis=-1),
    ]
    return np.stack(rows, axis=-2)


def el_rhs(q, theta: float) -> np.ndarray:
    """Right-hand sides of the component Euler-Lagrange system (gradient / weights)."""
    return bulk_gradient(q, theta) / METRIC_WEIGHTS


def components_to_matrix(q) -> np.ndarray:
    q1, q2, q3 = _split(q)
    shape = np.shape(q1)
    Q = np.zeros(shape + (3, 3))
    Q[..., 0, 0] = -2.0 * q1
    Q[..., 1, 1] = q1 - q2
    Q[..., 2, 2] = q1 + q2
    Q[..., 1, 2] = q3
    Q[..., 2, 1] = q3
    return Q


def matrix_to_components(Q, tol: float = MATRIX_SHAPE_TOL) -> np.ndarray:
    Q = np.asarray(Q, dtype=float)
    if Q.shape[-2:] != (3, 3):
        raise ValueError("expected a 3x3 matrix")
    scale = max(1.0, float(np.max(np.abs(Q))))
    bad = (
        np.abs(Q - np.swapaxes(Q, -1, -2)).max() > tol * scale
        or np.abs(np.trace(Q, axis1=-2, axis2=-1)).max() > tol * scale
        or np.abs(Q[..., 0, 1]).max() > tol * scale
        or np.abs(Q[..., 0, 2]).max() > tol * scale
    )
    if bad:
        raise ValueError("matrix must be symmetric, traceless, with zero (1,2) and (1,3) entries")
    q1 = -Q[..., 0, 0] / 2.0
    q2 = (Q[..., 2, 2] - Q[..., 1, 1]) / 2.0
    q3 = (Q[..., 1, 2] + Q[..., 2, 1]) / 2.0
    return np.stack([q1, q2, q3], axis=-1)


def frobenius_norm(q) -> np.ndarray:
    q1, q2, q3 = _split(q)
    return np.sqrt(6.0 * q1**2 + 2.0 * q2**2 + 2.0 * q3**2)


def matrix_density(Q, theta: float):
    """Matrix form (theta/6)|Q|^2 - (2/3) tr Q^3 + (1/8)|Q|^4 + c(theta)."""
    theta = check_theta(theta)
    Q = np.asarray(Q, dtype=float)
    n2 = np.einsum("...ij,...ij->...", Q, Q)
    tr3 = np.einsum("...ij,...jk,...ki->...", Q, Q, Q)
    return theta / 6.0 * n2 - 2.0 / 3.0 * tr3 + n2**2 / 8.0 + bulk_offset(theta)


def uniaxial_minimizer(n, theta: float) -> np.ndarray:
    """Matrix 6 q_+ (n n^T - I/3) for a unit director n."""
    n = np.asarray(n, dtype=float)
    n = n / np.linalg.norm(n, axis=-1, keepdims=True)
    return 6.0 * q_plus(theta) * (np.einsum("...i,...j->...ij", n, n) - np.eye(3) / 3.0)


def radial_radius(theta: float, n_directions: int = 10_000, seed: int = 0) -> float:
    """Smallest Frobenius radius beyond which grad f . q >= 0 along sampled directions.

    Along q = r u with |u| = 1, grad f . q = r^2 (theta/3 - 2 r t + r^2/2) where
    t = tr(U^3), so the radius per direction is the largest root of the bracket.
    The extreme directions t = +-1/sqrt(6) (uniaxial) are always included.
    """
    theta = check_theta(theta)
    rng = np.random.default_rng(seed)
    u = rng.standard_normal((n_directions, 3))
    u = np.vstack([u, [[1.0, 0.0, 0.0], [-1.0, 0.0, 0.0]]])
    u /= frobenius_norm(u)[:, None]
    U = components_to_matrix(u)
    t = np.einsum("...ij,...jk,...ki->...", U, U, U)
    disc = 4.0 * t**2 - 2.0 * theta / 3.0
    roots = np.where(disc > 0, 2.0 * t + np.sqrt(np.maximum(disc, 0.0)), 0.0)
    return float(roots.max())
