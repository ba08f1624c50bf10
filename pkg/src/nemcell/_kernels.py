"""Hot loops, compiled with numba when available.

Set ``NEMCELL_DISABLE_NUMBA=1`` to run the pure numpy / pure Python fallbacks.
Both implementations are always importable (``*_nb`` and ``*_py``) so the test
suite and the benchmark can compare them in one process.
"""

from __future__ import annotations

import os

import numpy as np

from .qtensor import density_scalar, gradient_scalar, hessian_scalar

_DISABLED = os.environ.get("NEMCELL_DISABLE_NUMBA", "").strip().lower() in {"1", "true", "yes"}

try:
    if _DISABLED:
        raise ImportError
    from numba import njit as _njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised via the env flag in CI
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA


def _jit(fn):
    if HAVE_NUMBA:
        return _njit(cache=True)(fn)
    return fn


_density_j = _jit(density_scalar)
_gradient_j = _jit(gradient_scalar)
_hessian_j = _jit(hessian_scalar)


# bulk fields -----------------------------------------------------------------

def bulk_fields_py(q: np.ndarray, theta: float, c: float):
    """Density, gradient (n,3) and Hessian (n,3,3) at every node, vectorized."""
    q1, q2, q3 = q[:, 0], q[:, 1], q[:, 2]
    f = density_scalar(q1, q2, q3, theta, c)
    g = np.stack(gradient_scalar(q1, q2, q3, theta), axis=1)
    h11, h12, h13, h22, h23, h33 = hessian_scalar(q1, q2, q3, theta)
    H = np.empty((q.shape[0], 3, 3))
    H[:, 0, 0] = h11
    H[:, 0, 1] = H[:, 1, 0] = h12
    H[:, 0, 2] = H[:, 2, 0] = h13
    H[:, 1, 1] = h22
    H[:, 1, 2] = H[:, 2, 1] = h23
    H[:, 2, 2] = h33
    return f, g, H


def _bulk_fields_loop(q, theta, c):
    n = q.shape[0]
    f = np.empty(n)
    g = np.empty((n, 3))
    H = np.empty((n, 3, 3))
    for i in range(n):
        a, b, d = q[i, 0], q[i, 1], q[i, 2]
        f[i] = _density_j(a, b, d, theta, c)
        g1, g2, g3 = _gradient_j(a, b, d, theta)
        g[i, 0] = g1
        g[i, 1] = g2
        g[i, 2] = g3
        h11, h12, h13, h22, h23, h33 = _hessian_j(a, b, d, theta)
        H[i, 0, 0] = h11
        H[i, 0, 1] = h12
        H[i, 1, 0] = h12
        H[i, 0, 2] = h13
        H[i, 2, 0] = h13
        H[i, 1, 1] = h22
        H[i, 1, 2] = h23
        H[i, 2, 1] = h23
        H[i, 2, 2] = h33
    return f, g, H


bulk_fields_nb = _jit(_bulk_fields_loop)


# Sturm count on a symmetric block-tridiagonal matrix ---------------------------

def _sturm_count_loop(D, E, sigma):
    """Number of eigenvalues of A below sigma, A with diagonal blocks D, sub-diagonal E.

    Block LDL^T without pivoting: S_0 = D_0 - sigma, S_{i+1} = D_{i+1} - sigma -
    E_i S_i^{-1} E_i^T.  By Sylvester's law the count is the number of negative
    pivots of the small inner LDL^T of every S_i.  Exact zero pivots are nudged to
    a tiny positive value, the usual Sturm convention.
    """
    n = D.shape[0]
    b = D.shape[1]
    tiny = 1e-300
    S = np.empty((b, b))
    L = np.zeros((b, b))
    piv = np.empty(b)
    Sinv = np.empty((b, b))
    count = 0
    for i in range(n):
        for r in range(b):
            for s in range(b):
                S[r, s] = D[i, r, s]
            S[r, r] -= sigma
        if i > 0:
            # S -= E_{i-1} Sinv E_{i-1}^T
            for r in range(b):
                for s in range(b):
                    acc = 0.0
                    for k in range(b):
                        ek = 0.0
                        for m in range(b):
                            ek += Sinv[k, m] * E[i - 1, s, m]
                        acc += E[i - 1, r, k] * ek
                    S[r, s] -= acc
        # LDL^T of the small block
        for r in range(b):
            for s in range(b):
                L[r, s] = 0.0
            L[r, r] = 1.0
        for j in range(b):
            dj = S[j, j]
            for k in range(j):
                dj -= L[j, k] * L[j, k] * piv[k]
            if dj == 0.0:
                dj = tiny
            piv[j] = dj
            if dj < 0.0:
                count += 1
            for r in range(j + 1, b):
                v = S[r, j]
                for k in range(j):
                    v -= L[r, k] * L[j, k] * piv[k]
                L[r, j] = v / dj
        if i < n - 1:
            # Sinv = L^{-T} diag(1/piv) L^{-1}, built column by column
            for col in range(b):
                y = np.zeros(b)
                for r in range(b):
                    v = 1.0 if r == col else 0.0
                    for k in range(r):
                        v -= L[r, k] * y[k]
                    y[r] = v
                for r in range(b):
                    y[r] /= piv[r]
                for r in range(b - 1, -1, -1):
                    v = y[r]
                    for k in range(r + 1, b):
                        v -= L[k, r] * Sinv[k, col]
                    Sinv[r, col] = v
    return count


sturm_count_nb = _jit(_sturm_count_loop)
sturm_count_py = _sturm_count_loop


def sturm_count(D: np.ndarray, E: np.ndarray, sigma: float) -> int:
    D = np.ascontiguousarray(D, dtype=float)
    E = np.ascontiguousarray(E, dtype=float)
    if USE_NUMBA:
        return int(sturm_count_nb(D, E, float(sigma)))
    return int(sturm_count_py(D, E, float(sigma)))


def bulk_fields(q: np.ndarray, theta: float, c: float):
    q = np.ascontiguousarray(q, dtype=float)
    if USE_NUMBA:
        return bulk_fields_nb(q, float(theta), float(c))
    return bulk_fields_py(q, float(theta), float(c))


# block-tridiagonal utilities (numpy; no hot loops) -----------------------------

def blocks_to_dense(D: np.ndarray, E: np.ndarray) -> np.ndarray:
    n, b, _ = D.shape
    A = np.zeros((n * b, n * b))
    for i in range(n):
        A[i * b:(i + 1) * b, i * b:(i + 1) * b] = D[i]
    for i in range(n - 1):
        A[(i + 1) * b:(i + 2) * b, i * b:(i + 1) * b] = E[i]
        A[i * b:(i + 1) * b, (i + 1) * b:(i + 2) * b] = E[i].T
    return A


def blocks_to_banded(D: np.ndarray, E: np.ndarray) -> tuple[np.ndarray, int]:
    """General banded storage for ``scipy.linalg.solve_banded`` with l = u = 2b - 1."""
    n, b, _ = D.shape
    m = n * b
    w = 2 * b - 1
    ab = np.zeros((2 * w + 1, m))
    idx = np.arange(n) * b
    for r in range(b):
        for s in range(b):
            # A[i*b + r, i*b + s] = D[i, r, s]
            ab[w + r - s, idx + s] = D[:, r, s]
            if n > 1:
                # A[(i+1)*b + r, i*b + s] = E[i, r, s] and its transpose
                ab[w + b + r - s, idx[:-1] + s] = E[:, r, s]
                ab[w - b - r + s, idx[1:] + r] = E[:, r, s]
    return ab, w


def blocks_to_upper_banded(D: np.ndarray, E: np.ndarray) -> np.ndarray:
    """Upper symmetric banded storage for ``cholesky_banded`` / ``eig_banded``."""
    ab, w = blocks_to_banded(D, E)
    return ab[: w + 1].copy()


def blocks_matvec(D: np.ndarray, E: np.ndarray, v: np.ndarray) -> np.ndarray:
    """A @ v for v of shape (n, b)."""
    out = np.einsum("irs,is->ir", D, v)
    out[1:] += np.einsum("irs,is->ir", E, v[:-1])
    out[:-1] += np.einsum("isr,is->ir", E, v[1:])
    return out

