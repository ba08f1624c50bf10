"""Extended-precision re-evaluation of the smallest Phi eigenvalue.

At theta = -8 and large lambda the h2-block of the second variation has a
translation-like ground state whose eigenvalue is far below double precision
resolution (about 400 exp(-4 sqrt(2) lambda)).  Here the EE solution is
refined in multiple precision by mixed-precision Newton (residual in mpfr,
correction from the double banded solve restricted to the reflection-invariant
class), Phi is rebuilt in mpfr, its inertia is counted by 2x2-block LDL^T and
the smallest eigenvalue is obtained by inverse iteration.
"""

from __future__ import annotations

from dataclasses import dataclass

import gmpy2
import numpy as np
from gmpy2 import mpfr

from .discretization import EEProfile, ee_hessian
from .qtensor import gradient_scalar, hessian_scalar


@dataclass
class ExtendedEigen:
    value: float
    negative_count: int
    digits: int
    residual: float


def default_digits(lam: float) -> int:
    return 40 + int(3.0 * lam)


def _context(digits: int):
    return gmpy2.context(gmpy2.get_context(), precision=int(digits * 3.33) + 8)


def _mp(a) -> np.ndarray:
    return np.array([mpfr(float(x)) for x in np.ravel(a)], dtype=object).reshape(np.shape(a))


def _state(lam, theta, n_nodes):
    th = mpfr(theta)
    qp = (1 + gmpy2.sqrt(1 - th)) / 6
    return th, qp, mpfr(lam), mpfr(2) / (n_nodes - 1)


def _ee_gradient(q, h, lam, th):
    """Raw EE gradient (interior) and the scaled residual, as object arrays."""
    lap = 2 * q[1:-1] - q[:-2] - q[2:]
    qi = q[1:-1]
    zero = np.full(qi.shape[0], mpfr(0), dtype=object)
    g1, g2, _ = gradient_scalar(qi[:, 0], qi[:, 1], zero, th)
    raw = np.empty_like(qi)
    res = np.empty_like(qi)
    for c, (k, gc) in enumerate(((3, g1), (1, g2))):
        raw[:, c] = 2 * k / (lam**2 * h) * lap[:, c] + h * gc
        res[:, c] = raw[:, c] * lam**2 / (2 * k * h)
    return raw, res


def refine_ee_solution(chi: EEProfile, lam: float, theta: float, digits: int, max_iter: int = 40):
    """Mixed-precision Newton refinement of a symmetric EE solution; returns (q, residual)."""
    from .newton_solver import EE_PARITY, _banded_solve, _mirror_project

    H = ee_hessian(chi, lam, theta)
    with _context(digits):
        th, qp, lam_m, h = _state(lam, theta, chi.grid.n_nodes)
        q = _mp(chi.q)
        q[0, 0], q[0, 1], q[-1, 0], q[-1, 1] = qp, 3 * qp, qp, -3 * qp
        target = mpfr(10) ** (-(digits - 12))
        res_norm = mpfr("inf")
        for _ in range(max_iter):
            raw, res = _ee_gradient(q, h, lam_m, th)
            res_norm = max(abs(x) for x in res.ravel())
            if res_norm < target:
                break
            g = raw.astype(float)
            d = _mirror_project(_banded_solve(H, -g), EE_PARITY)
            qi = q[1:-1] + _mp(d)
            # keep the iterate exactly in the reflection-invariant class
            q[1:-1, 0] = (qi[:, 0] + qi[::-1, 0]) / 2
            q[1:-1, 1] = (qi[:, 1] - qi[::-1, 1]) / 2
        return q, float(res_norm)


def _phi_blocks(q, h, lam, th):
    """Diagonal blocks as (a, b, c) = [[a, b], [b, c]] and the constant diagonal coupling."""
    qi = q[1:-1]
    zero = np.full(qi.shape[0], mpfr(0), dtype=object)
    h11, h12, _, h22, _, _ = hessian_scalar(qi[:, 0], qi[:, 1], zero, th)
    s1 = 6 / (lam**2 * h)
    s2 = 2 / (lam**2 * h)
    return list(2 * s1 + h * h11), list(h * h12), list(2 * s2 + h * h22), (-s1, -s2)


def _schur_sweep(a, b, c, e):
    """Block LDL^T pivots S_i = D_i - E S_{i-1}^{-1} E for diagonal coupling E = diag(e)."""
    e1sq, e2sq = e[0] * e[0], e[1] * e[1]
    piv = []
    pa, pb, pc = a[0], b[0], c[0]
    piv.append((pa, pb, pc))
    for i in range(1, len(a)):
        det = pa * pc - pb * pb
        # inverse of [[pa, pb], [pb, pc]] is [[pc, -pb], [-pb, pa]] / det
        pa, pb, pc = a[i] - e1sq * pc / det, b[i] + e[0] * e[1] * pb / det, c[i] - e2sq * pa / det
        piv.append((pa, pb, pc))
    return piv


def _negatives(piv) -> int:
    count = 0
    for pa, pb, pc in piv:
        d2 = pc - pb * pb / pa
        count += (pa < 0) + (d2 < 0)
    return count


def _block_solve(piv, e, rhs):
    n = len(piv)
    y = [None] * n
    r1, r2 = rhs[0]
    y[0] = (r1, r2)
    for i in range(1, n):
        pa, pb, pc = piv[i - 1]
        det = pa * pc - pb * pb
        s1, s2 = y[i - 1]
        z1, z2 = (pc * s1 - pb * s2) / det, (pa * s2 - pb * s1) / det
        y[i] = (rhs[i][0] - e[0] * z1, rhs[i][1] - e[1] * z2)
    x = [None] * n
    for i in range(n - 1, -1, -1):
        t1, t2 = y[i]
        if i < n - 1:
            t1 -= e[0] * x[i + 1][0]
            t2 -= e[1] * x[i + 1][1]
        pa, pb, pc = piv[i]
        det = pa * pc - pb * pb
        x[i] = ((pc * t1 - pb * t2) / det, (pa * t2 - pb * t1) / det)
    return x


def smallest_phi_eigenvalue(chi: EEProfile, lam: float, theta: float, digits: int | None = None) -> ExtendedEigen:
    """Smallest eigenvalue of Phi against the plain lumped L^2 mass, in extended precision."""
    digits = digits or default_digits(lam)
    q, resid = refine_ee_solution(chi, lam, theta, digits)
    with _context(digits):
        th, _, lam_m, h = _state(lam, theta, chi.grid.n_nodes)
        a, b, c, e = _phi_blocks(q, h, lam_m, th)
        piv = _schur_sweep(a, b, c, e)
        neg = _negatives(piv)
        if neg > 0:
            # negative values are resolved by the double-precision solver
            return ExtendedEigen(float("nan"), neg, digits, resid)
        n = len(a)
        x = [(mpfr(1), mpfr(1))] * n
        val = None
        for _ in range(6):
            y = _block_solve(piv, e, [(h * u, h * v) for u, v in x])
            nrm = gmpy2.sqrt(h * sum(u * u + v * v for u, v in y))
            x = [(u / nrm, v / nrm) for u, v in y]
            # Rayleigh quotient x^T K x (x is mass-normalized)
            new = mpfr(0)
            for i, (u, v) in enumerate(x):
                new += a[i] * u * u + 2 * b[i] * u * v + c[i] * v * v
                if i > 0:
                    new += 2 * (e[0] * u * x[i - 1][0] + e[1] * v * x[i - 1][1])
            done = val is not None and abs(new - val) <= abs(new) * mpfr(10) ** (-20)
            val = new
            if done:
                break
        return ExtendedEigen(float(val), 0, digits, resid)
