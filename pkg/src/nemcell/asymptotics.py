"""Limiting regimes: the uniaxial geodesic at large lambda, the rescaled q2 front
and its heteroclinic limit, and the small-lambda uniqueness certificate."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy import interpolate, linalg

from .discretization import EEProfile, Grid, Profile, check_lambda
from .newton_solver import SolveOptions, SolveOutcome, gradient_flow_descent
from .qtensor import METRIC_WEIGHTS, MaterialConstants, bulk_hessian, check_theta, radial_radius


# large lambda ---------------------------------------------------------------------

@dataclass(frozen=True)
class GeodesicLimit:
    profile: Profile


def uniaxial_limit_profile(grid: Grid, theta: float) -> GeodesicLimit:
    """Q* = 6 q+ (n n^T - I/3) with n = (0, cos a, sin a), a = pi/4 - pi x/4."""
    qp = MaterialConstants.from_theta(theta).q_plus
    a = np.pi / 4.0 - np.pi * grid.nodes / 4.0
    q = np.column_stack([np.full(grid.n_nodes, qp), -3.0 * qp * np.cos(2.0 * a), 3.0 * qp * np.sin(2.0 * a)])
    # pin the endpoints to the exact boundary data (cos(pi), sin(pi) carry rounding)
    q[0] = [qp, 3.0 * qp, 0.0]
    q[-1] = [qp, -3.0 * qp, 0.0]
    return GeodesicLimit(Profile(grid, q))


def h1_distance(a: Profile, b: Profile) -> float:
    """Discrete H^1 distance with the Frobenius weights (6, 2, 2)."""
    if a.grid != b.grid:
        raise ValueError("profiles live on different grids")
    d = a.q - b.q
    h = a.grid.h
    grad = float(np.sum(np.diff(d, axis=0) ** 2 @ METRIC_WEIGHTS)) / h
    l2 = float(np.dot(a.grid.trapezoid_weights(), d**2 @ METRIC_WEIGHTS))
    return math.sqrt(grad + l2)


def limit_minimizer(lam: float, theta: float, grid: Grid, opts: SolveOptions | None = None) -> SolveOutcome:
    """Minimizer on the q3(0) >= 0 side: gradient flow from the geodesic, then Newton."""
    start = uniaxial_limit_profile(grid, theta).profile
    out = gradient_flow_descent(start, lam, theta, opts)
    if out.converged and out.profile.q3[grid.mid] < 0:
        out.profile = out.profile.mirrored()
    return out


# rescaled front and heteroclinic --------------------------------------------------

@dataclass(frozen=True)
class HeteroclinicProfile:
    y: np.ndarray
    values: np.ndarray

    def __call__(self, y) -> np.ndarray:
        """Cubic-spline interpolation, extended by +2 / -2 outside the sampled window."""
        y = np.asarray(y, dtype=float)
        inside = interpolate.CubicSpline(self.y, self.values)(np.clip(y, self.y[0], self.y[-1]))
        return np.where(y < self.y[0], 2.0, np.where(y > self.y[-1], -2.0, inside))

    @property
    def half_width(self) -> float:
        return float(self.y[-1])


def rescaled_profile(chi: EEProfile | np.ndarray, lam: float, grid: Grid | None = None) -> HeteroclinicProfile:
    """q2 sampled at y = lam x, on [-lam, lam]; constant extension by -+2 beyond."""
    lam = check_lambda(lam)
    if isinstance(chi, EEProfile):
        q2, grid = chi.q2, chi.grid
    else:
        q2 = np.asarray(chi, dtype=float)
        grid = grid or Grid(q2.size)
    return HeteroclinicProfile(lam * grid.nodes, q2.copy())


class HeteroclinicError(RuntimeError):
    pass


def heteroclinic_solver(Y: float = 20.0, n_nodes: int = 4001, tol: float = 1e-13, max_iter: int = 50) -> HeteroclinicProfile:
    """Front q'' = (q^2 - 4) q from +2 to -2 on [-Y, Y].

    Oddness is imposed by solving on [0, Y] with q(0) = 0, q(Y) = -2 and
    reflecting; on the full line the problem has a translation mode that makes
    the Jacobian nearly singular.  Discretized with the fourth-order Numerov
    scheme and solved by damped Newton with a tridiagonal Jacobian.
    """
    if Y < 10:
        raise ValueError("half-width Y must be at least 10")
    if n_nodes < 5 or n_nodes % 2 == 0:
        raise ValueError("n_nodes must be odd and >= 5")
    m = (n_nodes - 1) // 2
    y = np.linspace(0.0, Y, m + 1)
    d2 = (Y / m) ** 2
    q = -2.0 * np.tanh(y)  # guess; the front's true rate is sqrt(2)
    q[0], q[-1] = 0.0, -2.0

    def F(v):
        return (v * v - 4.0) * v

    def dF(v):
        return 3.0 * v * v - 4.0

    def residual(v):
        f = F(v)
        return v[:-2] - 2.0 * v[1:-1] + v[2:] - d2 / 12.0 * (f[:-2] + 10.0 * f[1:-1] + f[2:])

    r = residual(q)
    for _ in range(max_iter):
        if np.abs(r).max() <= tol:
            break
        j = dF(q)
        ab = np.zeros((3, m - 1))
        ab[0, 1:] = 1.0 - d2 / 12.0 * j[2:-1]
        ab[1] = -2.0 - 10.0 * d2 / 12.0 * j[1:-1]
        ab[2, :-1] = 1.0 - d2 / 12.0 * j[1:-2]
        step = linalg.solve_banded((1, 1), ab, -r)
        alpha = 1.0
        while alpha > 1e-8:
            trial = q.copy()
            trial[1:-1] += alpha * step
            rt = residual(trial)
            if np.linalg.norm(rt) < (1.0 - 1e-4 * alpha) * np.linalg.norm(r):
                break
            alpha /= 2.0
        else:
            raise HeteroclinicError("line search failed")
        q, r = trial, rt
    else:
        if np.abs(r).max() > tol:
            raise HeteroclinicError(f"no convergence (residual {np.abs(r).max():.3g})")
    full_y = np.concatenate([-y[::-1], y[1:]])
    q = np.clip(q, -2.0, 2.0)  # ulp overshoot in the saturated tail
    full_q = np.concatenate([-q[::-1], q[1:]])
    return HeteroclinicProfile(full_y, full_q)


def front_energy(het: HeteroclinicProfile) -> float:
    """Trapezoid value of int((q')^2 + (q^2 - 4)^2) over the sampled window."""
    dq = np.gradient(het.values, het.y, edge_order=2)
    return float(np.trapezoid(dq**2 + (het.values**2 - 4.0) ** 2, het.y))


@dataclass(frozen=True)
class MuLimitEstimate:
    test_value: float  # 2 x Rayleigh quotient of h = q'
    eigen_value: float  # 2 x smallest eigenvalue of -h'' + (q^2 - 4) h
    quotient: float  # the undoubled Rayleigh quotient


def mu_infinity_estimate(het: HeteroclinicProfile) -> MuLimitEstimate:
    """Upper bound and truncated-domain value for the large-lambda limit of mu.

    The limit operator is h -> -h'' + (q^2 - 4) h on the line; mu's scale is
    twice its spectrum.  The test function is h = q', with h' = q'' taken from
    the equation itself, (q^2 - 4) q.
    """
    y, q = het.y, het.values
    h = np.gradient(q, y, edge_order=2)
    dh = (q * q - 4.0) * q
    num = np.trapezoid(dh**2 + (q * q - 4.0) * h**2, y)
    quotient = float(num / np.trapezoid(h**2, y))
    dy = y[1] - y[0]
    V = q[1:-1] ** 2 - 4.0
    ev = linalg.eigvalsh_tridiagonal(2.0 / dy**2 + V, np.full(V.size - 1, -1.0 / dy**2),
                                     select="i", select_range=(0, 0))
    return MuLimitEstimate(2.0 * quotient, 2.0 * float(ev[0]), quotient)


# small lambda ---------------------------------------------------------------------

C1_CONVENTION = "c1 = (1/8) * (pi/2)^2, one eighth of the first Dirichlet eigenvalue on (-1, 1)"
C2_CONVENTION = "c2 = sup |D^2 f| (operator norm, Frobenius metric) over the ball of radius bound_radius"


@dataclass(frozen=True)
class UniquenessCertificate:
    theta: float
    c1: float
    c2: float
    bound_radius: float
    radial_radius: float
    boundary_norm: float
    lambda0: float
    resolution: int
    convention: str = f"{C1_CONVENTION}; {C2_CONVENTION}; lambda0 = sqrt(c1 / (2 c2))"

    def as_dict(self) -> dict:
        return asdict(self)


def hessian_norm_sup(theta: float, radius: float, resolution: int = 61, sphere_samples: int = 4000,
                     seed: int = 0) -> float:
    """Sup over the Frobenius ball of the operator norm of the bulk Hessian.

    The Hessian is measured in the Frobenius metric W = diag(6, 2, 2), i.e. the
    spectral radius of W^{-1/2} H W^{-1/2}.  The ball is sampled by a
    resolution^3 grid on its bounding box plus points on the bounding sphere.
    """
    theta = check_theta(theta)
    s = 1.0 / np.sqrt(METRIC_WEIGHTS)
    axes = [np.linspace(-radius * si, radius * si, resolution) for si in s]
    g = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, 3)
    g = g[(g**2 @ METRIC_WEIGHTS) <= radius**2 * (1 + 1e-12)]
    rng = np.random.default_rng(seed)
    u = rng.standard_normal((sphere_samples, 3))
    u = radius * u / np.sqrt(u**2 @ METRIC_WEIGHTS)[:, None]
    pts = np.vstack([g, u])
    best = 0.0
    for chunk in np.array_split(pts, max(1, len(pts) // 50_000)):
        H = bulk_hessian(chunk, theta) * s[:, None] * s[None, :]
        best = max(best, float(np.abs(np.linalg.eigvalsh(H)).max()))
    return best


def uniqueness_radius(theta: float, g_inf: float | None = None, resolution: int = 61) -> UniquenessCertificate:
    """Certificate lambda0 below which the energy is strictly convex on the a-priori ball."""
    consts = MaterialConstants.from_theta(theta)
    if g_inf is None:
        qp = consts.q_plus
        g_inf = math.sqrt(6.0 * qp**2 + 2.0 * (3.0 * qp) ** 2)
    C = radial_radius(theta)
    R = max(C, float(g_inf))
    c1 = (math.pi / 2.0) ** 2 / 8.0
    c2 = hessian_norm_sup(theta, R, resolution)
    return UniquenessCertificate(consts.theta, c1, c2, R, C, float(g_inf), math.sqrt(c1 / (2.0 * c2)), resolution)
