"""Damped Newton, linearly implicit gradient flow and a multi-start harness.

Convergence is measured on the scaled residual ``el_residual`` (max norm).  The
attainable floor of a central second difference is about 4 eps |q| / h^2, so the
effective tolerance is ``max(opts.residual_tolerance, floor)``; the value used is
reported on every outcome.
"""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import linalg

from .discretization import (
    BlockTridiagonal,
    EEProfile,
    Grid,
    Profile,
    ee_energy,
    ee_gradient_raw,
    ee_hessian,
    ee_residual,
    el_residual,
    energy_gradient_raw,
    energy_hessian,
    l2_distance,
    linear_profile,
    total_energy,
)
from .qtensor import METRIC_WEIGHTS, MaterialConstants, check_theta

DEFAULT_GRID = 1001


@dataclass(frozen=True)
class SolveOptions:
    max_iterations: int = 60
    residual_tolerance: float = 1e-9
    shrink: float = 0.5
    min_step: float = 1e-6
    flow_step: float = 1e-2
    flow_max_steps: int = 4000
    handoff_tolerance: float = 1e-5

    def __post_init__(self):
        if not self.residual_tolerance > 0:
            raise ValueError("residual_tolerance must be positive")
        if not 0.0 < self.shrink < 1.0:
            raise ValueError("shrink factor must lie in (0, 1)")
        if self.max_iterations < 0 or self.flow_max_steps < 1:
            raise ValueError("iteration limits must be non-negative")


@dataclass
class SolveOutcome:
    profile: Profile | EEProfile
    iterations: int
    final_residual: float
    converged: bool
    tolerance: float = 0.0
    energy: float = float("nan")
    energy_history: list[float] = field(default_factory=list)
    method: str = "newton"
    lam: float | None = None
    message: str = ""


def effective_tolerance(grid: Grid, theta: float, opts: SolveOptions) -> float:
    qp = MaterialConstants.from_theta(theta).q_plus
    floor = 4.0 * np.finfo(float).eps * 3.0 * qp / grid.h**2
    return max(opts.residual_tolerance, floor)


def _mirror_project(d: np.ndarray, parity: np.ndarray) -> np.ndarray:
    """Project interior data onto fields with x -> -x parity +1 (even) or -1 (odd)."""
    return 0.5 * (d + parity * d[::-1])


def _banded_solve(H: BlockTridiagonal, rhs: np.ndarray) -> np.ndarray:
    ab, w = H.banded()
    return linalg.solve_banded((w, w), ab, rhs.ravel(), check_finite=False).reshape(rhs.shape)


def _newton(profile, residual, gradient, hessian, lam, theta, opts, parity=None) -> SolveOutcome:
    tol = effective_tolerance(profile.grid, theta, opts)
    u = profile.interior.copy()
    if parity is not None:
        u = _mirror_project(u, parity)
    p = profile.with_interior(u)
    r = residual(p, lam, theta)
    rn = float(np.abs(r).max())
    it = 0
    msg = ""
    while rn > tol:
        if it >= opts.max_iterations:
            msg = "iteration limit reached"
            break
        try:
            d = _banded_solve(hessian(p, lam, theta), -gradient(p, lam, theta))
        except (linalg.LinAlgError, ValueError) as exc:
            msg = f"singular Newton matrix: {exc}"
            break
        if parity is not None:
            d = _mirror_project(d, parity)
        r2 = float(np.linalg.norm(r))
        alpha = 1.0
        accepted = False
        while alpha >= opts.min_step:
            trial = p.with_interior(u + alpha * d)
            rt = residual(trial, lam, theta)
            if np.all(np.isfinite(rt)) and np.linalg.norm(rt) <= (1.0 - 1e-4 * alpha) * r2:
                accepted = True
                break
            alpha *= opts.shrink
        it += 1
        if not accepted:
            msg = "line search failed"
            break
        u = u + alpha * d
        p, r = trial, rt
        rn = float(np.abs(r).max())
    converged = rn <= tol
    return SolveOutcome(p, it, rn, converged, tol, lam=lam, message="" if converged else msg)


def solve_full(initial: Profile, lam: float, theta: float, opts: SolveOptions | None = None) -> SolveOutcome:
    """Damped Newton on the full three-component Euler-Lagrange system."""
    opts = opts or SolveOptions()
    theta = check_theta(theta)
    if not initial.satisfies_bc(theta, tol=1e-14):
        raise ValueError("initial profile does not satisfy the boundary conditions")
    out = _newton(initial, el_residual, energy_gradient_raw, energy_hessian, lam, theta, opts)
    out.energy = total_energy(out.profile, lam, theta)
    return out


EE_PARITY = np.array([1.0, -1.0])


def solve_ee(
    initial: EEProfile,
    lam: float,
    theta: float,
    opts: SolveOptions | None = None,
    symmetric: bool = True,
) -> SolveOutcome:
    """Damped Newton on the eigenvalue-exchange system for (q1, q2).

    With ``symmetric`` the iterates are kept in the reflection-invariant class
    (q1 even, q2 odd about x = 0).  For large lambda the q2 front has a
    translation mode whose eigenvalue decays like exp(-4 sqrt(2) lambda); without
    the projection, rounding errors are amplified along it and the front drifts.
    """
    opts = opts or SolveOptions()
    theta = check_theta(theta)
    if not initial.satisfies_bc(theta, tol=1e-14):
        raise ValueError("initial profile does not satisfy the boundary conditions")
    parity = EE_PARITY if symmetric else None
    out = _newton(initial, ee_residual, ee_gradient_raw, ee_hessian, lam, theta, opts, parity)
    out.energy = ee_energy(out.profile, lam, theta)
    return out


def _try_cholesky(H: BlockTridiagonal, shift: np.ndarray | None = None):
    D = H.diag if shift is None else H.diag + shift
    ab = BlockTridiagonal(D, H.lower).upper_banded()
    try:
        return linalg.cholesky_banded(ab, lower=False, check_finite=False)
    except linalg.LinAlgError:
        return None


def is_positive_definite(H: BlockTridiagonal) -> bool:
    return _try_cholesky(H) is not None


def gradient_flow_descent(
    initial: Profile, lam: float, theta: float, opts: SolveOptions | None = None
) -> SolveOutcome:
    """Linearly implicit pseudo-time descent, then a Newton polish.

    Each step solves (M/tau + H) d = -g with the lumped Frobenius mass M = h W.
    A step is accepted only if it lowers the energy and the matrix is positive
    definite; tau doubles after an accepted step and is divided by four otherwise.
    Once the residual drops below ``handoff_tolerance`` at a point with positive
    definite Hessian, Newton finishes the solve.
    """
    opts = opts or SolveOptions()
    theta = check_theta(theta)
    if not initial.satisfies_bc(theta, tol=1e-14):
        raise ValueError("initial profile does not satisfy the boundary conditions")
    grid = initial.grid
    tol = effective_tolerance(grid, theta, opts)
    mass = grid.h * METRIC_WEIGHTS
    p = initial
    E = total_energy(p, lam, theta)
    history = [E]
    tau = opts.flow_step
    rn = float(np.abs(el_residual(p, lam, theta)).max())
    next_handoff = opts.handoff_tolerance
    steps = 0
    while steps < opts.flow_max_steps:
        if rn <= tol:
            return SolveOutcome(p, steps, rn, True, tol, E, history, "flow", lam)
        H = energy_hessian(p, lam, theta)
        if rn <= next_handoff and is_positive_definite(H):
            polished = solve_full(p, lam, theta, opts)
            if polished.converged and polished.energy <= E + 1e-10 * max(1.0, abs(E)):
                polished.iterations += steps
                polished.energy_history = history
                polished.method = "flow+newton"
                return polished
            next_handoff = rn / 10.0
        g = energy_gradient_raw(p, lam, theta)
        shift = np.zeros_like(H.diag)
        shift[:, [0, 1, 2], [0, 1, 2]] = mass / tau
        c = _try_cholesky(H, shift)
        steps += 1
        if c is not None:
            d = linalg.cho_solve_banded((c, False), -g.ravel(), check_finite=False).reshape(g.shape)
            trial = p.with_interior(p.interior + d)
            Et = total_energy(trial, lam, theta)
            if np.isfinite(Et) and Et < E:
                p, E = trial, Et
                history.append(E)
                rn = float(np.abs(el_residual(p, lam, theta)).max())
                tau = min(tau * 2.0, 1e12)
                continue
        tau /= 4.0
        if tau < 1e-14:
            # energy can no longer decrease in floating point; let Newton decide
            if rn <= 1e3 * opts.handoff_tolerance:
                polished = solve_full(p, lam, theta, opts)
                if polished.converged and is_positive_definite(energy_hessian(polished.profile, lam, theta)):
                    polished.iterations += steps
                    polished.energy_history = history
                    polished.method = "flow+newton"
                    return polished
            return SolveOutcome(p, steps, rn, False, tol, E, history, "flow", lam, "pseudo-time step underflow")
    return SolveOutcome(p, steps, rn, False, tol, E, history, "flow", lam, "step limit reached")


# multi-start -------------------------------------------------------------------

def _random_ball_start(grid: Grid, theta: float, rng: np.random.Generator) -> Profile:
    """Nodewise uniform samples in the Frobenius ball of the maximum-principle radius."""
    R = MaterialConstants.from_theta(theta).max_norm
    n = grid.n_nodes
    z = rng.standard_normal((n, 3))
    z /= np.linalg.norm(z, axis=1, keepdims=True)
    z *= rng.random(n)[:, None] ** (1.0 / 3.0)
    q = R * z / np.sqrt(METRIC_WEIGHTS)
    base = linear_profile(grid, theta)
    q[0], q[-1] = base.q[0], base.q[-1]
    return Profile(grid, q)


def _smooth_perturbation(grid: Grid, radius: float, rng: np.random.Generator, modes: int = 4) -> np.ndarray:
    x = grid.nodes
    k = np.arange(1, modes + 1)
    basis = np.sin(np.outer(x + 1.0, k) * np.pi / 2.0)  # vanishes at both ends
    coef = rng.uniform(-1.0, 1.0, (modes, 3)) / k[:, None]
    return radius * basis @ coef


def _solve_one(args):
    start, lam, theta, opts, method = args
    if method == "newton":
        return solve_full(start, lam, theta, opts)
    return gradient_flow_descent(start, lam, theta, opts)


def resolve_jobs(jobs: int | None) -> int:
    if jobs is None:
        jobs = int(os.environ.get("NEMCELL_JOBS", "1") or 1)
    return max(1, int(jobs))


def deduplicate(outcomes: list[SolveOutcome], tol: float = 1e-6) -> list[SolveOutcome]:
    """Keep one representative per L^2 cluster, ordered by energy then q3(0)."""
    ordered = sorted(outcomes, key=lambda o: (round(o.energy, 10), float(o.profile.q[o.profile.grid.mid, -1])))
    reps: list[SolveOutcome] = []
    for o in ordered:
        if all(l2_distance(o.profile, r.profile) >= tol for r in reps):
            reps.append(o)
    return reps


def multi_start(
    lam: float,
    theta: float,
    n_starts: int,
    seed: int = 0,
    opts: SolveOptions | None = None,
    grid: Grid | None = None,
    center: Profile | None = None,
    radius: float = 0.1,
    methods: tuple[str, ...] = ("flow",),
    jobs: int | None = 1,
) -> list[SolveOutcome]:
    """Solve from ``n_starts`` seeded starts and return the distinct converged solutions.

    Without ``center`` the starts are random in the maximum-principle ball;
    with it they are smooth perturbations of size ``radius`` around ``center``.
    Every start is run with each entry of ``methods`` ("flow" or "newton").
    """
    if n_starts < 1:
        raise ValueError("n_starts must be >= 1")
    opts = opts or SolveOptions()
    theta = check_theta(theta)
    grid = grid or (center.grid if center is not None else Grid(DEFAULT_GRID))
    rng = np.random.default_rng(seed)
    starts = []
    for _ in range(n_starts):
        if center is None:
            starts.append(_random_ball_start(grid, theta, rng))
        else:
            starts.append(Profile(grid, center.q + _smooth_perturbation(grid, radius, rng)))
    tasks = [(s, lam, theta, opts, m) for s in starts for m in methods]
    jobs = resolve_jobs(jobs)
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_solve_one, tasks))
    else:
        results = [_solve_one(t) for t in tasks]
    return deduplicate([r for r in results if r.converged])


def with_options(opts: SolveOptions | None, **changes) -> SolveOptions:
    return replace(opts or SolveOptions(), **changes)
