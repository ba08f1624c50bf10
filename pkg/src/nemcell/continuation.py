"""EE branch tracing, the critical thickness, branch switching and the BD arms."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import splu

from .discretization import (
    ELASTIC_WEIGHTS,
    BlockTridiagonal,
    EEProfile,
    Grid,
    Profile,
    el_residual,
    energy_gradient_raw,
    energy_hessian,
    linear_ee_profile,
    total_energy,
)
from .newton_solver import DEFAULT_GRID, SolveOptions, SolveOutcome, effective_tolerance, multi_start, solve_ee
from .qtensor import check_theta
from .stability import mu_spectrum, nu_spectrum

MU_TOLERANCE = 1e-8
LAMBDA_TOLERANCE = 1e-10


class BracketError(ValueError):
    pass


class BranchSwitchError(RuntimeError):
    pass


@dataclass
class BranchPoint:
    lam: float
    profile: EEProfile | Profile
    energy: float
    nu: float = float("nan")
    mu: float = float("nan")
    t: float = float("nan")
    residual: float = float("nan")
    nu_extended: bool = False

    @property
    def q3_mid(self) -> float:
        p = self.profile
        return 0.0 if isinstance(p, EEProfile) else float(p.q3[p.grid.mid])


@dataclass
class Branch:
    branch_id: str
    points: list[BranchPoint] = field(default_factory=list)
    truncated: bool = False
    truncation_lambda: float | None = None
    message: str = ""

    @property
    def lambdas(self) -> np.ndarray:
        return np.array([p.lam for p in self.points])

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(p, name) for p in self.points])


# EE branch ------------------------------------------------------------------------

def solve_ee_warm(
    lam: float,
    theta: float,
    grid: Grid | None = None,
    opts: SolveOptions | None = None,
    lam_start: float = 0.5,
    growth: float = 1.25,
) -> SolveOutcome:
    """EE solve at ``lam`` by natural continuation from a linear guess at small lambda."""
    grid = grid or Grid(DEFAULT_GRID)
    p = linear_ee_profile(grid, theta)
    cur = min(lam, lam_start)
    out = solve_ee(p, cur, theta, opts)
    if not out.converged:
        return out
    step = growth
    while cur < lam:
        nxt = min(cur * step, lam)
        trial = solve_ee(out.profile, nxt, theta, opts)
        if trial.converged:
            out, cur = trial, nxt
            step = min(step * 1.2, growth)
        else:
            step = 1.0 + (step - 1.0) / 2.0
            if step < 1.0 + 1e-6:
                return trial
    return out


def _ee_point(out: SolveOutcome, lam: float, theta: float, nu_extended: str) -> BranchPoint:
    chi = out.profile
    nus = nu_spectrum(chi, lam, theta, extended=nu_extended)
    return BranchPoint(
        lam, chi, out.energy, nus.eigenvalue, mu_spectrum(chi, lam, theta).eigenvalue,
        residual=out.final_residual, nu_extended=nus.extended,
    )


def continue_ee_branch(
    theta: float,
    lambda_min: float,
    lambda_max: float,
    step: float = 0.05,
    grid: Grid | None = None,
    opts: SolveOptions | None = None,
    nu_extended: str = "auto",
    stop_when_mu_negative: bool = False,
) -> Branch:
    """Natural-parameter continuation of the EE branch on an even lambda grid.

    Failed steps are retried with halved steps.  The trace is truncated (not an
    exception) when nu <= 0 is recorded, or after the first mu < 0 point when
    ``stop_when_mu_negative`` is set.
    """
    theta = check_theta(theta)
    if not 0 < lambda_min < lambda_max:
        raise ValueError("need 0 < lambda_min < lambda_max")
    grid = grid or Grid(DEFAULT_GRID)
    n_steps = max(1, int(math.ceil((lambda_max - lambda_min) / step - 1e-9)))
    targets = np.linspace(lambda_min, lambda_max, n_steps + 1)
    branch = Branch("EE")
    out = solve_ee_warm(lambda_min, theta, grid, opts, lam_start=lambda_min)
    if not out.converged:
        branch.truncated, branch.truncation_lambda = True, lambda_min
        branch.message = f"no EE solution at lambda={lambda_min}: {out.message}"
        return branch
    cur = lambda_min
    prev = None
    for target in targets:
        if target > cur:
            sub = (target - cur)
            while cur < target:
                nxt = min(cur + sub, target)
                guess = out.profile
                if prev is not None and prev[0] < cur:
                    # secant predictor
                    w = (nxt - cur) / (cur - prev[0])
                    guess = out.profile.with_interior(out.profile.interior + w * (out.profile.interior - prev[1].interior))
                trial = solve_ee(guess, nxt, theta, opts)
                if not trial.converged:
                    trial = solve_ee(out.profile, nxt, theta, opts)
                if trial.converged:
                    prev = (cur, out.profile)
                    out, cur = trial, nxt
                else:
                    sub /= 2.0
                    if sub < 1e-6:
                        branch.truncated, branch.truncation_lambda = True, nxt
                        branch.message = f"Newton failed near lambda={nxt:.6g}"
                        return branch
        point = _ee_point(out, target, theta, nu_extended)
        branch.points.append(point)
        if point.nu <= 0.0:
            branch.truncated, branch.truncation_lambda = True, target
            branch.message = f"nu(lambda) <= 0 at lambda={target:.6g}"
            return branch
        if stop_when_mu_negative and point.mu < 0.0:
            break
    return branch


# critical thickness -------------------------------------------------------------

@dataclass
class CriticalPoint:
    lambda_c: float
    mu: float
    chi: EEProfile
    kernel: np.ndarray  # interior h_c, int h_c^2 = 1, h_c(0) > 0
    bracket: tuple[float, float]


def _mu_at(lam, theta, guess, opts):
    out = solve_ee(guess, lam, theta, opts)
    if not out.converged:
        raise RuntimeError(f"EE solve failed at lambda={lam}: {out.message}")
    spec = mu_spectrum(out.profile, lam, theta)
    return spec.eigenvalue, out.profile, spec


def locate_lambda_c(
    theta: float,
    bracket: tuple[float, float],
    grid: Grid | None = None,
    opts: SolveOptions | None = None,
) -> CriticalPoint:
    """Bisection on mu over ``bracket`` with the EE solution re-converged at every probe."""
    theta = check_theta(theta)
    grid = grid or Grid(DEFAULT_GRID)
    a, b = map(float, bracket)
    if not 0 < a < b:
        raise BracketError("bracket must satisfy 0 < a < b")
    chi_a = solve_ee_warm(a, theta, grid, opts).profile
    mu_a, chi_a, _ = _mu_at(a, theta, chi_a, opts)
    mu_b, chi_b, _ = _mu_at(b, theta, chi_a, opts)
    if not (mu_a > 0 > mu_b):
        raise BracketError(f"mu does not change sign on [{a}, {b}]: mu(a)={mu_a:.3g}, mu(b)={mu_b:.3g}")
    while b - a > LAMBDA_TOLERANCE:
        m = 0.5 * (a + b)
        mu_m, chi_m, _ = _mu_at(m, theta, chi_a, opts)
        if mu_m > 0:
            a, chi_a = m, chi_m
        else:
            b, chi_b = m, chi_m
    lam_c = 0.5 * (a + b)
    mu_c, chi_c, spec = _mu_at(lam_c, theta, chi_a, opts)
    if abs(mu_c) >= MU_TOLERANCE:
        raise RuntimeError(f"bisection ended with |mu|={abs(mu_c):.3g} >= {MU_TOLERANCE}")
    hc = spec.eigenfunction[:, 0].copy()
    if hc[grid.mid - 1] < 0:
        hc = -hc
    return CriticalPoint(lam_c, mu_c, chi_c, hc, (float(bracket[0]), float(bracket[1])))


def find_lambda_c(theta: float, bracket: tuple[float, float], grid: Grid | None = None,
                  opts: SolveOptions | None = None) -> float:
    return locate_lambda_c(theta, bracket, grid, opts).lambda_c


def mu_slope(theta: float, lam: float, grid: Grid | None = None, delta: float = 1e-3,
             opts: SolveOptions | None = None) -> float:
    """Centered difference of mu at ``lam``."""
    grid = grid or Grid(DEFAULT_GRID)
    chi = solve_ee_warm(lam - delta, theta, grid, opts).profile
    mu_lo, chi, _ = _mu_at(lam - delta, theta, chi, opts)
    mu_hi, _, _ = _mu_at(lam + delta, theta, chi, opts)
    return (mu_hi - mu_lo) / (2.0 * delta)


@dataclass
class BifurcationConditions:
    theta: float
    condition_i: bool
    condition_ii: bool
    lambda_c: float | None
    mu_slope: float | None
    truncation_lambda: float | None
    inconclusive: bool
    message: str
    branch: Branch | None = None
    critical: CriticalPoint | None = None

    @property
    def passed(self) -> bool:
        return self.condition_i and self.condition_ii


def check_bifurcation_conditions(
    theta: float,
    grid: Grid | None = None,
    lambda_cap: float = 20.0,
    step: float = 0.05,
    lambda_min: float = 0.1,
    opts: SolveOptions | None = None,
) -> BifurcationConditions:
    """Trace the EE branch until mu < 0, nu <= 0 or the cap; then locate lambda_c and mu'.

    (i): mu turns negative before any nu <= 0 (symmetry breaking comes first).
    (ii): the centered-difference slope of mu at lambda_c is negative.
    """
    theta = check_theta(theta)
    grid = grid or Grid(DEFAULT_GRID)
    br = continue_ee_branch(theta, lambda_min, lambda_cap, step, grid, opts, stop_when_mu_negative=True)
    return conditions_from_branch(theta, br, grid, opts)


def conditions_from_branch(
    theta: float, br: Branch, grid: Grid, opts: SolveOptions | None = None
) -> BifurcationConditions:
    """Evaluate (i) and (ii) on an already traced EE branch."""
    mus = br.column("mu")
    neg = np.nonzero(mus < 0)[0]
    if len(neg) == 0:
        if br.truncated:
            msg = f"branch truncated at lambda={br.truncation_lambda} before mu changed sign ({br.message})"
            return BifurcationConditions(theta, False, False, None, None, br.truncation_lambda, False, msg, br)
        cap = br.points[-1].lam if br.points else float("nan")
        msg = f"lambda cap {cap:.6g} reached with mu still positive"
        return BifurcationConditions(theta, False, False, None, None, None, True, msg, br)
    k = int(neg[0])
    if k == 0:
        msg = f"mu already negative at lambda_min={br.points[0].lam}"
        return BifurcationConditions(theta, False, False, None, None, None, True, msg, br)
    cp = locate_lambda_c(theta, (br.points[k - 1].lam, br.points[k].lam), grid, opts)
    slope = mu_slope(theta, cp.lambda_c, grid, opts=opts)
    ok_ii = slope < 0
    msg = f"lambda_c={cp.lambda_c:.10f}, mu'(lambda_c)={slope:.6g}"
    return BifurcationConditions(theta, True, ok_ii, cp.lambda_c, slope, None, False, msg, br, cp)


# branch switching -----------------------------------------------------------------

def _hessian_sparse(H: BlockTridiagonal) -> sparse.csc_matrix:
    ab, w = H.banded()
    m = ab.shape[1]
    offsets = list(range(w, -w - 1, -1))
    diags = []
    for k, off in enumerate(offsets):
        row = ab[k]
        diags.append(row[off:] if off >= 0 else row[: m + off])
    return sparse.diags(diags, offsets, shape=(m, m), format="csc")


def _extended_residual(p: Profile, lam: float, theta: float, kernel: np.ndarray, t: float):
    r = el_residual(p, lam, theta)
    c = p.grid.h * float(np.dot(p.interior[:, 2], kernel)) - t
    return r, c


def branch_switch(
    theta: float,
    lambda_c: float,
    chi_c: EEProfile,
    kernel: np.ndarray,
    t: float,
    opts: SolveOptions | None = None,
    initial: tuple[Profile, float] | None = None,
) -> SolveOutcome:
    """Solve {EL residual = 0, <q3, h_c> = t} for (profile, lambda).

    The bordered Jacobian [[H, dG/dlam], [c^T, 0]] is factorized with a sparse LU.
    """
    opts = opts or SolveOptions()
    theta = check_theta(theta)
    grid = chi_c.grid
    h = grid.h
    kernel = np.asarray(kernel, dtype=float)
    if initial is None:
        q = chi_c.embed().q.copy()
        q[1:-1, 2] = t * kernel
        p, lam = Profile(grid, q), float(lambda_c)
    else:
        p, lam = initial
    tol = effective_tolerance(grid, theta, opts)
    n = grid.n_interior
    crow = np.zeros(3 * n)
    crow[2::3] = h * kernel

    def merit(r, c):
        return math.sqrt(float(np.sum(r**2)) + c * c)

    r, c = _extended_residual(p, lam, theta, kernel, t)
    it = 0
    while max(float(np.abs(r).max()), abs(c)) > tol:
        if it >= opts.max_iterations:
            break
        G = energy_gradient_raw(p, lam, theta)
        H = energy_hessian(p, lam, theta)
        q = p.q
        lap = 2.0 * q[1:-1] - q[:-2] - q[2:]
        dG = (-4.0 / (lam**3 * h)) * lap * ELASTIC_WEIGHTS
        J = sparse.bmat(
            [[_hessian_sparse(H), sparse.csc_matrix(dG.reshape(-1, 1))],
             [sparse.csc_matrix(crow.reshape(1, -1)), None]],
            format="csc",
        )
        rhs = -np.concatenate([G.ravel(), [c]])
        try:
            d = splu(J).solve(rhs)
        except RuntimeError as exc:
            raise BranchSwitchError(f"singular bordered system: {exc}") from exc
        du, dl = d[:-1].reshape(n, 3), d[-1]
        m0 = merit(r, c)
        alpha = 1.0
        while alpha >= opts.min_step:
            trial = p.with_interior(p.interior + alpha * du)
            rt, ct = _extended_residual(trial, lam + alpha * dl, theta, kernel, t)
            if np.all(np.isfinite(rt)) and merit(rt, ct) <= (1.0 - 1e-4 * alpha) * m0:
                break
            alpha *= opts.shrink
        else:
            raise BranchSwitchError(f"line search failed at t={t}; try a smaller amplitude")
        p, lam, r, c = trial, lam + alpha * dl, rt, ct
        it += 1
    rn = max(float(np.abs(r).max()), abs(c))
    if rn > tol:
        raise BranchSwitchError(f"no convergence at t={t} (residual {rn:.3g}); try a smaller amplitude")
    return SolveOutcome(p, it, rn, True, tol, total_energy(p, lam, theta), method="branch-switch", lam=lam)


def follow_bd_branch(
    theta: float,
    cp: CriticalPoint,
    t_values,
    opts: SolveOptions | None = None,
) -> Branch:
    """Amplitude-parameterized continuation along one BD arm (all t of one sign)."""
    t_values = [float(t) for t in t_values]
    if not t_values or any(t == 0 for t in t_values):
        raise ValueError("amplitudes must be nonzero")
    sign = np.sign(t_values[0])
    if any(np.sign(t) != sign for t in t_values):
        raise ValueError("all amplitudes of one arm must share a sign")
    branch = Branch("BD+" if sign > 0 else "BD-")
    hist: list[tuple[float, Profile, float]] = []
    for t in t_values:
        init = None
        if len(hist) >= 2:
            (t0, p0, l0), (t1, p1, l1) = hist[-2], hist[-1]
            w = (t - t1) / (t1 - t0)
            init = (p1.with_interior(p1.interior + w * (p1.interior - p0.interior)), l1 + w * (l1 - l0))
        elif hist:
            init = (hist[-1][1], hist[-1][2])
        try:
            out = branch_switch(theta, cp.lambda_c, cp.chi, cp.kernel, t, opts, init)
        except BranchSwitchError as exc:
            branch.truncated, branch.message = True, str(exc)
            break
        hist.append((t, out.profile, out.lam))
        branch.points.append(BranchPoint(out.lam, out.profile, out.energy, t=t, residual=out.final_residual))
    return branch


# pitchfork report ------------------------------------------------------------------

@dataclass
class BifurcationReport:
    theta: float
    lambda_c: float
    kernel: np.ndarray
    chi_c: EEProfile
    bd_plus: Branch
    bd_minus: Branch
    symmetry_residuals: dict[str, float]
    curvature: float  # lambda(t) ~ lambda_c + curvature t^2 near onset

    @property
    def direction(self) -> str:
        return "supercritical" if self.curvature > 0 else "subcritical"


def symmetry_residuals(plus: Branch, minus: Branch) -> dict[str, float]:
    """Compare BD+ at t with BD- at -t: lambda, (q1, q2) equal, q3 opposite, energy."""
    pairs = list(zip(plus.points, minus.points))
    if not pairs:
        return {"lambda": float("nan"), "q12": float("nan"), "q3": float("nan"), "energy": float("nan")}
    res = {"lambda": 0.0, "q12": 0.0, "q3": 0.0, "energy": 0.0}
    for a, b in pairs:
        res["lambda"] = max(res["lambda"], abs(a.lam - b.lam))
        res["q12"] = max(res["q12"], float(np.abs(a.profile.q[:, :2] - b.profile.q[:, :2]).max()))
        res["q3"] = max(res["q3"], float(np.abs(a.profile.q3 + b.profile.q3).max()))
        res["energy"] = max(res["energy"], abs(a.energy - b.energy))
    return res


def bifurcation_report(
    theta: float,
    cp: CriticalPoint,
    t_max: float = 1.0,
    t_step: float = 0.05,
    opts: SolveOptions | None = None,
) -> BifurcationReport:
    ts = np.arange(1, int(round(t_max / t_step)) + 1) * t_step
    plus = follow_bd_branch(theta, cp, ts, opts)
    minus = follow_bd_branch(theta, cp, -ts, opts)
    if plus.points:
        p0 = plus.points[0]
        curvature = (p0.lam - cp.lambda_c) / p0.t**2
    else:
        curvature = float("nan")
    return BifurcationReport(theta, cp.lambda_c, cp.kernel, cp.chi, plus, minus,
                             symmetry_residuals(plus, minus), curvature)


@dataclass
class PitchforkCheck:
    passed: bool
    symmetry_ok: bool
    below_count: int
    above_count: int
    residuals: dict[str, float]


def verify_pitchfork(
    report: BifurcationReport,
    offset: float = 0.1,
    n_starts: int = 10,
    seed: int = 0,
    radius: float = 0.3,
    tolerance: float = 1e-8,
    energy_tolerance: float = 1e-10,
    opts: SolveOptions | None = None,
) -> PitchforkCheck:
    """Symmetry residuals plus local multi-start counts at lambda_c -+ offset.

    The starts are smooth perturbations of the EE solution at each probe
    thickness; each start is solved by both Newton and gradient flow so that
    saddles and minimizers in the neighborhood are both reachable.
    """
    theta = report.theta
    grid = report.chi_c.grid
    res = report.symmetry_residuals
    sym_ok = (
        res["lambda"] < tolerance and res["q12"] < tolerance and res["q3"] < tolerance
        and res["energy"] < energy_tolerance
    )
    counts = []
    for lam in (report.lambda_c - offset, report.lambda_c + offset):
        chi = solve_ee(report.chi_c, lam, theta, opts)
        if not chi.converged:
            counts.append(-1)
            continue
        sols = multi_start(lam, theta, n_starts, seed, opts, grid=grid, center=chi.profile.embed(),
                           radius=radius, methods=("newton", "flow"))
        counts.append(len(sols))
    below, above = counts
    return PitchforkCheck(sym_ok and below == 1 and above == 3, sym_ok, below, above, res)
