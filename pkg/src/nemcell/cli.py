"""Command-line front end.

    nemcell solve     --theta -8 --lambda 1 --mode ee --out run/
    nemcell bifurcate --theta -8 --lambda-max 20 --out diagram/
    nemcell certify   --theta -8 --verify --out cert/
    nemcell limits    --theta -8 --lambdas 5,10,20,50 --out limits/

Exit codes: 0 success, 1 computational failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import export
from .asymptotics import h1_distance, limit_minimizer, uniaxial_limit_profile, uniqueness_radius
from .continuation import (
    bifurcation_report,
    conditions_from_branch,
    continue_ee_branch,
    solve_ee_warm,
    verify_pitchfork,
)
from .discretization import Grid
from .newton_solver import SolveOptions, multi_start, resolve_jobs, solve_ee
from .stability import hessian_smallest_eigenvalue

EXIT_OK, EXIT_FAILURE, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _positive(text: str) -> float:
    v = float(text)
    if not v > 0:
        raise argparse.ArgumentTypeError(f"expected a positive number, got {text}")
    return v


def _grid_size(text: str) -> int:
    n = int(text)
    if n < 5 or n % 2 == 0:
        raise argparse.ArgumentTypeError("grid size must be odd and at least 5")
    return n


def _lambda_list(text: str) -> list[float]:
    try:
        vals = sorted({float(s) for s in text.split(",") if s.strip()})
    except ValueError:
        raise argparse.ArgumentTypeError(f"cannot parse lambda list {text!r}") from None
    if not vals or any(v <= 0 for v in vals):
        raise argparse.ArgumentTypeError("lambdas must be positive")
    return vals


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nemcell", description="Frustrated nematic cell solver")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--theta", type=float, default=-8.0, help="reduced temperature (< 1)")
        p.add_argument("--grid", type=_grid_size, default=1001, help="number of nodes (odd)")
        p.add_argument("--tol", type=_positive, default=SolveOptions.residual_tolerance,
                       help="residual tolerance")
        p.add_argument("--out", type=Path, default=Path("."), help="output directory")

    p = sub.add_parser("solve", help="solve the cell at one thickness")
    common(p)
    p.add_argument("--lambda", dest="lam", type=_positive, required=True)
    p.add_argument("--mode", choices=("ee", "full"), default="ee",
                   help="ee: eigenvalue-exchange subspace; full: minimizer with q3(0) >= 0")

    p = sub.add_parser("bifurcate", help="EE branch, critical thickness and BD arms")
    common(p)
    p.add_argument("--lambda-min", type=_positive, default=0.1)
    p.add_argument("--lambda-max", type=_positive, default=20.0)
    p.add_argument("--lambda-step", type=_positive, default=0.05)
    p.add_argument("--t-max", type=_positive, default=1.0, help="largest BD amplitude")
    p.add_argument("--t-step", type=_positive, default=0.05)
    p.add_argument("--seed", type=int, default=0, help="seed of the pitchfork multi-start probe")

    p = sub.add_parser("certify", help="small-thickness uniqueness certificate")
    common(p)
    p.add_argument("--resolution", type=int, default=61, help="sampling points per axis for c2")
    p.add_argument("--verify", action="store_true", help="multi-start check at 0.9 lambda0")
    p.add_argument("--starts", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--jobs", type=int, default=None, help="worker processes (default $NEMCELL_JOBS or 1)")

    p = sub.add_parser("limits", help="distance of the minimizer to the uniaxial geodesic")
    common(p)
    p.add_argument("--lambdas", type=_lambda_list, default=[5.0, 10.0, 20.0, 50.0])
    p.add_argument("--jobs", type=int, default=None, help="worker processes (default $NEMCELL_JOBS or 1)")
    return parser


def _params(args) -> dict:
    skip = {"out", "jobs"}
    return {k: v for k, v in sorted(vars(args).items()) if k not in skip and not callable(v)}


def _record(args, outdir: Path, outcome: dict, artifacts: list[Path], t0: float) -> Path:
    payload = {
        "command": args.command,
        "outcome": outcome,
        "artifacts": [p.name for p in artifacts],
        "wall_time": time.perf_counter() - t0,
    }
    return export.write_json(outdir / f"{args.command}_run.json", payload, _params(args))


# commands -------------------------------------------------------------------

def cmd_solve(args) -> int:
    t0 = time.perf_counter()
    grid = Grid(args.grid)
    opts = SolveOptions(residual_tolerance=args.tol)
    if args.mode == "ee":
        out = solve_ee_warm(args.lam, args.theta, grid, opts)
        profile = out.profile.embed() if out.converged else None
    else:
        out = limit_minimizer(args.lam, args.theta, grid, opts)
        profile = out.profile if out.converged else None
    summary = {"converged": out.converged, "residual": out.final_residual, "tolerance": out.tolerance,
               "iterations": out.iterations, "method": out.method, "message": out.message}
    artifacts = []
    if profile is not None:
        summary["energy"] = out.energy
        summary["q3_mid"] = float(profile.q3[grid.mid])
        artifacts.append(export.write_profile_csv(args.out / "profile.csv", profile, _params(args)))
    _record(args, args.out, summary, artifacts, t0)
    if not out.converged:
        print(f"solve did not converge: {out.message} (residual {out.final_residual:.3g})", file=sys.stderr)
        return EXIT_FAILURE
    return EXIT_OK


def _ee_energy_at(br, lam: float, theta: float, opts: SolveOptions) -> float:
    k = int(np.argmin(np.abs(br.lambdas - lam)))
    out = solve_ee(br.points[k].profile, lam, theta, opts)
    return out.energy if out.converged else float("nan")


def cmd_bifurcate(args) -> int:
    t0 = time.perf_counter()
    if args.lambda_max <= args.lambda_min:
        raise UsageError("--lambda-max must exceed --lambda-min")
    grid = Grid(args.grid)
    opts = SolveOptions(residual_tolerance=args.tol)
    params = _params(args)
    br = continue_ee_branch(args.theta, args.lambda_min, args.lambda_max, args.lambda_step, grid, opts)
    cond = conditions_from_branch(args.theta, br, grid, opts)
    conditions = {
        "condition_i": cond.condition_i, "condition_ii": cond.condition_ii, "lambda_c": cond.lambda_c,
        "mu_slope": cond.mu_slope, "truncation_lambda": cond.truncation_lambda,
        "inconclusive": cond.inconclusive, "message": cond.message,
    }
    rows = [("EE", p.lam, 0.0, p.energy, p.nu, p.mu, 0.0) for p in br.points]
    payload: dict = {"theta": args.theta, "conditions": conditions,
                     "ee_branch": {"points": len(br.points), "truncated": br.truncated, "message": br.message}}
    artifacts = []
    if not cond.passed:
        artifacts.append(export.write_csv(args.out / "diagram.csv", export.DIAGRAM_HEADER, rows, params))
        artifacts.append(export.write_json(args.out / "report.json", payload, params))
        _record(args, args.out, {"passed": False, "message": cond.message}, artifacts, t0)
        print(f"bifurcation conditions not met: {cond.message}", file=sys.stderr)
        return EXIT_FAILURE
    cp = cond.critical
    rep = bifurcation_report(args.theta, cp, args.t_max, args.t_step, opts)
    check = verify_pitchfork(rep, seed=args.seed, opts=opts)
    energy_gap = {}
    for arm in (rep.bd_plus, rep.bd_minus):
        for p in arm.points:
            rows.append((arm.branch_id, p.lam, p.t, p.energy, float("nan"), float("nan"), p.q3_mid))
        # recorded only: BD energy minus the EE energy at the same lambda
        energy_gap[arm.branch_id] = [[p.t, p.lam, p.energy - _ee_energy_at(br, p.lam, args.theta, opts)]
                                     for p in arm.points]
    payload.update({
        "lambda_c": rep.lambda_c,
        "mu_at_lambda_c": cp.mu,
        "kernel": {"x": grid.nodes[1:-1], "h_c": rep.kernel},
        "curvature": rep.curvature,
        "direction": rep.direction,
        "symmetry_residuals": rep.symmetry_residuals,
        "bd_arms": {
            arm.branch_id: {"points": len(arm.points), "truncated": arm.truncated, "message": arm.message}
            for arm in (rep.bd_plus, rep.bd_minus)
        },
        "pitchfork_check": {"passed": check.passed, "symmetry_ok": check.symmetry_ok,
                            "solutions_below": check.below_count, "solutions_above": check.above_count},
        "bd_minus_ee_energy": energy_gap,
    })
    artifacts.append(export.write_csv(args.out / "diagram.csv", export.DIAGRAM_HEADER, rows, params))
    artifacts.append(export.write_json(args.out / "report.json", payload, params))
    _record(args, args.out, {"passed": True, "lambda_c": rep.lambda_c, "direction": rep.direction}, artifacts, t0)
    return EXIT_OK


def cmd_certify(args) -> int:
    t0 = time.perf_counter()
    if args.resolution < 3 or args.starts < 1:
        raise UsageError("--resolution must be >= 3 and --starts >= 1")
    cert = uniqueness_radius(args.theta, resolution=args.resolution)
    payload = {"certificate": cert.as_dict()}
    status = EXIT_OK
    if args.verify:
        lam = 0.9 * cert.lambda0
        grid = Grid(args.grid)
        sols = multi_start(lam, args.theta, args.starts, args.seed, SolveOptions(residual_tolerance=args.tol),
                           grid=grid, jobs=resolve_jobs(args.jobs))
        verification = {"lambda": lam, "starts": args.starts, "distinct_solutions": len(sols)}
        if sols:
            verification["hessian_min_eigenvalue"] = hessian_smallest_eigenvalue(sols[0].profile, lam, args.theta)
        payload["verification"] = verification
        if len(sols) != 1:
            status = EXIT_FAILURE
            print(f"certificate contradiction: {len(sols)} distinct solutions at lambda={lam:.6g}", file=sys.stderr)
    path = export.write_json(args.out / "certificate.json", payload, _params(args))
    _record(args, args.out, {"lambda0": cert.lambda0, "status": status}, [path], t0)
    return status


def _limit_row(task):
    lam, theta, n, tol = task
    grid = Grid(n)
    out = limit_minimizer(lam, theta, grid, SolveOptions(residual_tolerance=tol))
    target = uniaxial_limit_profile(grid, theta).profile
    dist = h1_distance(out.profile, target) if out.converged else float("nan")
    q3 = float(out.profile.q3[grid.mid]) if out.converged else float("nan")
    return lam, dist, q3, out.energy, out.final_residual, out.converged


def cmd_limits(args) -> int:
    t0 = time.perf_counter()
    tasks = [(lam, args.theta, args.grid, args.tol) for lam in args.lambdas]
    jobs = resolve_jobs(args.jobs)
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_limit_row, tasks))  # map keeps parameter order
    else:
        rows = [_limit_row(t) for t in tasks]
    ok = all(r[-1] for r in rows)
    dist = np.array([r[1] for r in rows])
    decreasing = bool(ok and np.all(np.diff(dist) < 0))
    header = ("lambda", "h1_distance", "q3_mid", "energy", "residual", "converged")
    path = export.write_csv(args.out / "limits.csv", header, rows, _params(args))
    _record(args, args.out, {"all_converged": ok, "strictly_decreasing": decreasing}, [path], t0)
    if not ok:
        failed = [r[0] for r in rows if not r[-1]]
        print(f"minimization failed at lambda = {failed}; table is partial", file=sys.stderr)
        return EXIT_FAILURE
    return EXIT_OK


COMMANDS = {"solve": cmd_solve, "bifurcate": cmd_bifurcate, "certify": cmd_certify, "limits": cmd_limits}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if not args.theta < 1:
        parser.error(f"--theta must be < 1 (got {args.theta})")
    if getattr(args, "jobs", None) is not None and args.jobs < 1:
        parser.error("--jobs must be >= 1")
    args.out.mkdir(parents=True, exist_ok=True)
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        parser.error(str(exc))
    except Exception as exc:  # computational failure: report, never exit 0
        print(f"nemcell {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
