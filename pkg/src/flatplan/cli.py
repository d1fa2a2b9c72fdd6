"""Command-line front end: plan, verify, plot, and sweep scenario files.

Artifacts are plain files next to each other in --out: plan JSON, per-agent
trace CSVs, verification report JSON, and SVG figures.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import re
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from flatplan import plotting, scenario, verification
from flatplan.bspline import ControlPolygon, KnotVector, SplineCurve
from flatplan.flatness import SingularVelocityError, flat_samples, phi_input, theta
from flatplan.planner import (
    AgentPlan,
    BinaryAssignment,
    InfeasibleProblemError,
    PlanningProblem,
    SeparatingPlanes,
    SplineSpec,
    plan_exact,
    plan_mip,
    plan_multi,
)

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_INFEASIBLE = 2

SWEEP_GRID = (10, 15, 20, 25, 30)
SWEEP_METHODS = (("MI", "mip"), ("EX", "exact"))


def _apply_overrides(problem: PlanningProblem, args) -> PlanningProblem:
    n = args.n if args.n is not None else problem.spline.n
    d = args.d if args.d is not None else problem.spline.d
    if (n, d) != (problem.spline.n, problem.spline.d):
        problem = replace(problem, spline=SplineSpec(n, d))
    return problem


def _plan(problem: PlanningProblem, method: str, mode: str):
    multi = len(problem.agents) >= 2
    if method == "mip":
        return plan_multi(problem, mode) if multi else plan_mip(problem)
    if method == "exact":
        try:
            warm = plan_multi(problem, mode) if multi else plan_mip(problem)
        except InfeasibleProblemError:
            warm = None
        return plan_exact(problem, warm_start=warm)
    raise ValueError(f"unknown method {method!r}")


def _grid(t0: float, t1: float, dt: float) -> np.ndarray:
    count = int(np.floor((t1 - t0) / dt)) + 1
    return np.minimum(t0 + dt * np.arange(count), t1)


def _safe_name(name: str, fallback: str) -> str:
    cleaned = re.sub(r"[^A-Za-z0-9_.-]+", "_", name).strip("_")
    return cleaned or fallback


def _certificates_record(certs):
    if certs is None:
        return None
    if isinstance(certs, BinaryAssignment):
        return {
            "type": "binary",
            "alpha": [{"key": list(k), "value": v} for k, v in sorted(certs.alpha.items(), key=str)],
            "beta": [{"key": list(k), "value": v} for k, v in sorted(certs.beta.items(), key=str)],
        }
    if isinstance(certs, SeparatingPlanes):
        return {
            "type": "planes",
            "planes": [
                {"key": list(k), "normal": [float(c) for c in vec]}
                for k, vec in sorted(certs.planes.items())
            ],
            "inter": [
                {"key": list(k), "normal": [float(c) for c in vec]}
                for k, vec in sorted(certs.inter.items())
            ],
        }
    return {"type": type(certs).__name__}


def _write_plan_file(path: Path, problem: PlanningProblem, plans, method: str, dt: float) -> None:
    doc = {
        "version": 1,
        "method": method,
        "dt": dt,
        "spline": {"n": problem.spline.n, "d": problem.spline.d},
        "plans": [
            {
                "name": plan.name,
                "status": plan.status,
                "length": plan.cost,
                "objective": plan.objective,
                "knots": [float(t) for t in plan.knots.knots],
                "order": plan.knots.order,
                "control_points": [[float(c) for c in p] for p in plan.polygon.points],
                "certificates": _certificates_record(plan.certificates),
            }
            for plan in plans
        ],
    }
    path.write_text(json.dumps(doc, indent=2) + "\n")


def _load_plan_file(path: Path) -> list[AgentPlan]:
    doc = json.loads(Path(path).read_text())
    plans = []
    for entry in doc["plans"]:
        kv = KnotVector(np.array(entry["knots"], dtype=float), int(entry["order"]))
        plans.append(
            AgentPlan(
                polygon=ControlPolygon(np.array(entry["control_points"], dtype=float)),
                knots=kv,
                cost=float(entry["length"]),
                objective=float(entry["objective"]),
                certificates=None,  # records in the file are for inspection only
                status=entry["status"],
                name=entry.get("name", ""),
            )
        )
    return plans


def _write_trace(path: Path, curve: SplineCurve, dt: float, g: float) -> int:
    """CSV of t, x, y, psi, va, phi; singular samples get nan state rows."""
    ts = _grid(curve.knots.t_start, curve.knots.t_end, dt)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "x", "y", "psi", "va", "phi"])
        for t, sample in zip(ts, flat_samples(curve, ts)):
            try:
                st = theta(sample)
                u = phi_input(sample, g)
                row = [t, st.x, st.y, st.psi, u.va, u.phi]
            except SingularVelocityError:
                row = [t, sample.z[0], sample.z[1], float("nan"), float("nan"), float("nan")]
            writer.writerow([f"{v:.9g}" for v in row])
    return ts.size


def _dump_infeasibility(err: InfeasibleProblemError) -> None:
    print(f"infeasible: {err}", file=sys.stderr)
    for key, options in sorted((err.failures or {}).items(), key=str):
        print(f"  refuted {key}: options {sorted(options)}", file=sys.stderr)


def _default_dt(problem: PlanningProblem, args) -> float:
    if args.dt is not None:
        return args.dt
    return 1e-3 * (problem.t_end - problem.t_start)


def _report_dict(report) -> dict:
    out = {}
    for key, val in dataclasses.asdict(report).items():
        if isinstance(val, float) and not np.isfinite(val):
            val = None  # strict JSON has no Infinity
        out[key] = val
    return out


def cmd_plan(args) -> int:
    problem = _apply_overrides(scenario.parse(args.scenario), args)
    gravity = scenario.gravity_of(scenario.load_document(args.scenario))
    dt = _default_dt(problem, args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    try:
        t0 = time.perf_counter()
        plans = _plan(problem, args.method, args.mode)
        wall = time.perf_counter() - t0
    except InfeasibleProblemError as err:
        _dump_infeasibility(err)
        return EXIT_INFEASIBLE
    _write_plan_file(out / "plan.json", problem, plans, args.method, dt)
    for k, plan in enumerate(plans):
        name = _safe_name(plan.name, f"agent{k}")
        rows = _write_trace(out / f"trace_{name}.csv", plan.curve(), dt, gravity)
        print(
            f"{plan.name or f'agent{k}'}: status={plan.status} length={plan.cost:.4f} "
            f"objective={plan.objective:.4f} trace_rows={rows}"
        )
    print(f"planned in {wall:.2f}s -> {out / 'plan.json'}")
    return EXIT_OK


def cmd_verify(args) -> int:
    problem = _apply_overrides(scenario.parse(args.scenario), args)
    gravity = scenario.gravity_of(scenario.load_document(args.scenario))
    dt = _default_dt(problem, args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.plan is not None:
        plans = _load_plan_file(args.plan)
    else:
        try:
            plans = _plan(problem, args.method, args.mode)
        except InfeasibleProblemError as err:
            _dump_infeasibility(err)
            return EXIT_INFEASIBLE
    report = verification.check(
        plans, problem.arrangement, agents=problem.agents, dt=dt, g=gravity
    )
    (out / "report.json").write_text(json.dumps(_report_dict(report), indent=2) + "\n")
    for key, val in _report_dict(report).items():
        print(f"{key}: {val}")
    if report.min_obstacle_clearance < 0:
        print("obstacle violation detected", file=sys.stderr)
        return EXIT_ERROR
    return EXIT_OK


def cmd_plot(args) -> int:
    problem = _apply_overrides(scenario.parse(args.scenario), args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.plan is not None:
        plans = _load_plan_file(args.plan)
    else:
        try:
            plans = _plan(problem, args.method, args.mode)
        except InfeasibleProblemError as err:
            _dump_infeasibility(err)
            return EXIT_INFEASIBLE
    target = out / "plan.svg"
    plotting.plot_plan(problem, plans, target)
    print(f"figure -> {target}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    base = _apply_overrides(scenario.parse(args.scenario), args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    grid = args.grid or SWEEP_GRID
    rows = []
    for n in grid:
        for label, method in SWEEP_METHODS:
            try:
                problem = replace(base, spline=SplineSpec(n, base.spline.d))
            except ValueError as err:
                rows.append({"n": n, "method": label, "length": "*", "wall_time": 0.0,
                             "status": f"invalid: {err}"})
                continue
            t0 = time.perf_counter()
            try:
                plans = _plan(problem, method, args.mode)
                wall = time.perf_counter() - t0
                rows.append({
                    "n": n, "method": label,
                    "length": float(sum(p.cost for p in plans)),
                    "wall_time": wall, "status": plans[0].status,
                })
            except InfeasibleProblemError:
                rows.append({"n": n, "method": label, "length": "*",
                             "wall_time": time.perf_counter() - t0, "status": "infeasible"})
    csv_path = out / "sweep.csv"
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["n", "method", "length", "wall_time", "status"])
        for row in rows:
            length = row["length"] if row["length"] == "*" else f"{row['length']:.6f}"
            writer.writerow([row["n"], row["method"], length, f"{row['wall_time']:.3f}", row["status"]])
    plotting.plot_sweep(rows, out / "sweep.svg")
    for row in rows:
        print(f"n={row['n']} {row['method']}: length={row['length']} status={row['status']}")
    print(f"sweep -> {csv_path}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="flatplan",
        description="Plan, verify, and plot collision-free B-spline trajectories.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, with_plan=False):
        p.add_argument("scenario", help="scenario JSON file")
        p.add_argument("--method", choices=("mip", "exact"), default="mip")
        p.add_argument("--mode", choices=("simultaneous", "iterative"), default="simultaneous")
        p.add_argument("--n", type=int, default=None, help="override control-point count")
        p.add_argument("--d", type=int, default=None, help="override spline order")
        p.add_argument("--dt", type=float, default=None, help="sampling step [s]")
        p.add_argument("--out", default=".", help="output directory")
        if with_plan:
            p.add_argument("--plan", default=None, help="reuse a saved plan JSON instead of solving")

    p_plan = sub.add_parser("plan", help="solve a scenario; write plan JSON and trace CSVs")
    common(p_plan)
    p_plan.set_defaults(func=cmd_plan)

    p_verify = sub.add_parser("verify", help="sample a plan densely; write report JSON")
    common(p_verify, with_plan=True)
    p_verify.set_defaults(func=cmd_verify)

    p_plot = sub.add_parser("plot", help="render the scene and plans to SVG")
    common(p_plot, with_plan=True)
    p_plot.set_defaults(func=cmd_plot)

    p_sweep = sub.add_parser("sweep", help="plan across control-point counts; write CSV and SVG")
    common(p_sweep)
    p_sweep.add_argument("--grid", type=int, nargs="+", default=None,
                         help="control-point counts to sweep")
    p_sweep.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except scenario.ScenarioError as err:
        print(f"scenario error: {err}", file=sys.stderr)
        return EXIT_ERROR
    except (ValueError, OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
