"""SVG figure rendering for plans and sweep summaries.

Every drawn artist carries a gid (SVG id) naming what it is, so tests and
downstream tooling can count elements instead of comparing pixels.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np
from scipy.spatial import ConvexHull
from scipy.spatial._qhull import QhullError

from flatplan.planner import PlanningProblem

CURVE_SAMPLES = 400

OBSTACLE_STYLE = dict(facecolor="0.55", edgecolor="0.25", alpha=0.85, zorder=2)
HULL_STYLE = dict(facecolor="tab:blue", edgecolor="none", alpha=0.08, zorder=1)
AGENT_COLORS = ("tab:blue", "tab:orange", "tab:green", "tab:red", "tab:purple")


def _line_box_segment(normal, offset, lo, hi):
    """Endpoints of {x : normal . x = offset} clipped to the box, or None."""
    a = np.asarray(normal, dtype=float)
    base = a * offset / float(a @ a)
    direction = np.array([-a[1], a[0]]) / np.linalg.norm(a)
    # clip the parametric line base + t*direction against each box slab
    t_lo, t_hi = -np.inf, np.inf
    for axis in range(2):
        if abs(direction[axis]) < 1e-15:
            if not lo[axis] - 1e-12 <= base[axis] <= hi[axis] + 1e-12:
                return None
            continue
        t1 = (lo[axis] - base[axis]) / direction[axis]
        t2 = (hi[axis] - base[axis]) / direction[axis]
        t_lo = max(t_lo, min(t1, t2))
        t_hi = min(t_hi, max(t1, t2))
    if t_lo >= t_hi:
        return None
    return base + t_lo * direction, base + t_hi * direction


def _window_hulls(points: np.ndarray, d: int):
    """Vertex loops of the sliding d-point convex hulls of the polygon."""
    loops = []
    for i in range(points.shape[0] - d + 1):
        win = points[i : i + d]
        try:
            hull = ConvexHull(win)
            loops.append(win[hull.vertices])
        except QhullError:
            loops.append(win)  # collinear window: the polyline is the hull
    return loops


def plot_plan(problem: PlanningProblem, plans, path) -> None:
    """Scene figure: obstacles, hyperplanes, hulls, control polygons, curves."""
    fig, ax = plt.subplots(figsize=(8.0, 5.0))
    arr = problem.arrangement

    if arr is not None:
        lo, hi = arr.bounding_box
        for m, h in enumerate(arr.hyperplanes):
            seg = _line_box_segment(h.normal, h.offset, lo, hi)
            if seg is None:
                continue
            (line,) = ax.plot(
                [seg[0][0], seg[1][0]], [seg[0][1], seg[1][1]],
                color="0.75", lw=0.8, ls=":", zorder=0,
            )
            line.set_gid(f"hyperplane-{m}")
        for idx, obs in enumerate(arr.obstacles):
            patch = plt.Polygon(obs.vertices, **OBSTACLE_STYLE)
            patch.set_gid(f"obstacle-{idx}")
            ax.add_patch(patch)

    d = problem.spline.d
    for k, plan in enumerate(plans):
        color = AGENT_COLORS[k % len(AGENT_COLORS)]
        pts = plan.polygon.points
        for i, loop in enumerate(_window_hulls(pts, d)):
            patch = plt.Polygon(loop, **HULL_STYLE)
            patch.set_gid(f"hull-{k}-{i}")
            ax.add_patch(patch)
        (poly_line,) = ax.plot(
            pts[:, 0], pts[:, 1], color=color, lw=0.8, ls="--",
            marker="o", ms=3.0, mfc="white", zorder=3,
        )
        poly_line.set_gid(f"control-polygon-{k}")
        ts = np.linspace(plan.knots.t_start, plan.knots.t_end, CURVE_SAMPLES)
        xy = plan.curve().eval(ts)
        (curve_line,) = ax.plot(xy[:, 0], xy[:, 1], color=color, lw=1.8, zorder=4)
        curve_line.set_gid(f"curve-{k}")
        label = plan.name or f"agent{k}"
        curve_line.set_label(label)

        agent = problem.agents[k] if k < len(problem.agents) else None
        if agent is not None:
            marks = ax.scatter(
                agent.waypoints[:, 0], agent.waypoints[:, 1],
                marker="x", s=45, color="black", zorder=5,
            )
            marks.set_gid(f"waypoints-{k}")

    ax.set_aspect("equal", adjustable="datalim")
    ax.set_xlabel("x [m]")
    ax.set_ylabel("y [m]")
    if len(plans) > 1:
        ax.legend(loc="best", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)


def plot_sweep(rows, path) -> None:
    """Path length against control-point count, one line per method."""
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    methods = sorted({row["method"] for row in rows})
    for method in methods:
        entries = [
            (row["n"], row["length"])
            for row in rows
            if row["method"] == method and isinstance(row["length"], (int, float))
        ]
        if not entries:
            continue
        entries.sort()
        ns, lengths = zip(*entries)
        (line,) = ax.plot(ns, lengths, marker="o", label=method)
        line.set_gid(f"sweep-{method}")
    ax.set_xlabel("control points n")
    ax.set_ylabel("path length [m]")
    ax.legend(loc="best")
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)
