"""Independent plan certification by dense sampling.

Everything here works from evaluated curves and raw arrangement geometry;
no planner bookkeeping (certificates, assignments, bounds) is consulted.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from flatplan import qp
from flatplan.flatness import GRAVITY, SingularVelocityError, flat_samples, phi_input, theta

FD_STEP = 1e-4  # centered-difference step for the dynamics residual, seconds


@dataclass(frozen=True)
class VerificationReport:
    """Sampled safety and consistency metrics for a set of plans.

    min_obstacle_clearance is a signed distance: negative means a sample
    lies inside an obstacle.  min_interagent_distance is inf when fewer
    than two plans are given (minimum over an empty set of pairs), and
    max_waypoint_error is 0 when no reference waypoints are supplied.
    """

    min_obstacle_clearance: float
    min_interagent_distance: float
    max_waypoint_error: float
    max_dynamics_residual: float
    samples: int
    singular_samples: int = 0


def signed_distance(point, halfspaces) -> float:
    """Signed distance from a point to a polytope {x : A x <= b}.

    Positive outside (projection QP), negative inside (depth behind the
    least-violated facet).
    """
    a, b = halfspaces
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    s = np.asarray(point, dtype=float)
    norms = np.linalg.norm(a, axis=1)
    facet = float(np.max((a @ s - b) / norms))
    if facet <= 0.0:
        return facet
    sol = qp.solve(qp.QuadraticProgram(np.eye(s.size), -s, G=a, g=b))
    if sol.status != qp.OPTIMAL:
        # conservative: the facet bound underestimates the true distance
        return facet
    return float(np.linalg.norm(sol.x - s))


def _min_clearance(points: np.ndarray, obstacles) -> float:
    """Exact minimum signed distance over samples x obstacles.

    The most-violated-facet value lower-bounds the signed distance, so
    candidates are projected in ascending-bound order and the scan stops
    once no remaining bound can undercut the running minimum.
    """
    if not obstacles:
        return np.inf
    bounds = []
    for obs in obstacles:
        a, b = obs.halfspaces
        norms = np.linalg.norm(a, axis=1)
        bounds.append(((points @ a.T - b) / norms).max(axis=1))
    lb = np.stack(bounds, axis=1)  # samples x obstacles
    flat = lb.ravel()
    order = np.argsort(flat)
    best = np.inf
    n_obs = len(obstacles)
    for idx in order:
        if flat[idx] >= best:
            break
        s_idx, o_idx = divmod(int(idx), n_obs)
        dist = signed_distance(points[s_idx], obstacles[o_idx].halfspaces)
        best = min(best, dist)
    return float(best)


def _dynamics_residual(curve, ts: np.ndarray, g: float, h: float):
    """Worst coordinated-turn residual via centered differences.

    Returns (residual, singular_count); samples whose velocity vanishes at
    t or t +- h have no defined heading and are counted, not scored.
    """
    t0, t1 = curve.knots.t_start, curve.knots.t_end
    inner = ts[(ts >= t0 + h) & (ts <= t1 - h)]
    if inner.size == 0:
        return 0.0, 0
    grids = [
        flat_samples(curve, np.clip(inner + off, t0, t1)) for off in (-h, 0.0, h)
    ]
    worst = 0.0
    singular = 0
    for bwd, mid, fwd in zip(*grids):
        try:
            st = theta(mid)
            u = phi_input(mid, g)
            st_b, st_f = theta(bwd), theta(fwd)
        except SingularVelocityError:
            singular += 1
            continue
        xdot = (st_f.x - st_b.x) / (2.0 * h)
        ydot = (st_f.y - st_b.y) / (2.0 * h)
        dpsi = (st_f.psi - st_b.psi + np.pi) % (2.0 * np.pi) - np.pi
        psidot = dpsi / (2.0 * h)
        worst = max(
            worst,
            abs(xdot - u.va * np.cos(st.psi)),
            abs(ydot - u.va * np.sin(st.psi)),
            abs(psidot - g * np.tan(u.phi) / u.va),
        )
    return worst, singular


def check(plans, arrangement=None, agents=None, dt: float | None = None, g: float = GRAVITY) -> VerificationReport:
    """Sample every plan on a shared grid and measure safety margins.

    plans may be AgentPlan objects or bare curves.  agents, when given,
    supply the reference waypoints and timestamps for the waypoint-error
    field.  dt defaults to 1e-3 of the horizon and must keep at least
    1000 intervals.
    """
    curves = [p.curve() if hasattr(p, "curve") else p for p in plans]
    if not curves:
        raise ValueError("no plans to verify")
    t0 = curves[0].knots.t_start
    t1 = curves[0].knots.t_end
    horizon = t1 - t0
    if dt is None:
        dt = 1e-3 * horizon
    if dt <= 0 or dt > horizon / 1000.0:
        raise ValueError(f"dt must be in (0, {horizon / 1000.0:g}] for a dense grid")
    count = int(np.floor(horizon / dt)) + 1
    # accumulated rounding must not push the last sample past the domain
    ts = np.minimum(t0 + dt * np.arange(count), t1)

    sampled = [c.eval(ts) for c in curves]

    clearance = np.inf
    obstacles = list(arrangement.obstacles) if arrangement is not None else []
    for pts in sampled:
        clearance = min(clearance, _min_clearance(pts, obstacles))

    inter = np.inf
    for i in range(len(sampled)):
        for j in range(i + 1, len(sampled)):
            gaps = np.linalg.norm(sampled[i] - sampled[j], axis=1)
            inter = min(inter, float(gaps.min()))

    waypoint_err = 0.0
    if agents is not None:
        for curve, agent in zip(curves, agents):
            hits = curve.eval(agent.timestamps)
            waypoint_err = max(waypoint_err, float(np.linalg.norm(hits - agent.waypoints, axis=1).max()))

    residual = 0.0
    singular = 0
    for curve in curves:
        r, s = _dynamics_residual(curve, ts, g, FD_STEP)
        residual = max(residual, r)
        singular += s

    return VerificationReport(
        min_obstacle_clearance=float(clearance),
        min_interagent_distance=float(inter),
        max_waypoint_error=waypoint_err,
        max_dynamics_residual=residual,
        samples=count,
        singular_samples=singular,
    )
