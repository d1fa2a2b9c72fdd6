"""Trajectory planning: waypoint-pinned B-splines that avoid forbidden cells.

Two planners share one QP backend.  The mixed-integer route requires, for
every sliding window of d control points, that at least one facet of each
forbidden cell pushes the whole window outside; the one-facet-of-many
disjunction is resolved lazily by best-first branch and bound, each node a
plain QP.  The exact route alternates between fitting maximum-margin
separating hyperplanes (window hull vs. cell) and re-solving the control
points against those planes.  Multi-agent problems either couple window
pairs along mirrored facet directions in one solve, or plan agents in order
with earlier agents' windows treated as region-indexed obstacles.

Facet rows are normalized to unit normals throughout, so margins and
inflation offsets are geometric distances.
"""

from __future__ import annotations

import heapq
import itertools
from dataclasses import dataclass, field, replace

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.spatial import ConvexHull, HalfspaceIntersection, QhullError

from . import qp
from .bspline import (
    ControlPolygon,
    KnotVector,
    SplineCurve,
    basis_matrix,
    derivative_matrix,
    gram_matrix,
)
from .geometry import Arrangement, Obstacle, SafetyRegion, inflate_obstacle

OPTION_SLACK = 1e-9   # slack when testing whether a disjunct is already satisfied
AUDIT_TOL = 1e-7      # direct re-check tolerance for certificates


class PlanningError(RuntimeError):
    pass


class InfeasibleProblemError(PlanningError):
    """No admissible plan at the current spline size.

    ``failures`` maps a disjunct key (see BinaryAssignment) to the option
    indices whose node QPs were proven infeasible.
    """

    def __init__(self, message: str, failures: dict | None = None):
        super().__init__(message)
        self.failures = failures or {}


@dataclass(frozen=True, eq=False)
class AgentSpec:
    waypoints: np.ndarray
    timestamps: np.ndarray
    safety_region: SafetyRegion | None = None
    name: str = ""

    def __post_init__(self) -> None:
        pts = np.atleast_2d(np.asarray(self.waypoints, dtype=float))
        ts = np.atleast_1d(np.asarray(self.timestamps, dtype=float))
        if pts.shape[0] != ts.size:
            raise ValueError("one timestamp per waypoint required")
        if pts.shape[0] < 2:
            raise ValueError("need at least two waypoints")
        if np.any(np.diff(ts) <= 0):
            raise ValueError("timestamps must be strictly increasing")
        pts.setflags(write=False)
        ts.setflags(write=False)
        object.__setattr__(self, "waypoints", pts)
        object.__setattr__(self, "timestamps", ts)


@dataclass(frozen=True)
class SplineSpec:
    n: int
    d: int

    def __post_init__(self) -> None:
        if self.d < 3:
            raise ValueError("spline order d must be at least 3")
        if self.n < self.d:
            raise ValueError(f"need n >= d, got n={self.n}, d={self.d}")

    def knot_vector(self, t_start: float, t_end: float) -> KnotVector:
        return KnotVector.clamped_uniform(t_start, t_end, self.n, self.d)


@dataclass(frozen=True, eq=False)
class PlannerConfig:
    big_m: float | None = None          # None: derived from the bounding box
    margin: float = 1e-6
    max_bb_nodes: int = 20_000
    n_step: int = 4
    n_max: int = 40
    max_rounds: int = 30
    convergence_tol: float = 1e-6
    cost_weight: np.ndarray | None = None  # dim x dim PSD axis weighting


@dataclass(frozen=True, eq=False)
class PlanningProblem:
    agents: tuple[AgentSpec, ...]
    spline: SplineSpec
    arrangement: Arrangement | None = None
    config: PlannerConfig = field(default_factory=PlannerConfig)

    def __post_init__(self) -> None:
        agents = tuple(self.agents)
        if not agents:
            raise ValueError("at least one agent required")
        t0, tn = agents[0].timestamps[0], agents[0].timestamps[-1]
        for a in agents:
            if a.timestamps[0] != t0 or a.timestamps[-1] != tn:
                raise ValueError("all agents must share first and last timestamps (shared knots)")
            if a.waypoints.shape[1] != agents[0].waypoints.shape[1]:
                raise ValueError("agents must share the workspace dimension")
            if a.waypoints.shape[0] > self.spline.n + 1:
                raise ValueError("more waypoints than control points")
        object.__setattr__(self, "agents", agents)

    @property
    def dim(self) -> int:
        return self.agents[0].waypoints.shape[1]

    @property
    def t_start(self) -> float:
        return float(self.agents[0].timestamps[0])

    @property
    def t_end(self) -> float:
        return float(self.agents[0].timestamps[-1])

    @property
    def knots(self) -> KnotVector:
        return self.spline.knot_vector(self.t_start, self.t_end)

    def regions(self) -> range:
        """Sliding-window indices i; window i covers control points i-d+1..i."""
        return range(self.spline.d - 1, self.spline.n + 1)


@dataclass(frozen=True, eq=False)
class BinaryAssignment:
    """0/1 selectors: 0 marks the facet enforced for a window/obstacle pair.

    alpha keys are (agent, region, obstacle, option); obstacle is the index
    into the arrangement's obstacles, or a "prev:<k>" tag in iterative
    multi-agent runs.  beta keys are (agent1, agent2, region, option) over
    the mirrored facet-direction pool.  Each group keeps at least one zero.
    """

    alpha: dict
    beta: dict

    def __post_init__(self) -> None:
        for label, chosen in (("alpha", self.alpha), ("beta", self.beta)):
            groups: dict = {}
            for key, val in chosen.items():
                if val not in (0, 1):
                    raise ValueError(f"{label}[{key}] must be 0 or 1")
                groups.setdefault(key[:-1], []).append(val)
            for group, vals in groups.items():
                if sum(vals) > len(vals) - 1:
                    raise ValueError(f"{label} group {group} discards every facet")


@dataclass(frozen=True, eq=False)
class SeparatingPlanes:
    """Unit normals certifying window/obstacle and window/window separation."""

    planes: dict   # (agent, region, obstacle) -> unit vector
    inter: dict    # (agent1, agent2, region) -> unit vector


@dataclass(frozen=True, eq=False)
class AgentPlan:
    polygon: ControlPolygon
    knots: KnotVector
    cost: float         # path length
    objective: float    # integrated squared speed (the minimized quadratic)
    certificates: BinaryAssignment | SeparatingPlanes | None
    status: str = "optimal"
    name: str = ""

    def curve(self) -> SplineCurve:
        return SplineCurve(self.knots, self.polygon)


def path_length(curve: SplineCurve, points_per_span: int = 16) -> float:
    """Arc length by fixed Gauss-Legendre quadrature on every knot span."""
    deriv = curve.derivative(1)
    nodes, weights = leggauss(points_per_span)
    total = 0.0
    for _, a, b in curve.knots.spans():
        ts = 0.5 * (b - a) * nodes + 0.5 * (a + b)
        speed = np.linalg.norm(deriv.eval(ts), axis=1)
        total += 0.5 * (b - a) * float(weights @ speed)
    return total


def big_m_constant(arrangement: Arrangement) -> float:
    """Constant large enough to slacken any discarded facet row in the box."""
    offsets = np.abs(arrangement.offsets())
    norms = np.linalg.norm(arrangement.normals(), axis=1)
    lo, hi = arrangement.bounding_box
    radius = max(np.linalg.norm(c) for c in itertools.product(*zip(lo, hi)))
    return 2.0 * (offsets.max() + norms.max() * radius)


def assemble(problem: PlanningProblem):
    """Quadratic objective and waypoint equalities over all agents' points.

    Decision vector: agents outermost, then axes, then control index.  The
    objective integrates squared speed via the first-derivative Gram matrix.
    """
    kv = problem.knots
    n, d, dim = problem.spline.n, problem.spline.d, problem.dim
    m1 = derivative_matrix(kv, 1).matrix
    g1 = gram_matrix(kv.trimmed(), d - 1)
    h_axis = m1 @ g1 @ m1.T
    weight = problem.config.cost_weight
    if weight is None:
        weight = np.eye(dim)
    h_agent = np.kron(np.asarray(weight, dtype=float), h_axis)
    nk = len(problem.agents)
    hess = np.kron(np.eye(nk), h_agent)
    hess = 0.5 * (hess + hess.T)

    nv = nk * dim * (n + 1)
    rows, rhs = [], []
    for k, agent in enumerate(problem.agents):
        cols = basis_matrix(kv, d, agent.timestamps)
        for s in range(agent.timestamps.size):
            for a in range(dim):
                row = np.zeros(nv)
                row[(k * dim + a) * (n + 1) : (k * dim + a + 1) * (n + 1)] = cols[:, s]
                rows.append(row)
                rhs.append(agent.waypoints[s, a])
    return hess, np.array(rows), np.array(rhs)


def _point_rows(nv: int, n: int, dim: int, k: int, js, c: np.ndarray):
    """Rows of c^T p_j over the given control indices of agent k."""
    out = np.zeros((len(js), nv))
    for r, j in enumerate(js):
        for a in range(dim):
            out[r, (k * dim + a) * (n + 1) + j] = c[a]
    return out


@dataclass(eq=False)
class _Disjunct:
    key: tuple
    # each option: (rows, rhs) meaning rows @ x <= rhs, margins folded in
    options: list

    def satisfied_option(self, x: np.ndarray) -> int | None:
        for m, (rows, rhs) in enumerate(self.options):
            if np.all(rows @ x <= rhs + OPTION_SLACK):
                return m
        return None


def _window(i: int, d: int) -> range:
    return range(i - d + 1, i + 1)


def _unit_rows(a: np.ndarray, b: np.ndarray):
    norms = np.linalg.norm(a, axis=1)
    return a / norms[:, None], b / norms


def _pair_pool(arrangement: Arrangement) -> np.ndarray:
    normals = arrangement.normals()
    normals = normals / np.linalg.norm(normals, axis=1)[:, None]
    return np.vstack([normals, -normals])


def _build_disjuncts(problem: PlanningProblem, prev_plans=()) -> list[_Disjunct]:
    arr = problem.arrangement
    cfg = problem.config
    n, d, dim = problem.spline.n, problem.spline.d, problem.dim
    nk = len(problem.agents)
    nv = nk * dim * (n + 1)
    margin = cfg.margin
    disjuncts = []

    if arr is not None:
        for k, agent in enumerate(problem.agents):
            for i in problem.regions():
                for l, obs in enumerate(arr.obstacles):
                    a, b = inflate_obstacle(obs.halfspaces, agent.safety_region)
                    a, b = _unit_rows(a, b)
                    options = []
                    for m in range(a.shape[0]):
                        rows = _point_rows(nv, n, dim, k, _window(i, d), -a[m])
                        rhs = np.full(d, -(b[m] + margin))
                        options.append((rows, rhs))
                    disjuncts.append(_Disjunct(("obs", k, i, l), options))

    if nk >= 2:
        if arr is None:
            raise PlanningError("inter-agent separation needs a hyperplane pool; provide an arrangement")
        pool = _pair_pool(arr)
        for k1, k2 in itertools.combinations(range(nk), 2):
            s1 = problem.agents[k1].safety_region
            s2 = problem.agents[k2].safety_region
            for i in problem.regions():
                options = []
                for h in pool:
                    delta = 0.0
                    if s1 is not None:
                        delta += s1.support(h)
                    if s2 is not None:
                        delta += s2.support(-h)
                    rows = []
                    for j1 in _window(i, d):
                        block1 = _point_rows(nv, n, dim, k1, [j1], h)[0]
                        for j2 in _window(i, d):
                            block2 = _point_rows(nv, n, dim, k2, [j2], h)[0]
                            rows.append(block1 - block2)
                    rhs = np.full(d * d, -(delta + margin))
                    options.append((np.array(rows), rhs))
                disjuncts.append(_Disjunct(("pair", k1, k2, i), options))

    # iterative mode: prior agents' windows act as region-indexed obstacles
    for p_idx, (prev, prev_region) in enumerate(prev_plans):
        prev_pts = prev.polygon.points
        base_pool = _pair_pool(arr) if arr is not None else np.zeros((0, dim))
        for k, agent in enumerate(problem.agents):
            for i in problem.regions():
                hull_pts = prev_pts[list(_window(i, d))]
                directions = [row for row in base_pool]
                try:
                    eqs = ConvexHull(hull_pts).equations
                    directions.extend(eqs[:, :dim])
                    directions.extend(-eqs[:, :dim])
                except QhullError:
                    # degenerate (collinear) window: separate across the segment
                    if dim == 2:
                        seg = hull_pts[-1] - hull_pts[0]
                        norm = np.linalg.norm(seg)
                        if norm > 1e-12:
                            perp = np.array([-seg[1], seg[0]]) / norm
                            directions.extend([perp, -perp])
                options = []
                seen = set()
                for a_dir in directions:
                    a_dir = np.asarray(a_dir, dtype=float)
                    a_dir = a_dir / np.linalg.norm(a_dir)
                    tag = tuple(np.round(a_dir, 9))
                    if tag in seen:
                        continue
                    seen.add(tag)
                    delta = 0.0
                    if agent.safety_region is not None:
                        delta += agent.safety_region.support(-a_dir)
                    if prev_region is not None:
                        delta += prev_region.support(a_dir)
                    thresh = float(np.max(hull_pts @ a_dir)) + delta + margin
                    rows = _point_rows(nv, n, dim, k, _window(i, d), -a_dir)
                    rhs = np.full(d, -thresh)
                    options.append((rows, rhs))
                disjuncts.append(_Disjunct((f"prev:{p_idx}", k, i, p_idx), options))
    return disjuncts


@dataclass(eq=False)
class _Node:
    bound: float
    objective: float
    assignment: dict
    g_rows: np.ndarray
    g_rhs: np.ndarray
    x: np.ndarray
    multipliers: np.ndarray


def _solve_node(hess, a_eq, b_eq, g_rows, g_rhs, warm=None):
    problem = qp.QuadraticProgram(hess, np.zeros(hess.shape[0]), A=a_eq, b=b_eq, G=g_rows, g=g_rhs)
    return qp.solve(problem, warm_start=warm)


def _solve_relaxed(hess, a_eq, b_eq, g_rows, g_rhs, penalty: float = 1e3):
    """Re-solve with one slack per separation row; used when a round over-asks."""
    nv = hess.shape[0]
    mr = g_rows.shape[0]
    quad = np.zeros((nv + mr, nv + mr))
    quad[:nv, :nv] = hess
    lin = np.concatenate([np.zeros(nv), np.full(mr, penalty)])
    a_pad = np.hstack([a_eq, np.zeros((a_eq.shape[0], mr))])
    g1 = np.hstack([g_rows, -np.eye(mr)])
    g2 = np.hstack([np.zeros((mr, nv)), -np.eye(mr)])
    sol = qp.solve(
        qp.QuadraticProgram(
            quad, lin, A=a_pad, b=b_eq, G=np.vstack([g1, g2]), g=np.concatenate([g_rhs, np.zeros(mr)])
        )
    )
    return sol


def plan_mip(problem: PlanningProblem, prev_plans=()) -> list[AgentPlan]:
    """Branch-and-bound over facet disjunctions, best-first on node bounds."""
    hess, a_eq, b_eq = assemble(problem)
    disjuncts = _build_disjuncts(problem, prev_plans)
    nv = hess.shape[0]

    root_sol = _solve_node(hess, a_eq, b_eq, np.zeros((0, nv)), np.zeros(0))
    if root_sol.status != qp.OPTIMAL:
        raise InfeasibleProblemError("waypoint system unsolvable: " + root_sol.status)

    failures: dict = {}
    seq = itertools.count()
    root = _Node(root_sol.objective, root_sol.objective, {}, np.zeros((0, nv)), np.zeros(0),
                 root_sol.x, root_sol.multipliers)
    heap = [(root.bound, next(seq), root)]
    incumbent = None
    incumbent_val = np.inf
    nodes_solved = 1
    capped = False

    while heap:
        bound, _, node = heapq.heappop(heap)
        if bound >= incumbent_val - 1e-12:
            continue
        violated = None
        free_choice = {}
        for dis in disjuncts:
            if dis.key in node.assignment:
                continue
            m = dis.satisfied_option(node.x)
            if m is None:
                violated = dis
                break
            free_choice[dis.key] = m
        if violated is None:
            if node.objective < incumbent_val:
                incumbent_val = node.objective
                incumbent = (node, free_choice)
            continue

        for m, (rows, rhs) in enumerate(violated.options):
            if nodes_solved >= problem.config.max_bb_nodes:
                capped = True
                break
            g_rows = np.vstack([node.g_rows, rows])
            g_rhs = np.concatenate([node.g_rhs, rhs])
            warm = (node.x, np.concatenate([node.multipliers, np.zeros(rhs.size)]))
            sol = _solve_node(hess, a_eq, b_eq, g_rows, g_rhs, warm)
            nodes_solved += 1
            if sol.status == qp.INFEASIBLE:
                failures.setdefault(violated.key, set()).add(m)
                continue
            if sol.status != qp.OPTIMAL:
                raise PlanningError(f"node QP returned {sol.status}")
            child_bound = max(node.bound, sol.objective)
            if child_bound >= incumbent_val - 1e-12:
                continue
            assignment = dict(node.assignment)
            assignment[violated.key] = m
            child = _Node(child_bound, sol.objective, assignment, g_rows, g_rhs,
                          sol.x, sol.multipliers)
            heapq.heappush(heap, (child.bound, next(seq), child))
        if capped:
            break

    if incumbent is None:
        detail = ", ".join(f"{k}:{sorted(v)}" for k, v in sorted(failures.items(), key=str))
        raise InfeasibleProblemError(
            "no separating facet assignment is feasible" + (f" (infeasible options: {detail})" if detail else ""),
            failures,
        )

    node, free_choice = incumbent
    chosen = dict(node.assignment)
    chosen.update(free_choice)
    alpha, beta = {}, {}
    for dis in disjuncts:
        m_sel = chosen[dis.key]
        target = beta if dis.key[0] == "pair" else alpha
        group_key = dis.key[1:] if dis.key[0] in ("obs", "pair") else (dis.key[1], dis.key[2], dis.key[0])
        for m in range(len(dis.options)):
            target[group_key + (m,)] = 0 if m == m_sel else 1
    status = "incumbent" if capped else "optimal"
    return _plans(problem, node.x, BinaryAssignment(alpha, beta), status)


def _plans(problem: PlanningProblem, x: np.ndarray, certificates, status: str) -> list[AgentPlan]:
    kv = problem.knots
    n, dim = problem.spline.n, problem.dim
    m1 = derivative_matrix(kv, 1).matrix
    g1 = gram_matrix(kv.trimmed(), problem.spline.d - 1)
    h_axis = m1 @ g1 @ m1.T
    plans = []
    for k, agent in enumerate(problem.agents):
        block = x[k * dim * (n + 1) : (k + 1) * dim * (n + 1)].reshape(dim, n + 1)
        polygon = ControlPolygon(block.T.copy())
        curve = SplineCurve(kv, polygon)
        energy = float(sum(block[a] @ h_axis @ block[a] for a in range(dim)))
        plans.append(
            AgentPlan(
                polygon=polygon,
                knots=kv,
                cost=path_length(curve),
                objective=energy,
                certificates=certificates,
                status=status,
                name=agent.name or f"agent{k}",
            )
        )
    return plans


def plan_multi(problem: PlanningProblem, mode: str = "simultaneous") -> list[AgentPlan]:
    if len(problem.agents) < 2:
        raise ValueError("plan_multi needs at least two agents")
    if mode == "simultaneous":
        return plan_mip(problem)
    if mode != "iterative":
        raise ValueError(f"unknown mode {mode!r}")
    plans: list[AgentPlan] = []
    for k, agent in enumerate(problem.agents):
        sub = PlanningProblem(
            agents=(agent,),
            spline=problem.spline,
            arrangement=problem.arrangement,
            config=problem.config,
        )
        earlier = [(plans[p], problem.agents[p].safety_region) for p in range(k)]
        plans.extend(plan_mip(sub, prev_plans=earlier))
    return plans


def _max_margin(side_pts: np.ndarray, other_pts: np.ndarray):
    """Unit normal of a maximum-margin plane with side_pts on the high side.

    For disjoint hulls the plane is the bisector of the closest pair, found
    by a small QP over convex weights; that stays well conditioned however
    thin the gap gets.  Overlapping hulls fall back to a slack-penalized
    fit; returns None only when that collapses too (coincident sets).
    """
    dim = side_pts.shape[1]
    na, nb = side_pts.shape[0], other_pts.shape[0]
    # closest pair of the hulls: min ||A^T lam - B^T mu||^2 over simplex weights
    stacked = np.vstack([side_pts, -other_pts]).T
    quad = stacked.T @ stacked
    quad = 0.5 * (quad + quad.T)
    a_eq = np.zeros((2, na + nb))
    a_eq[0, :na] = 1.0
    a_eq[1, na:] = 1.0
    sol = qp.solve(
        qp.QuadraticProgram(
            quad,
            np.zeros(na + nb),
            A=a_eq,
            b=np.ones(2),
            G=-np.eye(na + nb),
            g=np.zeros(na + nb),
        )
    )
    if sol.status == qp.OPTIMAL:
        diff = stacked @ sol.x
        dist = float(np.linalg.norm(diff))
        if dist > 1e-9:
            return diff / dist

    # soft margin on the moving side only; the obstacle side stays hard
    nvars = dim + 1 + na
    quad_s = np.zeros((nvars, nvars))
    quad_s[:dim, :dim] = np.eye(dim)
    lin = np.concatenate([np.zeros(dim + 1), np.full(na, 1e3)])
    rows = np.zeros((2 * na + nb, nvars))
    rhs = np.empty(2 * na + nb)
    rows[:na, :dim] = -side_pts
    rows[:na, dim] = 1.0
    rows[:na, dim + 1 :] = -np.eye(na)
    rhs[:na] = -1.0
    rows[na : na + nb, :dim] = other_pts
    rows[na : na + nb, dim] = -1.0
    rhs[na : na + nb] = -1.0
    rows[na + nb :, dim + 1 :] = -np.eye(na)
    rhs[na + nb :] = 0.0
    sol = qp.solve(qp.QuadraticProgram(quad_s, lin, G=rows, g=rhs))
    if sol.status != qp.OPTIMAL:
        return None
    c = sol.x[:dim]
    norm = float(np.linalg.norm(c))
    if norm < 1e-12:
        return None
    return c / norm


def _inflated_vertices(arr: Arrangement, obs: Obstacle, region: SafetyRegion | None) -> np.ndarray:
    if region is None or region.is_degenerate:
        return obs.vertices
    a, b = inflate_obstacle(obs.halfspaces, region)
    lo, hi = arr.bounding_box
    pad = float(np.abs(region.vertices).max())
    dim = lo.size
    rows = np.vstack([a, np.eye(dim), -np.eye(dim)])
    rhs = np.concatenate([b, hi + pad, -(lo - pad)])
    hs = HalfspaceIntersection(np.column_stack([rows, -rhs]), arr.interior_points[obs.sign_tuple])
    return hs.intersections[ConvexHull(hs.intersections).vertices]


def plan_exact(problem: PlanningProblem, warm_start=None) -> list[AgentPlan]:
    """Alternate plane fitting and control-point refitting until stationary.

    Once every hard-margin fit succeeds, each refit keeps the previous points
    feasible, so the objective is non-increasing from that round on.
    """
    cfg = problem.config
    arr = problem.arrangement
    n, d, dim = problem.spline.n, problem.spline.d, problem.dim
    nk = len(problem.agents)
    nv = nk * dim * (n + 1)
    margin = cfg.margin

    # enforce slightly above the advertised margin so the post-hoc audit
    # clears it even after solver-tolerance slack
    enforce = margin + 1e-7

    hess, a_eq, b_eq = assemble(problem)
    if warm_start is not None:
        x = np.concatenate([p.polygon.points.T.ravel() for p in warm_start])
    else:
        sol0 = _solve_node(hess, a_eq, b_eq, np.zeros((0, nv)), np.zeros(0))
        if sol0.status != qp.OPTIMAL:
            raise InfeasibleProblemError("waypoint system unsolvable: " + sol0.status)
        x = sol0.x

    obstacle_vertices = {}
    if arr is not None:
        for k, agent in enumerate(problem.agents):
            for l, obs in enumerate(arr.obstacles):
                obstacle_vertices[(k, l)] = _inflated_vertices(arr, obs, agent.safety_region)

    pairs = list(itertools.combinations(range(nk), 2))
    n_planes_full = nk * len(problem.regions()) * (len(arr.obstacles) if arr is not None else 0)
    n_inter_full = len(pairs) * len(problem.regions())
    prev_obj = np.inf
    planes: dict = {}
    inter: dict = {}
    # best iterate whose plane set is complete and enforced by its own QP rows;
    # a relaxed recovery round may leave x and planes inconsistent, so only
    # pairs recorded here are safe to return
    certified = None

    def window_pts(xv, k, i):
        block = xv[k * dim * (n + 1) : (k + 1) * dim * (n + 1)].reshape(dim, n + 1)
        return block[:, list(_window(i, d))].T

    for _ in range(cfg.max_rounds):
        rows_all, rhs_all = [], []
        planes, inter = {}, {}
        for k in range(nk):
            for i in problem.regions():
                for l in range(len(arr.obstacles) if arr is not None else 0):
                    pts = window_pts(x, k, i)
                    verts = obstacle_vertices[(k, l)]
                    c = _max_margin(pts, verts)
                    if c is None:
                        continue
                    planes[(k, i, l)] = c
                    high = float(np.max(verts @ c))
                    gap = float(np.min(pts @ c)) - high
                    # mu <= gap keeps the previous iterate feasible (monotone rounds)
                    mu = min(max(enforce, 0.5 * gap), gap) if gap > enforce else enforce
                    rows_all.append(_point_rows(nv, n, dim, k, _window(i, d), -c))
                    rhs_all.append(np.full(d, -(high + mu)))
        for k1, k2 in pairs:
            s1, s2 = problem.agents[k1].safety_region, problem.agents[k2].safety_region
            for i in problem.regions():
                pts1, pts2 = window_pts(x, k1, i), window_pts(x, k2, i)
                c = _max_margin(pts1, pts2)
                if c is None:
                    continue
                inter[(k1, k2, i)] = c
                delta = (s1.support(c) if s1 else 0.0) + (s2.support(-c) if s2 else 0.0)
                need = delta + enforce
                gap = float(np.min(pts1 @ c)) - float(np.max(pts2 @ c))
                mu = min(max(need, 0.5 * (gap + need)), gap) if gap > need else need
                diff_rows = []
                for j1 in _window(i, d):
                    r1 = _point_rows(nv, n, dim, k1, [j1], c)[0]
                    for j2 in _window(i, d):
                        r2 = _point_rows(nv, n, dim, k2, [j2], c)[0]
                        diff_rows.append(r2 - r1)
                rows_all.append(np.array(diff_rows))
                rhs_all.append(np.full(d * d, -mu))

        if rows_all:
            g_rows, g_rhs = np.vstack(rows_all), np.concatenate(rhs_all)
        else:
            g_rows, g_rhs = np.zeros((0, nv)), np.zeros(0)
        sol = _solve_node(hess, a_eq, b_eq, g_rows, g_rhs)
        if sol.status != qp.OPTIMAL:
            # round over-constrained (overlap recovery vs. pinned waypoints):
            # reject it and move through a slack-penalized solve instead
            soft = _solve_relaxed(hess, a_eq, b_eq, g_rows, g_rhs)
            if soft.status != qp.OPTIMAL:
                break
            x = soft.x[:nv]
            prev_obj = np.inf
            continue
        x = sol.x
        if len(planes) == n_planes_full and len(inter) == n_inter_full:
            if certified is None or sol.objective <= certified[3]:
                certified = (x, planes, inter, sol.objective)
        if abs(prev_obj - sol.objective) < cfg.convergence_tol:
            prev_obj = sol.objective
            break
        prev_obj = sol.objective

    if certified is not None:
        x, planes, inter, _ = certified
    certificates = SeparatingPlanes(planes, inter)
    audit = audit_certificates_exact(problem, x, certificates, obstacle_vertices)
    status = "success" if audit.ok else "degraded"
    return _plans(problem, x, certificates, status)


@dataclass(frozen=True)
class CertificateAudit:
    ok: bool
    min_margin: float
    worst: tuple | None = None


def audit_certificates_exact(problem, x, certificates: SeparatingPlanes, obstacle_vertices=None) -> CertificateAudit:
    """Direct arithmetic re-check of every separating-plane inequality."""
    arr = problem.arrangement
    n, d, dim = problem.spline.n, problem.spline.d, problem.dim
    margin = problem.config.margin
    if obstacle_vertices is None:
        obstacle_vertices = {}
        if arr is not None:
            for k, agent in enumerate(problem.agents):
                for l, obs in enumerate(arr.obstacles):
                    obstacle_vertices[(k, l)] = _inflated_vertices(arr, obs, agent.safety_region)

    def block(k):
        return x[k * dim * (n + 1) : (k + 1) * dim * (n + 1)].reshape(dim, n + 1)

    worst = None
    min_margin = np.inf
    needed = len(problem.agents) * len(problem.regions()) * (len(arr.obstacles) if arr else 0)
    if len(certificates.planes) < needed:
        return CertificateAudit(False, -np.inf, ("missing-plane",))
    for (k, i, l), c in certificates.planes.items():
        pts = block(k)[:, list(_window(i, d))].T
        slack = float(np.min(pts @ c) - np.max(obstacle_vertices[(k, l)] @ c))
        if slack < min_margin:
            min_margin, worst = slack, ("obs", k, i, l)
    pair_needed = len(list(itertools.combinations(range(len(problem.agents)), 2))) * len(problem.regions())
    if len(problem.agents) >= 2 and len(certificates.inter) < pair_needed:
        return CertificateAudit(False, -np.inf, ("missing-pair-plane",))
    for (k1, k2, i), c in certificates.inter.items():
        s1, s2 = problem.agents[k1].safety_region, problem.agents[k2].safety_region
        delta = (s1.support(c) if s1 else 0.0) + (s2.support(-c) if s2 else 0.0)
        pts1 = block(k1)[:, list(_window(i, d))].T
        pts2 = block(k2)[:, list(_window(i, d))].T
        slack = float(np.min(pts1 @ c) - np.max(pts2 @ c)) - delta
        if slack < min_margin:
            min_margin, worst = slack, ("pair", k1, k2, i)
    ok = bool(min_margin >= margin)
    return CertificateAudit(ok, min_margin, worst)


def audit_certificates_mip(problem: PlanningProblem, plans: list[AgentPlan]) -> CertificateAudit:
    """Re-check the facet inequalities selected by the binary certificates.

    A selector of 0 marks the facet enforced for its window; those rows must
    hold with the planning margin.  Selector-1 entries mark discarded facets
    and carry no inequality (disjunctions are branched on directly, so no
    finite slackening constant ever enters the solve).  Every window group
    must appear, each with at least one enforced facet.
    """
    arr = problem.arrangement
    d = problem.spline.d
    margin = problem.config.margin
    min_margin = np.inf
    worst = None
    assignment = plans[0].certificates
    if not isinstance(assignment, BinaryAssignment):
        raise TypeError("audit_certificates_mip expects BinaryAssignment certificates")

    obs_groups = {key[:-1] for key in assignment.alpha if isinstance(key[2], int)}
    expected = {
        (k, i, l)
        for k in range(len(problem.agents))
        for i in problem.regions()
        for l in range(len(arr.obstacles) if arr is not None else 0)
    }
    if expected - obs_groups:
        return CertificateAudit(False, -np.inf, ("missing-group",))
    pair_groups = {key[:-1] for key in assignment.beta}
    expected_pairs = {
        (k1, k2, i)
        for k1, k2 in itertools.combinations(range(len(problem.agents)), 2)
        for i in problem.regions()
    }
    if expected_pairs - pair_groups:
        return CertificateAudit(False, -np.inf, ("missing-pair-group",))

    for (k, i, l, m), val in assignment.alpha.items():
        if val == 1 or not isinstance(l, int):
            # discarded facet, or an iterative prev-agent row whose threshold
            # lives in the earlier sub-problem; neither constrains this plan
            continue
        agent = problem.agents[k]
        a, b = inflate_obstacle(arr.obstacles[l].halfspaces, agent.safety_region)
        a, b = _unit_rows(a, b)
        pts = plans[k].polygon.points[list(_window(i, d))]
        slack = float(np.min(pts @ a[m]) - (b[m] + margin))
        if slack < min_margin:
            min_margin, worst = slack, ("alpha", k, i, l, m)
    pool = _pair_pool(arr) if arr is not None else None
    for (k1, k2, i, m), val in assignment.beta.items():
        if val == 1:
            continue
        h = pool[m]
        s1, s2 = problem.agents[k1].safety_region, problem.agents[k2].safety_region
        delta = (s1.support(h) if s1 else 0.0) + (s2.support(-h) if s2 else 0.0)
        pts1 = plans[k1].polygon.points[list(_window(i, d))]
        pts2 = plans[k2].polygon.points[list(_window(i, d))]
        slack = -(float(np.max(pts1 @ h) - np.min(pts2 @ h)) + delta + margin)
        if slack < min_margin:
            min_margin, worst = slack, ("beta", k1, k2, i, m)
    return CertificateAudit(bool(min_margin >= -AUDIT_TOL), min_margin, worst)


def escalate(problem: PlanningProblem) -> PlanningProblem:
    """Raise the control-point count one step; error past the configured cap."""
    cfg = problem.config
    n_new = problem.spline.n + cfg.n_step
    if n_new > cfg.n_max:
        raise InfeasibleProblemError(f"control-point cap reached (n_max={cfg.n_max})")
    return replace(problem, spline=SplineSpec(n_new, problem.spline.d))


def plan_auto(problem: PlanningProblem, method: str = "mip", mode: str = "simultaneous"):
    """Plan, escalating the spline size on infeasibility; returns (plans, problem)."""
    current = problem
    last_err: InfeasibleProblemError | None = None
    while True:
        try:
            if method == "mip":
                if len(current.agents) >= 2:
                    plans = plan_multi(current, mode)
                else:
                    plans = plan_mip(current)
            elif method == "exact":
                try:
                    warm = plan_multi(current, mode) if len(current.agents) >= 2 else plan_mip(current)
                except InfeasibleProblemError:
                    warm = None
                plans = plan_exact(current, warm_start=warm)
            else:
                raise ValueError(f"unknown method {method!r}")
            return plans, current
        except InfeasibleProblemError as err:
            last_err = err
            try:
                current = escalate(current)
            except InfeasibleProblemError:
                raise InfeasibleProblemError(
                    f"infeasible up to n={current.spline.n}: {last_err}", last_err.failures
                ) from last_err
