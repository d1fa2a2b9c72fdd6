import itertools

import numpy as np
import pytest

from _course import COURSE_WAYPOINTS
from flatplan import planner, qp
from flatplan.geometry import (
    Hyperplane,
    SafetyRegion,
    classify_point,
    default_bounding_box,
    enumerate_cells,
    obstacle_from_tuple,
)
from flatplan.planner import (
    AgentSpec,
    BinaryAssignment,
    InfeasibleProblemError,
    PlannerConfig,
    PlanningError,
    PlanningProblem,
    SplineSpec,
    assemble,
    audit_certificates_exact,
    audit_certificates_mip,
    big_m_constant,
    escalate,
    path_length,
    plan_auto,
    plan_exact,
    plan_mip,
    plan_multi,
)

# straight polyline through the course waypoints; any interpolant is longer
COURSE_LOWER_BOUND = sum(
    float(np.linalg.norm(COURSE_WAYPOINTS[s + 1] - COURSE_WAYPOINTS[s]))
    for s in range(len(COURSE_WAYPOINTS) - 1)
)


def straight_problem():
    agent = AgentSpec(np.array([[0.0, 0.0], [5.0, 0.0]]), np.array([0.0, 1.0]))
    return PlanningProblem((agent,), SplineSpec(8, 4))


def quadrant_problem(n=6, d=4, margin=1e-6, safety=None):
    """Two axis planes, one obstacle in the first quadrant, waypoints around it."""
    planes = [Hyperplane(np.array([1.0, 0.0]), 0.0), Hyperplane(np.array([0.0, 1.0]), 0.0)]
    wps = np.array([[-2.0, 0.8], [2.5, -0.8]])
    arr = enumerate_cells(planes, default_bounding_box(wps))
    sig = classify_point(arr, np.array([1.0, 1.0]))
    arr = arr.with_obstacles([obstacle_from_tuple(arr, sig)])
    agent = AgentSpec(wps, np.array([0.0, 1.0]), safety_region=safety)
    return PlanningProblem((agent,), SplineSpec(n, d), arr, PlannerConfig(margin=margin))


def slit_problem(n):
    """Wall with a narrow opening; mid waypoints sit on both sides of it."""
    planes = [
        Hyperplane(np.array([1.0, 0.0]), -0.3),
        Hyperplane(np.array([1.0, 0.0]), 0.3),
        Hyperplane(np.array([0.0, 1.0]), 0.0),
        Hyperplane(np.array([0.0, 1.0]), 0.5),
    ]
    wps = np.array([[-5.0, 2.0], [-1.0, 2.0], [1.0, 2.0], [5.0, 2.0]])
    arr = enumerate_cells(planes, default_bounding_box(wps))
    upper = classify_point(arr, np.array([0.0, 2.0]))
    lower = classify_point(arr, np.array([0.0, -2.0]))
    arr = arr.with_obstacles([obstacle_from_tuple(arr, upper), obstacle_from_tuple(arr, lower)])
    cfg = PlannerConfig(n_step=4, n_max=24)
    return PlanningProblem((AgentSpec(wps, np.array([0.0, 0.4, 0.6, 1.0])),), SplineSpec(n, 4), arr, cfg)


def crossing_problem(margin=0.1):
    planes = [Hyperplane(np.array([1.0, 0.0]), 0.0), Hyperplane(np.array([0.0, 1.0]), 0.0)]
    a = AgentSpec(np.array([[-5.0, 0.0], [5.0, 0.0]]), np.array([0.0, 10.0]), name="east")
    b = AgentSpec(np.array([[5.0, 0.0], [-5.0, 0.0]]), np.array([0.0, 10.0]), name="west")
    box = default_bounding_box(np.vstack([a.waypoints, b.waypoints]))
    arr = enumerate_cells(planes, box).with_obstacles([])
    return PlanningProblem((a, b), SplineSpec(8, 4), arr, PlannerConfig(margin=margin))


def stacked_x(plans):
    return np.concatenate([p.polygon.points.T.ravel() for p in plans])


def facet_clearance(plan, obstacle, samples=5001):
    """Worst sampled distance proxy: most-violated facet per sample, minimized."""
    a, b = obstacle.halfspaces
    norms = np.linalg.norm(a, axis=1)
    pts = plan.curve().eval(np.linspace(plan.knots.t_start, plan.knots.t_end, samples))
    return float(((a / norms[:, None]) @ pts.T - (b / norms)[:, None]).max(axis=0).min())


class TestValidation:
    def test_agent_waypoint_timestamp_mismatch(self):
        with pytest.raises(ValueError):
            AgentSpec(np.zeros((3, 2)), np.array([0.0, 1.0]))

    def test_agent_needs_two_waypoints(self):
        with pytest.raises(ValueError):
            AgentSpec(np.zeros((1, 2)), np.array([0.0]))

    def test_agent_timestamps_increase(self):
        with pytest.raises(ValueError):
            AgentSpec(np.zeros((2, 2)), np.array([1.0, 1.0]))

    def test_spline_spec_bounds(self):
        with pytest.raises(ValueError):
            SplineSpec(8, 2)
        with pytest.raises(ValueError):
            SplineSpec(3, 4)

    def test_problem_needs_agents(self):
        with pytest.raises(ValueError):
            PlanningProblem((), SplineSpec(8, 4))

    def test_problem_shared_horizon(self):
        a = AgentSpec(np.zeros((2, 2)), np.array([0.0, 1.0]))
        b = AgentSpec(np.zeros((2, 2)), np.array([0.0, 2.0]))
        with pytest.raises(ValueError):
            PlanningProblem((a, b), SplineSpec(8, 4))

    def test_too_many_waypoints(self):
        agent = AgentSpec(np.zeros((6, 2)), np.arange(6.0))
        with pytest.raises(ValueError):
            PlanningProblem((agent,), SplineSpec(4, 4))

    def test_assignment_group_keeps_a_zero(self):
        with pytest.raises(ValueError):
            BinaryAssignment({(0, 3, 0, 0): 1, (0, 3, 0, 1): 1}, {})
        BinaryAssignment({(0, 3, 0, 0): 1, (0, 3, 0, 1): 0}, {})

    def test_assignment_binary_values(self):
        with pytest.raises(ValueError):
            BinaryAssignment({(0, 3, 0, 0): 2}, {})


class TestAssemble:
    def test_hessian_psd(self):
        hess, _, _ = assemble(straight_problem())
        assert np.linalg.eigvalsh(hess).min() >= -1e-9

    def test_waypoint_rows_interpolate(self):
        problem = quadrant_problem()
        hess, a_eq, b_eq = assemble(problem)
        sol = planner._solve_node(hess, a_eq, b_eq, np.zeros((0, hess.shape[0])), np.zeros(0))
        assert sol.status == qp.OPTIMAL
        plan = planner._plans(problem, sol.x, None, "optimal")[0]
        hits = plan.curve().eval(problem.agents[0].timestamps)
        assert np.abs(hits - problem.agents[0].waypoints).max() <= 1e-7

    def test_straight_segment_cost(self):
        plans = plan_mip(straight_problem())
        assert plans[0].cost == pytest.approx(5.0, abs=1e-6)
        # constant-speed segment: energy = length^2 / duration
        assert plans[0].objective == pytest.approx(25.0, rel=1e-6)

    def test_path_length_matches_dense_polyline(self):
        plan = plan_mip(quadrant_problem())[0]
        ts = np.linspace(0.0, 1.0, 100_001)
        pts = plan.curve().eval(ts)
        polyline = float(np.linalg.norm(np.diff(pts, axis=0), axis=1).sum())
        assert path_length(plan.curve()) == pytest.approx(polyline, abs=1e-6)

    def test_big_m_slackens_every_facet_in_box(self):
        arr = quadrant_problem().arrangement
        big_m = big_m_constant(arr)
        lo, hi = arr.bounding_box
        rng = np.random.default_rng(7)
        pts = rng.uniform(lo, hi, size=(200, 2))
        for obs in arr.obstacles:
            a, b = obs.halfspaces
            assert (a @ pts.T - b[:, None]).max() <= big_m
            assert (a @ pts.T - b[:, None] + big_m).min() >= 0.0


class TestMip:
    def test_no_obstacles_equals_unconstrained(self):
        problem = straight_problem()
        hess, a_eq, b_eq = assemble(problem)
        free = planner._solve_node(hess, a_eq, b_eq, np.zeros((0, hess.shape[0])), np.zeros(0))
        plans = plan_mip(problem)
        assert plans[0].objective == pytest.approx(2.0 * free.objective, rel=1e-8)

    def test_quadrant_matches_exhaustive_assignments(self):
        problem = quadrant_problem()
        plans = plan_mip(problem)
        hess, a_eq, b_eq = assemble(problem)
        disjuncts = planner._build_disjuncts(problem)
        best = np.inf
        combos = 0
        for combo in itertools.product(*(range(len(dj.options)) for dj in disjuncts)):
            rows = np.vstack([dj.options[m][0] for dj, m in zip(disjuncts, combo)])
            rhs = np.concatenate([dj.options[m][1] for dj, m in zip(disjuncts, combo)])
            sol = planner._solve_node(hess, a_eq, b_eq, rows, rhs)
            combos += 1
            if sol.status == qp.OPTIMAL:
                best = min(best, sol.objective)
        assert combos == 16
        assert plans[0].objective == pytest.approx(2.0 * best, rel=1e-6)

    def test_quadrant_certificates_audit(self):
        problem = quadrant_problem()
        plans = plan_mip(problem)
        audit = audit_certificates_mip(problem, plans)
        assert audit.ok, audit

    def test_waypoint_inside_obstacle_infeasible(self):
        planes = [Hyperplane(np.array([1.0, 0.0]), 0.0), Hyperplane(np.array([0.0, 1.0]), 0.0)]
        wps = np.array([[-2.0, -2.0], [1.0, 1.0], [3.0, -2.0]])
        arr = enumerate_cells(planes, default_bounding_box(wps))
        sig = classify_point(arr, np.array([1.0, 1.0]))
        arr = arr.with_obstacles([obstacle_from_tuple(arr, sig)])
        problem = PlanningProblem(
            (AgentSpec(wps, np.array([0.0, 0.5, 1.0])),), SplineSpec(6, 4), arr
        )
        with pytest.raises(InfeasibleProblemError) as err:
            plan_mip(problem)
        # every facet option of some window/obstacle pair was refuted
        assert err.value.failures
        key, options = next(iter(err.value.failures.items()))
        assert key[0] == "obs"
        assert options == set(range(len(arr.hyperplanes)))

    def test_deterministic(self):
        a = plan_mip(quadrant_problem())[0]
        b = plan_mip(quadrant_problem())[0]
        assert np.array_equal(a.polygon.points, b.polygon.points)

    def test_course_plan(self, course_problem, course_mip):
        plans, _ = course_mip
        plan = plans[0]
        assert plan.status == "optimal"
        assert plan.cost > COURSE_LOWER_BOUND
        assert plan.cost < 18.0
        hits = plan.curve().eval(course_problem.agents[0].timestamps)
        assert np.abs(hits - course_problem.agents[0].waypoints).max() <= 1e-6
        audit = audit_certificates_mip(course_problem, plans)
        assert audit.ok, audit

    def test_course_clearance_positive(self, course_problem, course_mip):
        plans, _ = course_mip
        for obs in course_problem.arrangement.obstacles:
            assert facet_clearance(plans[0], obs) > 0.0


class TestExact:
    def test_no_arrangement_reduces_to_unconstrained(self):
        problem = straight_problem()
        plans = plan_exact(problem)
        assert plans[0].status == "success"
        assert plans[0].cost == pytest.approx(5.0, abs=1e-6)

    def test_quadrant_cold_start(self):
        problem = quadrant_problem()
        plans = plan_exact(problem)
        assert plans[0].status == "success"
        audit = audit_certificates_exact(problem, stacked_x(plans), plans[0].certificates)
        assert audit.ok, audit

    def test_course_warm_start(self, course_problem, course_mip, course_exact):
        mip_plans, _ = course_mip
        plan = course_exact[0]
        assert plan.status == "success"
        assert plan.objective <= mip_plans[0].objective + 1e-6
        audit = audit_certificates_exact(
            course_problem, stacked_x(course_exact), plan.certificates
        )
        assert audit.ok, audit
        assert audit.min_margin >= course_problem.config.margin

    def test_course_waypoints_held(self, course_problem, course_exact):
        hits = course_exact[0].curve().eval(course_problem.agents[0].timestamps)
        assert np.abs(hits - course_problem.agents[0].waypoints).max() <= 1e-6


class TestMulti:
    def test_crossing_simultaneous_separation(self):
        problem = crossing_problem(margin=0.1)
        plans = plan_multi(problem, "simultaneous")
        ts = np.linspace(0.0, 10.0, 2001)
        gap = np.linalg.norm(plans[0].curve().eval(ts) - plans[1].curve().eval(ts), axis=1)
        assert gap.min() >= 0.1 - 1e-9
        audit = audit_certificates_mip(problem, plans)
        assert audit.ok, audit

    def test_crossing_iterative_keeps_first_agent(self):
        problem = crossing_problem(margin=0.1)
        plans = plan_multi(problem, "iterative")
        solo = plan_mip(
            PlanningProblem(
                (problem.agents[0],), problem.spline, problem.arrangement, problem.config
            )
        )
        assert np.allclose(plans[0].polygon.points, solo[0].polygon.points, atol=1e-10)
        ts = np.linspace(0.0, 10.0, 2001)
        gap = np.linalg.norm(plans[0].curve().eval(ts) - plans[1].curve().eval(ts), axis=1)
        assert gap.min() >= 0.1 - 1e-9

    def test_disjoint_corridors_stay_straight(self):
        a = AgentSpec(np.array([[-5.0, 3.0], [5.0, 3.0]]), np.array([0.0, 10.0]))
        b = AgentSpec(np.array([[-5.0, -3.0], [5.0, -3.0]]), np.array([0.0, 10.0]))
        planes = [Hyperplane(np.array([1.0, 0.0]), 0.0), Hyperplane(np.array([0.0, 1.0]), 0.0)]
        box = default_bounding_box(np.vstack([a.waypoints, b.waypoints]))
        arr = enumerate_cells(planes, box).with_obstacles([])
        problem = PlanningProblem((a, b), SplineSpec(8, 4), arr, PlannerConfig(margin=0.1))
        plans = plan_multi(problem, "simultaneous")
        assert plans[0].cost == pytest.approx(10.0, abs=1e-6)
        assert plans[1].cost == pytest.approx(10.0, abs=1e-6)

    def test_single_agent_rejected(self):
        with pytest.raises(ValueError):
            plan_multi(quadrant_problem(), "simultaneous")

    def test_unknown_mode_rejected(self):
        with pytest.raises(ValueError):
            plan_multi(crossing_problem(), "leapfrog")

    def test_needs_hyperplane_pool(self):
        a = AgentSpec(np.array([[-5.0, 3.0], [5.0, 3.0]]), np.array([0.0, 10.0]))
        b = AgentSpec(np.array([[-5.0, -3.0], [5.0, -3.0]]), np.array([0.0, 10.0]))
        problem = PlanningProblem((a, b), SplineSpec(8, 4))
        with pytest.raises(PlanningError):
            plan_multi(problem, "simultaneous")


class TestEscalation:
    def test_escalate_steps_and_caps(self):
        problem = slit_problem(8)
        bigger = escalate(problem)
        assert bigger.spline.n == 12
        capped = PlanningProblem(
            problem.agents, SplineSpec(24, 4), problem.arrangement, problem.config
        )
        with pytest.raises(InfeasibleProblemError):
            escalate(capped)

    def test_slit_infeasible_until_windows_decouple(self):
        with pytest.raises(InfeasibleProblemError):
            plan_mip(slit_problem(8))

    def test_auto_escalates_slit_to_feasibility(self):
        plans, used = plan_auto(slit_problem(8))
        assert used.spline.n == 24
        assert plans[0].status == "optimal"
        audit = audit_certificates_mip(used, plans)
        assert audit.ok, audit

    def test_auto_reports_cap_exhaustion(self):
        problem = slit_problem(8)
        capped = PlanningProblem(
            problem.agents,
            problem.spline,
            problem.arrangement,
            PlannerConfig(n_step=4, n_max=12),
        )
        with pytest.raises(InfeasibleProblemError, match="n=12"):
            plan_auto(capped)


class TestSafetyRegion:
    def test_inflated_clearance(self):
        problem = quadrant_problem(safety=SafetyRegion.square(0.1))
        plans = plan_mip(problem)
        clearance = facet_clearance(plans[0], problem.arrangement.obstacles[0])
        assert clearance >= 0.1 - 1e-6
