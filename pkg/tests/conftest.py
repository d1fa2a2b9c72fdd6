"""Session-scoped planner runs on the shared demo course.

The course solves take seconds each, so the suite plans once and every
module reads the cached results.  Wall-clock times are captured where a
test asserts a budget.
"""

import time

import pytest

from _course import COURSE_OBSTACLES, COURSE_TIMES, COURSE_WAYPOINTS, course_hyperplanes
from flatplan.geometry import default_bounding_box, enumerate_cells, obstacle_from_tuple
from flatplan.planner import (
    AgentSpec,
    PlanningProblem,
    SplineSpec,
    plan_exact,
    plan_mip,
)


@pytest.fixture(scope="session")
def course_arrangement():
    arr = enumerate_cells(course_hyperplanes(), default_bounding_box(COURSE_WAYPOINTS))
    return arr.with_obstacles([obstacle_from_tuple(arr, sig) for sig in COURSE_OBSTACLES])


@pytest.fixture(scope="session")
def course_problem(course_arrangement):
    agent = AgentSpec(COURSE_WAYPOINTS, COURSE_TIMES, name="demo")
    return PlanningProblem((agent,), SplineSpec(12, 6), course_arrangement)


@pytest.fixture(scope="session")
def course_mip(course_problem):
    """(plans, wall_seconds) for the binary formulation on the course."""
    t0 = time.perf_counter()
    plans = plan_mip(course_problem)
    return plans, time.perf_counter() - t0


@pytest.fixture(scope="session")
def course_exact(course_problem, course_mip):
    plans, _ = course_mip
    return plan_exact(course_problem, warm_start=plans)


@pytest.fixture(scope="session")
def course_sweep(course_arrangement):
    """n -> (plans, wall_seconds) at order 4 across the documented sweep."""
    agent = AgentSpec(COURSE_WAYPOINTS, COURSE_TIMES, name="demo")
    out = {}
    for n in (15, 20, 25, 30):
        problem = PlanningProblem((agent,), SplineSpec(n, 4), course_arrangement)
        t0 = time.perf_counter()
        plans = plan_mip(problem)
        out[n] = (plans, time.perf_counter() - t0)
    return out
