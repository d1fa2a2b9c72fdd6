"""Collision-free B-spline trajectory planning for differentially flat vehicles."""

from flatplan.bspline import (
    ControlPolygon,
    DerivativeMatrix,
    KnotVector,
    SplineCurve,
    basis_eval,
    curve_eval,
    derivative_matrix,
    gram_matrix,
)
from flatplan.flatness import GRAVITY, SingularVelocityError, flat_samples, trace
from flatplan.geometry import (
    Arrangement,
    Hyperplane,
    Obstacle,
    SafetyRegion,
    SignTuple,
    classify_point,
    default_bounding_box,
    enumerate_cells,
    inflate_obstacle,
    obstacle_from_tuple,
    obstacle_from_vertices,
)
from flatplan.planner import (
    AgentPlan,
    AgentSpec,
    CertificateAudit,
    InfeasibleProblemError,
    PlannerConfig,
    PlanningError,
    PlanningProblem,
    SplineSpec,
    audit_certificates_exact,
    audit_certificates_mip,
    plan_auto,
    plan_exact,
    plan_mip,
    plan_multi,
)
from flatplan.scenario import ScenarioError, bundled_path, parse, serialize
from flatplan.verification import VerificationReport, check, signed_distance

__all__ = [
    "AgentPlan",
    "AgentSpec",
    "Arrangement",
    "CertificateAudit",
    "ControlPolygon",
    "DerivativeMatrix",
    "GRAVITY",
    "Hyperplane",
    "InfeasibleProblemError",
    "KnotVector",
    "Obstacle",
    "PlannerConfig",
    "PlanningError",
    "PlanningProblem",
    "SafetyRegion",
    "ScenarioError",
    "SignTuple",
    "SingularVelocityError",
    "SplineCurve",
    "SplineSpec",
    "VerificationReport",
    "audit_certificates_exact",
    "audit_certificates_mip",
    "basis_eval",
    "bundled_path",
    "check",
    "classify_point",
    "curve_eval",
    "default_bounding_box",
    "derivative_matrix",
    "enumerate_cells",
    "flat_samples",
    "gram_matrix",
    "inflate_obstacle",
    "obstacle_from_tuple",
    "obstacle_from_vertices",
    "parse",
    "plan_auto",
    "plan_exact",
    "plan_mip",
    "plan_multi",
    "serialize",
    "signed_distance",
    "trace",
]

__version__ = "0.1.0"
