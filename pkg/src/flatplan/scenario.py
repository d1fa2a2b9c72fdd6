"""Versioned JSON scenario files: parsing, validation, serialization.

A scenario bundles the hyperplane arrangement, interdicted cells, agents,
spline size, and planner overrides.  Documents are schema-validated so
editing mistakes surface as field paths instead of stack traces.
"""

from __future__ import annotations

import json
import warnings
from importlib import resources

import numpy as np
from jsonschema import Draft202012Validator

from flatplan.geometry import (
    Hyperplane,
    SafetyRegion,
    SignTuple,
    default_bounding_box,
    enumerate_cells,
    obstacle_from_tuple,
    obstacle_from_vertices,
)
from flatplan.planner import AgentSpec, PlannerConfig, PlanningProblem, SplineSpec

SCHEMA_VERSION = 1
DEFAULT_GRAVITY = 9.81
DEFAULT_ORDER = 4

_VECTOR = {"type": "array", "items": {"type": "number"}, "minItems": 1}
_POINTS = {"type": "array", "items": _VECTOR, "minItems": 1}

SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["version", "agents", "spline"],
    "additionalProperties": False,
    "properties": {
        "version": {"const": SCHEMA_VERSION},
        "gravity": {"type": "number", "exclusiveMinimum": 0},
        "hyperplanes": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["normal", "offset"],
                "additionalProperties": False,
                "properties": {"normal": _VECTOR, "offset": {"type": "number"}},
            },
        },
        "bounding_box": {
            "type": "object",
            "required": ["low", "high"],
            "additionalProperties": False,
            "properties": {"low": _VECTOR, "high": _VECTOR},
        },
        "obstacles": {
            "type": "array",
            "items": {
                "type": "object",
                "additionalProperties": False,
                "properties": {
                    "signs": {"type": "string", "pattern": "^[+-]+$"},
                    "vertices": _POINTS,
                    "name": {"type": "string"},
                },
                "oneOf": [{"required": ["signs"]}, {"required": ["vertices"]}],
            },
        },
        "agents": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "required": ["waypoints", "timestamps"],
                "additionalProperties": False,
                "properties": {
                    "waypoints": _POINTS,
                    "timestamps": _VECTOR,
                    "safety_vertices": _POINTS,
                    "name": {"type": "string"},
                },
            },
        },
        "spline": {
            "type": "object",
            "required": ["n"],
            "additionalProperties": False,
            "properties": {
                "n": {"type": "integer", "minimum": 1},
                "d": {"type": "integer", "minimum": 3},
            },
        },
        "config": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "big_m": {"type": ["number", "null"]},
                "margin": {"type": "number"},
                "max_bb_nodes": {"type": "integer", "minimum": 1},
                "n_step": {"type": "integer", "minimum": 1},
                "n_max": {"type": "integer", "minimum": 1},
                "max_rounds": {"type": "integer", "minimum": 1},
                "convergence_tol": {"type": "number", "exclusiveMinimum": 0},
                "cost_weight": _POINTS,
            },
        },
    },
}

_VALIDATOR = Draft202012Validator(SCHEMA)


class ScenarioError(ValueError):
    """Malformed scenario document; message carries the offending field path."""


def load_document(path) -> dict:
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as err:
            raise ScenarioError(f"not valid JSON: {err}") from None
    validate_document(doc)
    return doc


def validate_document(doc: dict) -> None:
    errors = sorted(_VALIDATOR.iter_errors(doc), key=lambda e: list(e.absolute_path))
    if errors:
        err = errors[0]
        raise ScenarioError(f"{err.json_path}: {err.message}")


def gravity_of(doc: dict) -> float:
    return float(doc.get("gravity", DEFAULT_GRAVITY))


def problem_from_document(doc: dict) -> PlanningProblem:
    validate_document(doc)

    agents = []
    for entry in doc["agents"]:
        safety = entry.get("safety_vertices")
        agents.append(
            AgentSpec(
                waypoints=np.array(entry["waypoints"], dtype=float),
                timestamps=np.array(entry["timestamps"], dtype=float),
                safety_region=SafetyRegion(np.array(safety, dtype=float)) if safety else None,
                name=entry.get("name", ""),
            )
        )

    spline_doc = doc["spline"]
    if "d" not in spline_doc:
        warnings.warn(f"spline.d missing, defaulting to d={DEFAULT_ORDER}", stacklevel=2)
    spline = SplineSpec(spline_doc["n"], spline_doc.get("d", DEFAULT_ORDER))

    config = PlannerConfig(**{
        key: (np.array(val) if key == "cost_weight" else val)
        for key, val in doc.get("config", {}).items()
    })

    planes = [
        Hyperplane(np.array(h["normal"], dtype=float), float(h["offset"]))
        for h in doc.get("hyperplanes", [])
    ]
    arrangement = None
    if planes:
        box_doc = doc.get("bounding_box")
        if box_doc is not None:
            box = (np.array(box_doc["low"], dtype=float), np.array(box_doc["high"], dtype=float))
        else:
            box = default_bounding_box(np.vstack([a.waypoints for a in agents]))
        arrangement = enumerate_cells(planes, box)
        obstacles = []
        for idx, entry in enumerate(doc.get("obstacles", [])):
            name = entry.get("name", f"obstacle{idx}")
            if "signs" in entry:
                if len(entry["signs"]) != len(planes):
                    raise ScenarioError(
                        f"obstacles[{idx}] ({name}): sign tuple has {len(entry['signs'])}"
                        f" entries for {len(planes)} hyperplanes"
                    )
                sig = SignTuple.from_string(entry["signs"])
                try:
                    obstacles.append(obstacle_from_tuple(arrangement, sig, name))
                except ValueError as err:
                    raise ScenarioError(f"obstacles[{idx}] ({name}): {err}") from None
            else:
                try:
                    obstacles.append(
                        obstacle_from_vertices(arrangement, np.array(entry["vertices"]), name)
                    )
                except ValueError as err:
                    raise ScenarioError(f"obstacles[{idx}] ({name}): {err}") from None
        arrangement = arrangement.with_obstacles(obstacles)
    elif doc.get("obstacles"):
        raise ScenarioError("obstacles: declared without any hyperplanes")

    return PlanningProblem(tuple(agents), spline, arrangement, config)


def parse(path) -> PlanningProblem:
    return problem_from_document(load_document(path))


def document_from_problem(problem: PlanningProblem, gravity: float | None = None) -> dict:
    """Document that parses back to a field-wise identical problem."""
    cfg = problem.config
    doc: dict = {"version": SCHEMA_VERSION}
    if gravity is not None:
        doc["gravity"] = float(gravity)

    arr = problem.arrangement
    if arr is not None:
        doc["hyperplanes"] = [
            {"normal": list(map(float, h.normal)), "offset": float(h.offset)}
            for h in arr.hyperplanes
        ]
        lo, hi = arr.bounding_box
        doc["bounding_box"] = {"low": list(map(float, lo)), "high": list(map(float, hi))}
        doc["obstacles"] = [
            {"signs": str(o.sign_tuple), **({"name": o.name} if o.name else {})}
            for o in arr.obstacles
        ]

    doc["agents"] = []
    for agent in problem.agents:
        entry = {
            "waypoints": [list(map(float, w)) for w in agent.waypoints],
            "timestamps": list(map(float, agent.timestamps)),
        }
        if agent.safety_region is not None:
            entry["safety_vertices"] = [list(map(float, v)) for v in agent.safety_region.vertices]
        if agent.name:
            entry["name"] = agent.name
        doc["agents"].append(entry)

    doc["spline"] = {"n": problem.spline.n, "d": problem.spline.d}
    doc["config"] = {
        "margin": cfg.margin,
        "max_bb_nodes": cfg.max_bb_nodes,
        "n_step": cfg.n_step,
        "n_max": cfg.n_max,
        "max_rounds": cfg.max_rounds,
        "convergence_tol": cfg.convergence_tol,
    }
    if cfg.big_m is not None:
        doc["config"]["big_m"] = float(cfg.big_m)
    if cfg.cost_weight is not None:
        doc["config"]["cost_weight"] = [list(map(float, row)) for row in cfg.cost_weight]
    validate_document(doc)
    return doc


def serialize(problem: PlanningProblem, path=None, gravity: float | None = None) -> str:
    text = json.dumps(document_from_problem(problem, gravity), indent=2) + "\n"
    if path is not None:
        with open(path, "w") as fh:
            fh.write(text)
    return text


def bundled_path(name: str = "demo_course"):
    """Path to a fixture shipped with the package."""
    return resources.files("flatplan") / "fixtures" / f"{name}.json"
