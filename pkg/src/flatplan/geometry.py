"""Hyperplane arrangements, sign-tuple cells, obstacles and safety regions.

A hyperplane h^T x = k splits space into the '+' half-space (h^T x <= k)
and the '-' half-space.  A cell of the arrangement is the intersection of
one signed half-space per hyperplane, identified by its sign tuple.  Cells
are enumerated inside a bounding box, each certified non-empty by an
interior point from a small LP.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog
from scipy.spatial import ConvexHull, HalfspaceIntersection

MAX_HYPERPLANES = 25
BOUNDARY_TOL = 1e-9
INTERIOR_RADIUS = 1e-7


class AmbiguousCellError(ValueError):
    """Query point too close to a hyperplane to classify."""


@dataclass(frozen=True, eq=False)
class Hyperplane:
    """Oriented hyperplane normal^T x = offset with a nonzero normal."""

    normal: np.ndarray
    offset: float

    def __post_init__(self) -> None:
        normal = np.asarray(self.normal, dtype=float)
        if np.linalg.norm(normal) <= 0.0:
            raise ValueError("hyperplane normal must be nonzero")
        normal.setflags(write=False)
        object.__setattr__(self, "normal", normal)
        object.__setattr__(self, "offset", float(self.offset))

    def value(self, x) -> float:
        """h^T x - k; negative means the '+' side."""
        return float(self.normal @ np.asarray(x, dtype=float) - self.offset)

    def distance(self, x) -> float:
        return abs(self.value(x)) / float(np.linalg.norm(self.normal))


@dataclass(frozen=True)
class SignTuple:
    """Cell label: one sign per hyperplane, '+' meaning h^T x <= k."""

    signs: tuple[int, ...]

    def __post_init__(self) -> None:
        if any(s not in (-1, 1) for s in self.signs):
            raise ValueError("signs must be +1 or -1")

    @classmethod
    def from_string(cls, text: str) -> "SignTuple":
        if set(text) - {"+", "-"}:
            raise ValueError(f"sign tuple {text!r} may only contain '+' and '-'")
        return cls(tuple(1 if c == "+" else -1 for c in text))

    def __str__(self) -> str:
        return "".join("+" if s > 0 else "-" for s in self.signs)

    def __len__(self) -> int:
        return len(self.signs)


@dataclass(frozen=True, eq=False)
class SafetyRegion:
    """Bounded polytope of offsets around an agent, containing the origin."""

    vertices: np.ndarray

    def __post_init__(self) -> None:
        verts = np.atleast_2d(np.asarray(self.vertices, dtype=float))
        verts.setflags(write=False)
        object.__setattr__(self, "vertices", verts)
        if not _origin_in_hull(verts):
            raise ValueError("safety region must contain the origin")

    @classmethod
    def square(cls, half_width: float) -> "SafetyRegion":
        w = float(half_width)
        return cls(np.array([[w, w], [-w, w], [-w, -w], [w, -w]]))

    @property
    def is_degenerate(self) -> bool:
        return bool(np.max(np.linalg.norm(self.vertices, axis=1)) <= 0.0)

    def support(self, direction) -> float:
        """max over the region of direction^T s."""
        return float(np.max(self.vertices @ np.asarray(direction, dtype=float)))


def _origin_in_hull(vertices: np.ndarray) -> bool:
    count, dim = vertices.shape
    res = linprog(
        np.zeros(count),
        A_eq=np.vstack([vertices.T, np.ones(count)]),
        b_eq=np.concatenate([np.zeros(dim), [1.0]]),
        bounds=[(0, None)] * count,
        method="highs",
    )
    return res.status == 0


@dataclass(frozen=True, eq=False)
class Obstacle:
    """An interdicted cell: its sign tuple, H-representation and vertices."""

    sign_tuple: SignTuple
    halfspaces: tuple[np.ndarray, np.ndarray]  # (A, b) rows A x <= b
    vertices: np.ndarray
    name: str = ""


@dataclass(frozen=True, eq=False)
class Arrangement:
    """Feasible cells of a hyperplane arrangement inside a bounding box.

    ``interdicted`` and ``admissible`` partition ``feasible``; every feasible
    tuple is certified by an interior point in ``interior_points``.
    """

    hyperplanes: tuple[Hyperplane, ...]
    bounding_box: tuple[np.ndarray, np.ndarray]
    feasible: frozenset[SignTuple]
    interior_points: dict[SignTuple, np.ndarray]
    interdicted: frozenset[SignTuple] = frozenset()
    obstacles: tuple[Obstacle, ...] = ()
    _vertex_cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self) -> None:
        if not self.interdicted <= self.feasible:
            raise ValueError("interdicted tuples must be feasible cells")

    @property
    def admissible(self) -> frozenset[SignTuple]:
        return self.feasible - self.interdicted

    @property
    def count(self) -> int:
        return len(self.hyperplanes)

    def normals(self) -> np.ndarray:
        return np.array([h.normal for h in self.hyperplanes])

    def offsets(self) -> np.ndarray:
        return np.array([h.offset for h in self.hyperplanes])

    def cell_halfspaces(self, sig: SignTuple) -> tuple[np.ndarray, np.ndarray]:
        """Cell rows sigma(m) h_m^T x <= sigma(m) k_m (box not included)."""
        sgn = np.asarray(sig.signs, dtype=float)
        return sgn[:, None] * self.normals(), sgn * self.offsets()

    def cell_vertices(self, sig: SignTuple) -> np.ndarray:
        """Vertices of the cell clipped to the bounding box."""
        if sig in self._vertex_cache:
            return self._vertex_cache[sig]
        if sig not in self.interior_points:
            raise KeyError(f"{sig} is not a feasible cell")
        a, b = self.cell_halfspaces(sig)
        lo, hi = self.bounding_box
        dim = lo.size
        a = np.vstack([a, np.eye(dim), -np.eye(dim)])
        b = np.concatenate([b, hi, -lo])
        hs = HalfspaceIntersection(np.column_stack([a, -b]), self.interior_points[sig])
        verts = hs.intersections[ConvexHull(hs.intersections).vertices]
        self._vertex_cache[sig] = verts
        return verts

    def with_obstacles(self, obstacles: list[Obstacle]) -> "Arrangement":
        return Arrangement(
            hyperplanes=self.hyperplanes,
            bounding_box=self.bounding_box,
            feasible=self.feasible,
            interior_points=self.interior_points,
            interdicted=frozenset(o.sign_tuple for o in obstacles),
            obstacles=tuple(obstacles),
        )


def cell_of(arr: Arrangement, x) -> SignTuple:
    """Sign tuple of the cell containing x; errors near any hyperplane."""
    x = np.asarray(x, dtype=float)
    for m, h in enumerate(arr.hyperplanes):
        if h.distance(x) <= BOUNDARY_TOL:
            raise AmbiguousCellError(f"point within {BOUNDARY_TOL:g} of hyperplane {m}")
    return SignTuple(tuple(1 if h.value(x) <= 0 else -1 for h in arr.hyperplanes))


def _interior_point(a: np.ndarray, b: np.ndarray, lo: np.ndarray, hi: np.ndarray):
    """Deepest interior point of {a x <= b} in the box, or None.

    Chebyshev-style LP: maximize the uniform slack r with
    a_i x + r ||a_i|| <= b_i and the box constraints.
    """
    dim = lo.size
    a_all = np.vstack([a, np.eye(dim), -np.eye(dim)]) if a.size else np.vstack([np.eye(dim), -np.eye(dim)])
    b_all = np.concatenate([b, hi, -lo]) if a.size else np.concatenate([hi, -lo])
    norms = np.linalg.norm(a_all, axis=1)
    res = linprog(
        np.concatenate([np.zeros(dim), [-1.0]]),
        A_ub=np.column_stack([a_all, norms]),
        b_ub=b_all,
        bounds=[(None, None)] * dim + [(0, None)],
        method="highs",
    )
    if res.status != 0 or res.x[dim] <= INTERIOR_RADIUS:
        return None
    return res.x[:dim]


def enumerate_cells(hyperplanes: list[Hyperplane], bounding_box) -> Arrangement:
    """All sign tuples whose cell has interior inside the bounding box.

    Candidates grow by incremental sign-vector expansion, so only prefixes
    that are already feasible get extended; each surviving tuple carries its
    interior-point certificate.
    """
    planes = tuple(hyperplanes)
    if len(planes) > MAX_HYPERPLANES:
        raise ValueError(f"at most {MAX_HYPERPLANES} hyperplanes supported, got {len(planes)}")
    if bounding_box is None:
        raise ValueError("a bounding box is required to enumerate cells")
    lo = np.asarray(bounding_box[0], dtype=float)
    hi = np.asarray(bounding_box[1], dtype=float)
    if np.any(hi <= lo):
        raise ValueError("bounding box must have positive extent")

    normals = np.array([h.normal for h in planes])
    offsets = np.array([h.offset for h in planes])

    partial: list[tuple[tuple[int, ...], np.ndarray]] = [((), None)]
    for m in range(len(planes)):
        grown = []
        for signs, _ in partial:
            for s in (1, -1):
                cand = signs + (s,)
                sgn = np.asarray(cand, dtype=float)
                a = sgn[:, None] * normals[: m + 1]
                b = sgn * offsets[: m + 1]
                point = _interior_point(a, b, lo, hi)
                if point is not None:
                    grown.append((cand, point))
        partial = grown

    interior_points = {SignTuple(signs): point for signs, point in partial}
    return Arrangement(
        hyperplanes=planes,
        bounding_box=(lo, hi),
        feasible=frozenset(interior_points),
        interior_points=interior_points,
    )


def classify_point(arr: Arrangement, x) -> SignTuple:
    """Cell of x, which must be a feasible cell of the arrangement."""
    sig = cell_of(arr, x)
    if sig not in arr.feasible:
        raise ValueError(f"point {x} maps to infeasible tuple {sig}")
    return sig


def obstacle_from_tuple(arr: Arrangement, sig: SignTuple, name: str = "") -> Obstacle:
    if sig not in arr.feasible:
        raise ValueError(f"obstacle tuple {sig} is not a feasible cell")
    return Obstacle(
        sign_tuple=sig,
        halfspaces=arr.cell_halfspaces(sig),
        vertices=arr.cell_vertices(sig),
        name=name,
    )


def obstacle_from_vertices(arr: Arrangement, vertices, name: str = "") -> Obstacle:
    """Classify a vertex-declared polytope to its (single) cell.

    The polytope must not straddle any arrangement hyperplane; the interdicted
    region is the whole cell containing it.
    """
    verts = np.atleast_2d(np.asarray(vertices, dtype=float))
    centroid = verts.mean(axis=0)
    sig = classify_point(arr, centroid)
    a, b = arr.cell_halfspaces(sig)
    worst = (a @ verts.T - b[:, None]).max()
    if worst > 1e-7:  # allow vertices on the cell boundary, reject straddling
        raise ValueError(f"obstacle {name or verts} straddles an arrangement hyperplane")
    return Obstacle(sign_tuple=sig, halfspaces=(a, b), vertices=arr.cell_vertices(sig), name=name)


def inflate_obstacle(halfspaces: tuple[np.ndarray, np.ndarray], region: SafetyRegion | None):
    """Outer approximation of cell (+) the reflected safety region.

    Each facet offset grows by the support of the reflected region in the
    facet-normal direction, so the result contains the Minkowski sum while
    keeping the original facet normals.
    """
    a, b = halfspaces
    if region is None or region.is_degenerate:
        return a, b.copy()
    grow = np.array([region.support(-a[m]) for m in range(a.shape[0])])
    return a, b + grow


def default_bounding_box(points, factor: float = 1.5) -> tuple[np.ndarray, np.ndarray]:
    """Axis-aligned box around the points, isotropically scaled by `factor`.

    The half-extent on every axis is `factor` times half the largest spread,
    so thin scenarios still get a usable planar box.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    lo, hi = pts.min(axis=0), pts.max(axis=0)
    center = 0.5 * (lo + hi)
    half = factor * 0.5 * max((hi - lo).max(), 1.0)
    return center - half, center + half
