"""B-spline basis evaluation, knot handling, derivative and Gram matrices.

Conventions: a spline of order ``d`` has polynomial degree ``d - 1`` and its
order-1 basis functions are knot-span indicators.  A knot vector with knots
``tau_0 <= ... <= tau_m`` carries ``m - k + 1`` basis functions of order
``k`` and pairs with ``n + 1 = m - d + 1`` control points at full order.
Evaluation is right-closed at the final knot so clamped curves attain their
last control point.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.polynomial.legendre import leggauss


class DomainError(ValueError):
    """Evaluation time outside the knot range."""


@dataclass(frozen=True, eq=False)
class KnotVector:
    """Non-decreasing time instants plus the spline order.

    Args:
        knots: array of time instants tau_0..tau_m, non-decreasing.
        order: spline order d >= 2 (degree d - 1).

    Interior knot values must have multiplicity < d so that the recursion
    denominators of adjacent spans never vanish simultaneously.
    """

    knots: np.ndarray
    order: int

    def __post_init__(self) -> None:
        knots = np.asarray(self.knots, dtype=float)
        if knots.ndim != 1 or knots.size < 2:
            raise ValueError("knots must be a 1-D array with at least two entries")
        if self.order < 2:
            raise ValueError("order must be >= 2")
        if knots.size < self.order + 1:
            raise ValueError("need at least order+1 knots")
        if np.any(np.diff(knots) < 0):
            raise ValueError("knots must be non-decreasing")
        values, counts = np.unique(knots, return_counts=True)
        interior = (values > knots[0]) & (values < knots[-1])
        if np.any(counts[interior] >= self.order):
            raise ValueError("interior knot multiplicity must be < order")
        if counts[0] > self.order or counts[-1] > self.order:
            raise ValueError("end knot multiplicity must be <= order")
        knots.setflags(write=False)
        object.__setattr__(self, "knots", knots)

    @classmethod
    def clamped_uniform(cls, t_start: float, t_end: float, n: int, d: int) -> "KnotVector":
        """Clamped knot vector on [t_start, t_end] for n+1 control points.

        End knots are repeated d times; the interior knots are equally
        distributed between the extremes.
        """
        if t_end <= t_start:
            raise ValueError("t_end must exceed t_start")
        if n + 1 < d:
            raise ValueError(f"need at least d={d} control points, got n+1={n + 1}")
        # m + 1 = n + d + 1 knots total; n + 1 - d interior knots
        interior = np.linspace(t_start, t_end, n - d + 3)[1:-1]
        knots = np.concatenate([np.full(d, t_start), interior, np.full(d, t_end)])
        return cls(knots, d)

    @property
    def n(self) -> int:
        """Index of the last control point (count minus one)."""
        return self.knots.size - 1 - self.order

    @property
    def t_start(self) -> float:
        return float(self.knots[0])

    @property
    def t_end(self) -> float:
        return float(self.knots[-1])

    @property
    def is_clamped(self) -> bool:
        d = self.order
        return bool(self.knots[0] == self.knots[d - 1] and self.knots[-d] == self.knots[-1])

    def trimmed(self) -> "KnotVector":
        """Knot vector of the derivative basis: drop one knot per end, lower the order."""
        if self.order - 1 < 2:
            raise ValueError("cannot trim below order 2")
        return KnotVector(self.knots[1:-1].copy(), self.order - 1)

    def spans(self) -> list[tuple[int, float, float]]:
        """Non-empty knot spans as (index i, tau_i, tau_{i+1})."""
        k = self.knots
        return [(i, float(k[i]), float(k[i + 1])) for i in range(k.size - 1) if k[i] < k[i + 1]]


@dataclass(frozen=True, eq=False)
class ControlPolygon:
    """Ordered control points p_0..p_n, one row per point."""

    points: np.ndarray

    def __post_init__(self) -> None:
        pts = np.atleast_2d(np.asarray(self.points, dtype=float))
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @property
    def count(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]


@dataclass(frozen=True, eq=False)
class SplineCurve:
    """B-spline curve z(t) = P B_d(t) for a clamped knot vector."""

    knots: KnotVector
    polygon: ControlPolygon

    def __post_init__(self) -> None:
        if self.polygon.count != self.knots.n + 1:
            raise ValueError(
                f"polygon has {self.polygon.count} points, knot vector expects {self.knots.n + 1}"
            )

    def eval(self, t) -> np.ndarray:
        return curve_eval(self, t)

    def derivative(self, r: int = 1) -> "SplineCurve":
        """Curve of the r-th derivative: order d-r over the trimmed knots."""
        deriv = derivative_matrix(self.knots, r)
        return SplineCurve(deriv.knots, ControlPolygon(deriv.matrix.T @ self.polygon.points))


@dataclass(frozen=True, eq=False)
class DerivativeMatrix:
    """Matrix M_r with B_d^(r)(t) = M_r B_{d-r}(t) on the open knot spans.

    ``knots`` is the trimmed knot vector (order d - r) on which the reduced
    basis B_{d-r} is evaluated; ``matrix`` has shape (n+1, n+1-r).
    """

    order: int
    matrix: np.ndarray
    knots: KnotVector


def _basis_rows(knots: np.ndarray, k: int, ts: np.ndarray) -> np.ndarray:
    """Cox-de Boor recursion, vectorized over times; rows are basis indices."""
    m = knots.size - 1
    values = np.zeros((m, ts.size))
    for i in range(m):
        values[i] = (knots[i] <= ts) & (ts < knots[i + 1])
    # right-closed final knot: the last non-empty span owns t == tau_m
    at_end = ts == knots[-1]
    if np.any(at_end):
        last = int(np.max(np.nonzero(np.diff(knots) > 0)[0]))
        values[last, at_end] = 1.0
    for kk in range(2, k + 1):
        nxt = np.zeros((m - kk + 1, ts.size))
        for i in range(m - kk + 1):
            acc = nxt[i]
            den_left = knots[i + kk - 1] - knots[i]
            if den_left > 0:
                acc += (ts - knots[i]) / den_left * values[i]
            den_right = knots[i + kk] - knots[i + 1]
            if den_right > 0:
                acc += (knots[i + kk] - ts) / den_right * values[i + 1]
        values = nxt
    return values


def _check_domain(kv: KnotVector, ts: np.ndarray) -> None:
    if np.any(ts < kv.t_start) or np.any(ts > kv.t_end):
        bad = ts[(ts < kv.t_start) | (ts > kv.t_end)]
        raise DomainError(
            f"t={bad[0]:g} outside knot range [{kv.t_start:g}, {kv.t_end:g}]"
        )


def basis_eval(kv: KnotVector, k: int, t: float) -> np.ndarray:
    """All order-k basis values B_{i,k}(t), i = 0..m-k.

    Any 0/0 term of the recursion is taken as 0.  Raises DomainError for t
    outside the knot range.
    """
    if not 1 <= k <= kv.order:
        raise ValueError(f"order k={k} must be in 1..{kv.order}")
    ts = np.asarray([t], dtype=float)
    _check_domain(kv, ts)
    return _basis_rows(kv.knots, k, ts)[:, 0]


def basis_matrix(kv: KnotVector, k: int, ts) -> np.ndarray:
    """Basis values at many times; column j holds B_k(ts[j])."""
    if not 1 <= k <= kv.order:
        raise ValueError(f"order k={k} must be in 1..{kv.order}")
    ts = np.asarray(ts, dtype=float).ravel()
    _check_domain(kv, ts)
    return _basis_rows(kv.knots, k, ts)


def curve_eval(curve: SplineCurve, t) -> np.ndarray:
    """Curve point(s) P B_d(t); shape (dim,) for scalar t, (len(t), dim) otherwise."""
    scalar = np.isscalar(t) or np.ndim(t) == 0
    basis = basis_matrix(curve.knots, curve.knots.order, np.atleast_1d(t))
    out = basis.T @ curve.polygon.points
    return out[0] if scalar else out


def derivative_matrix(kv: KnotVector, r: int) -> DerivativeMatrix:
    """Derivative matrix M_r from the knot-difference recurrence, clamped knots only.

    Built by composing first-derivative matrices of successively trimmed knot
    vectors; requires r <= d - 2 so the differentiated curve is continuous.
    """
    if r < 1:
        raise ValueError("derivative order r must be >= 1")
    if r > kv.order - 2:
        raise ValueError(f"r={r} too large for order {kv.order} (need r <= d-2)")
    if not kv.is_clamped:
        raise ValueError("derivative matrices require a clamped knot vector")

    def first(kvi: KnotVector) -> np.ndarray:
        d, knots, n = kvi.order, kvi.knots, kvi.n
        mat = np.zeros((n + 1, n))
        for j in range(n):
            c = (d - 1) / (knots[j + d] - knots[j + 1])
            mat[j, j] -= c
            mat[j + 1, j] += c
        return mat

    matrix = first(kv)
    reduced = kv.trimmed()
    for _ in range(r - 1):
        matrix = matrix @ first(reduced)
        reduced = reduced.trimmed()
    return DerivativeMatrix(order=r, matrix=matrix, knots=reduced)


def gram_matrix(kv: KnotVector, k: int) -> np.ndarray:
    """Gram matrix G_ij = integral of B_{i,k} B_{j,k} over the knot range.

    Integrated span by span with k-point Gauss-Legendre quadrature, which is
    exact: the integrand is a polynomial of degree 2(k-1) on each span.
    """
    if not 1 <= k <= kv.order:
        raise ValueError(f"order k={k} must be in 1..{kv.order}")
    count = kv.knots.size - k
    gram = np.zeros((count, count))
    nodes, weights = leggauss(k)
    for _, a, b in kv.spans():
        ts = 0.5 * (b - a) * nodes + 0.5 * (a + b)
        basis = _basis_rows(kv.knots, k, ts)
        gram += 0.5 * (b - a) * (basis * weights) @ basis.T
    return 0.5 * (gram + gram.T)
