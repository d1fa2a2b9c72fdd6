"""Dense convex quadratic programming.

Solves   min ½ xᵀQx + qᵀx   s.t.   A x = b,   G x <= g
by an over-relaxed operator-splitting iteration on the two-sided form
l <= C x <= u (C stacks A over G), with a direct KKT factorization that is
reused across iterations, followed by an active-set polish step that pushes
the KKT residuals to solver tolerance.  Primal infeasibility is detected
from a divergence certificate on the dual iterates.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import lu_factor, lu_solve, null_space

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
MAX_ITERATIONS = "max_iterations"

SIGMA = 1e-6         # proximal regularization on x
ALPHA = 1.6          # over-relaxation
RHO_BASE = 0.1
RHO_EQ_SCALE = 1e3   # equality rows get a stiffer penalty
CHECK_INTERVAL = 25
POLISH_DELTA = 1e-9


@dataclass(frozen=True)
class ResidualTolerances:
    stationarity: float = 1e-8
    primal: float = 1e-8
    dual: float = 1e-8
    complementarity: float = 1e-8
    infeasibility: float = 1e-7


@dataclass(frozen=True, eq=False)
class QuadraticProgram:
    """min ½ xᵀQx + qᵀx  s.t.  A x = b,  G x <= g.  A/G may be empty."""

    Q: np.ndarray
    q: np.ndarray
    A: np.ndarray | None = None
    b: np.ndarray | None = None
    G: np.ndarray | None = None
    g: np.ndarray | None = None

    def __post_init__(self) -> None:
        Q = np.asarray(self.Q, dtype=float)
        q = np.asarray(self.q, dtype=float)
        n = q.size
        if Q.shape != (n, n):
            raise ValueError(f"Q must be {n}x{n}, got {Q.shape}")
        if np.abs(Q - Q.T).max(initial=0.0) > 1e-12:
            raise ValueError("Q must be symmetric within 1e-12")
        A, b = _as_system(self.A, self.b, n, "equality")
        G, g = _as_system(self.G, self.g, n, "inequality")
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "G", G)
        object.__setattr__(self, "g", g)

    @property
    def dim(self) -> int:
        return self.q.size

    def objective(self, x: np.ndarray) -> float:
        return float(0.5 * x @ self.Q @ x + self.q @ x)


@dataclass(frozen=True, eq=False)
class QpSolution:
    x: np.ndarray
    status: str
    kkt_residuals: tuple[float, float, float, float]  # stationarity, primal, dual, complementarity
    objective: float
    y_eq: np.ndarray
    y_ineq: np.ndarray
    iterations: int
    certificate: np.ndarray | None = None

    @property
    def multipliers(self) -> np.ndarray:
        return np.concatenate([self.y_eq, self.y_ineq])


def _as_system(mat, rhs, n: int, label: str):
    if mat is None or np.size(mat) == 0:
        return np.zeros((0, n)), np.zeros(0)
    mat = np.atleast_2d(np.asarray(mat, dtype=float))
    rhs = np.atleast_1d(np.asarray(rhs, dtype=float))
    if mat.shape != (rhs.size, n):
        raise ValueError(f"{label} system shapes inconsistent: {mat.shape} vs rhs {rhs.shape}")
    return mat, rhs


def _require_psd(Q: np.ndarray) -> None:
    try:
        np.linalg.cholesky(Q + 1e-10 * np.eye(Q.shape[0]))
    except np.linalg.LinAlgError:
        raise ValueError("Q must be positive semidefinite") from None


def _residuals(qp: QuadraticProgram, x, y_eq, y_ineq):
    stat = qp.Q @ x + qp.q
    if qp.A.shape[0]:
        stat = stat + qp.A.T @ y_eq
    if qp.G.shape[0]:
        stat = stat + qp.G.T @ y_ineq
    stationarity = float(np.abs(stat).max(initial=0.0))
    primal = 0.0
    if qp.A.shape[0]:
        primal = float(np.abs(qp.A @ x - qp.b).max())
    comp = 0.0
    dual = 0.0
    if qp.G.shape[0]:
        slack = qp.g - qp.G @ x
        primal = max(primal, float(np.maximum(-slack, 0.0).max()))
        dual = float(np.maximum(-y_ineq, 0.0).max())
        comp = float(np.abs(y_ineq * slack).max())
    return stationarity, primal, dual, comp


def _within(res, tol: ResidualTolerances) -> bool:
    return (
        res[0] <= tol.stationarity
        and res[1] <= tol.primal
        and res[2] <= tol.dual
        and res[3] <= tol.complementarity
    )


def _certificate(rows, lower, upper, v, tol: float):
    """Validate a Farkas-style primal infeasibility certificate.

    v must combine the rows into nothing while paying a strictly negative
    bound support.  Returns the normalized certificate, or None.
    """
    norm = float(np.abs(v).max(initial=0.0))
    if norm <= 1e-14:
        return None
    pos, neg = np.maximum(v, 0.0), np.minimum(v, 0.0)
    inf_u = ~np.isfinite(upper)
    inf_l = ~np.isfinite(lower)
    if pos[inf_u].max(initial=0.0) > tol * norm:
        return None
    if (-neg[inf_l]).max(initial=0.0) > tol * norm:
        return None
    if float(np.abs(rows.T @ v).max(initial=0.0)) > tol * norm:
        return None
    support = float(upper[~inf_u] @ pos[~inf_u] + lower[~inf_l] @ neg[~inf_l])
    if support > -tol * norm:
        return None
    return v / norm


def _clean_ray(rows, lower, upper, dy):
    """Project a near-certificate dual step onto the exact ray conditions.

    The divergence direction can carry a slowly decaying rows^T component;
    pinning the near-zero sign-constrained entries and projecting the rest
    onto null(rows^T) removes it.  The result is only a candidate and goes
    back through _certificate.
    """
    norm = float(np.abs(dy).max(initial=0.0))
    if norm <= 1e-14:
        return None
    v = dy / norm
    sign_constrained = ~np.isfinite(lower) | ~np.isfinite(upper)
    pinned = sign_constrained & (np.abs(v) < 1e-6)
    free = np.flatnonzero(~pinned)
    if free.size == 0:
        return None
    basis = null_space(rows[free].T)
    if basis.size == 0:
        return None
    cleaned = np.zeros_like(v)
    cleaned[free] = basis @ (basis.T @ v[free])
    return cleaned


def _polish(qp: QuadraticProgram, rows, lower, upper, meq, x, z, y, tol):
    """Solve the equality-constrained QP on the detected active set.

    The projected iterate sits exactly on a bound for active rows, so the
    active set is read off z.  A lightly regularized KKT solve plus
    iterative refinement recovers near-exact residuals; rows whose
    multiplier comes out with the wrong sign are dropped and the system
    re-solved.
    """
    n = qp.dim
    m = rows.shape[0]
    at_upper = np.zeros(m, dtype=bool)
    at_lower = np.zeros(m, dtype=bool)
    finite_u = np.isfinite(upper)
    finite_l = np.isfinite(lower)
    at_upper[finite_u] = z[finite_u] >= upper[finite_u] - 1e-9
    at_lower[finite_l] = z[finite_l] <= lower[finite_l] + 1e-9
    active = at_upper | at_lower
    active[:meq] = True

    for _ in range(6):
        idx = np.flatnonzero(active)
        a_act = rows[idx]
        rhs_act = np.where(at_upper[idx], upper[idx], lower[idx])  # equality rows have l == u
        k = idx.size
        kkt = np.zeros((n + k, n + k))
        kkt[:n, :n] = qp.Q
        kkt[:n, n:] = a_act.T
        kkt[n:, :n] = a_act
        reg = kkt + np.diag(np.concatenate([np.full(n, POLISH_DELTA), np.full(k, -POLISH_DELTA)]))
        rhs = np.concatenate([-qp.q, rhs_act])
        try:
            lu = lu_factor(reg)
        except (np.linalg.LinAlgError, ValueError):
            return None
        sol = lu_solve(lu, rhs)
        nu = sol[n:]
        for _ in range(25):  # refinement sweeps against the unregularized system
            x_new = sol[:n]
            nu = sol[n:]
            y_new = np.zeros(m)
            y_new[idx] = nu
            y_eq, y_in = y_new[:meq], y_new[meq:]
            res = _residuals(qp, x_new, y_eq, y_in)
            if _within(res, tol):
                return x_new, y_eq, y_in, res
            sol = sol + lu_solve(lu, rhs - kkt @ sol)
        ineq = idx >= meq
        wrong = ineq & np.where(at_upper[idx], nu < -tol.dual, nu > tol.dual)
        if not wrong.any():
            return None
        active[idx[wrong]] = False
    return None


def solve(
    qp: QuadraticProgram,
    tol: ResidualTolerances | None = None,
    warm_start: tuple[np.ndarray, np.ndarray] | None = None,
    max_iter: int = 50_000,
) -> QpSolution:
    """Solve the QP; deterministic for fixed inputs.

    warm_start is an optional (x, multipliers) pair, multipliers stacked
    equality-first as in QpSolution.multipliers.
    """
    tol = tol or ResidualTolerances()
    _require_psd(qp.Q)
    n = qp.dim
    meq = qp.A.shape[0]
    rows = np.vstack([qp.A, qp.G])
    m = rows.shape[0]
    lower = np.concatenate([qp.b, np.full(qp.G.shape[0], -np.inf)])
    upper = np.concatenate([qp.b, qp.g])

    if m == 0:
        x = np.linalg.lstsq(qp.Q, -qp.q, rcond=None)[0]
        res = _residuals(qp, x, np.zeros(0), np.zeros(0))
        status = OPTIMAL if _within(res, tol) else MAX_ITERATIONS
        return QpSolution(x, status, res, qp.objective(x), np.zeros(0), np.zeros(0), 0)

    rho = np.full(m, RHO_BASE)
    rho[:meq] *= RHO_EQ_SCALE

    if warm_start is not None:
        x = np.array(warm_start[0], dtype=float)
        y = np.array(warm_start[1], dtype=float)
    else:
        x = np.zeros(n)
        y = np.zeros(m)
    z = np.clip(rows @ x, lower, upper)

    def factor(rho_vec):
        kkt = np.zeros((n + m, n + m))
        kkt[:n, :n] = qp.Q + SIGMA * np.eye(n)
        kkt[:n, n:] = rows.T
        kkt[n:, :n] = rows
        kkt[n:, n:] = -np.diag(1.0 / rho_vec)
        return lu_factor(kkt)

    lu = factor(rho)
    eps_coarse = 1e-6

    for it in range(1, max_iter + 1):
        rhs = np.concatenate([SIGMA * x - qp.q, z - y / rho])
        sol = lu_solve(lu, rhs)
        x_t, nu = sol[:n], sol[n:]
        z_t = z + (nu - y) / rho
        y_prev = y
        x = ALPHA * x_t + (1.0 - ALPHA) * x
        w = ALPHA * z_t + (1.0 - ALPHA) * z
        z = np.clip(w + y / rho, lower, upper)
        y = y + rho * (w - z)

        if it % CHECK_INTERVAL != 0:
            continue

        # divergence certificate for primal infeasibility
        dy = y - y_prev
        cert = _certificate(rows, lower, upper, dy, tol.infeasibility)
        if cert is None and it % 2000 == 0:
            cleaned = _clean_ray(rows, lower, upper, dy)
            if cleaned is not None:
                cert = _certificate(rows, lower, upper, cleaned, tol.infeasibility)
        if cert is not None:
            res = _residuals(qp, x, y[:meq], y[meq:])
            return QpSolution(
                x, INFEASIBLE, res, qp.objective(x), y[:meq], y[meq:], it, certificate=cert
            )

        prim = float(np.abs(rows @ x - z).max())
        dual_vec = qp.Q @ x + qp.q + rows.T @ y
        dual = float(np.abs(dual_vec).max())

        # periodic fallback attempt: at large objective scales the iteration can
        # reach its float-precision fixed point without ever passing the gate
        if (prim <= eps_coarse and dual <= eps_coarse) or it % 2000 == 0:
            polished = _polish(qp, rows, lower, upper, meq, x, z, y, tol)
            if polished is not None:
                x_new, y_eq, y_in, res = polished
                return QpSolution(x_new, OPTIMAL, res, qp.objective(x_new), y_eq, y_in, it)
            res = _residuals(qp, x, y[:meq], y[meq:])
            if _within(res, tol):
                return QpSolution(x, OPTIMAL, res, qp.objective(x), y[:meq], y[meq:], it)
            eps_coarse = max(eps_coarse / 10.0, 1e-12)

        # adaptive penalty: rebalance primal vs dual progress
        scale_p = max(float(np.abs(rows @ x).max(initial=0.0)), float(np.abs(z).max(initial=0.0)), 1e-10)
        scale_d = max(
            float(np.abs(qp.Q @ x).max(initial=0.0)),
            float(np.abs(qp.q).max(initial=0.0)),
            float(np.abs(rows.T @ y).max(initial=0.0)),
            1e-10,
        )
        ratio = np.sqrt((prim / scale_p) / max(dual / scale_d, 1e-16))
        if ratio > 5.0 or ratio < 0.2:
            rho = np.clip(rho * ratio, 1e-6, 1e6)
            lu = factor(rho)

    res = _residuals(qp, x, y[:meq], y[meq:])
    status = OPTIMAL if _within(res, tol) else MAX_ITERATIONS
    return QpSolution(x, status, res, qp.objective(x), y[:meq], y[meq:], max_iter)
