"""Dense convex LP/QP solver with equality/inequality constraints.

A single Mehrotra-style primal-dual interior point method serves every
optimization in the package: the two optimal control problems, the RCI
design LP, and the membership/decomposition LPs. Infeasibility is decided
exclusively by a phase-1 feasibility oracle (minimum total constraint
violation), never by iteration divergence.
"""

import warnings
from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.linalg import LinAlgWarning, lu_factor, lu_solve

DEFAULT_TOL = 1e-7
DEFAULT_MAX_ITER = 5000
FEASIBILITY_SLACK_TOL = 1e-7

# static diagonal regularization of the KKT system
_REG = 1e-11


class SolverError(RuntimeError):
    """Hard numeric failure (the phase-1 oracle itself did not converge)."""


class Status(Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    MAX_ITER = "max_iter"


@dataclass
class QpProblem:
    """min (1/2) z'Pz + q'z  s.t.  Aeq z = beq,  Gin z <= hin.

    P must be symmetric positive semidefinite; pass P = 0 for an LP.
    Empty constraint blocks may be given as None.
    """

    P: np.ndarray
    q: np.ndarray
    Aeq: np.ndarray | None = None
    beq: np.ndarray | None = None
    Gin: np.ndarray | None = None
    hin: np.ndarray | None = None

    def __post_init__(self):
        self.q = np.asarray(self.q, dtype=float).ravel()
        n = self.q.size
        self.P = np.asarray(self.P, dtype=float).reshape(n, n)
        if self.P.any():
            if not np.allclose(self.P, self.P.T, atol=1e-9):
                raise ValueError("P must be symmetric")
            if np.linalg.eigvalsh(0.5 * (self.P + self.P.T)).min() < -1e-10:
                raise ValueError("P must be positive semidefinite")
        self.Aeq, self.beq = _as_system(self.Aeq, self.beq, n)
        self.Gin, self.hin = _as_system(self.Gin, self.hin, n)

    @property
    def n(self) -> int:
        return self.q.size


@dataclass
class Solution:
    status: Status
    z: np.ndarray
    eq_duals: np.ndarray
    ineq_duals: np.ndarray
    objective: float
    iterations: int = 0

    def kkt_residuals(self, p: QpProblem) -> dict:
        """Max-norm stationarity / feasibility / complementarity residuals."""
        r_stat = p.P @ self.z + p.q + p.Aeq.T @ self.eq_duals + p.Gin.T @ self.ineq_duals
        r_eq = p.Aeq @ self.z - p.beq
        gap = p.Gin @ self.z - p.hin
        return {
            "stationarity": _inf_norm(r_stat),
            "eq": _inf_norm(r_eq),
            "ineq": max(0.0, gap.max(initial=0.0)),
            "comp": _inf_norm(self.ineq_duals * gap),
            "dual_sign": max(0.0, (-self.ineq_duals).max(initial=0.0)),
        }


@dataclass
class FeasibilityReport:
    feasible: bool
    slack: float
    witness: np.ndarray | None = None


def _as_system(M, v, n):
    if M is None or v is None or (hasattr(v, "__len__") and len(v) == 0):
        return np.zeros((0, n)), np.zeros(0)
    M = np.asarray(M, dtype=float)
    v = np.asarray(v, dtype=float).ravel()
    M = M.reshape(v.size, n)
    return M, v


def _inf_norm(v):
    return float(np.abs(v).max()) if v.size else 0.0


def _ipm(P, q, A, b, G, h, tol, max_iter):
    """Core primal-dual interior point iteration.

    Returns (z, y, mu, converged, iterations). Convergence means every KKT
    residual is below ``tol`` in the max-norm.
    """
    n = q.size
    mE, mI = A.shape[0], G.shape[0]

    if mI == 0:
        # Pure equality-constrained QP: one saddle-point solve.
        K = np.zeros((n + mE, n + mE))
        K[:n, :n] = P + _REG * np.eye(n)
        K[:n, n:] = A.T
        K[n:, :n] = A
        K[n:, n:] = -_REG * np.eye(mE)
        rhs = np.concatenate([-q, b])
        try:
            sol = np.linalg.solve(K, rhs)
        except np.linalg.LinAlgError:
            sol = np.linalg.lstsq(K, rhs, rcond=None)[0]
        z, y = sol[:n], sol[n:]
        ok = (_inf_norm(P @ z + q + A.T @ y) <= tol) and (_inf_norm(A @ z - b) <= tol)
        return z, y, np.zeros(0), ok, 1

    # Starting point.
    if mE:
        z = np.linalg.lstsq(A, b, rcond=None)[0]
    else:
        z = np.zeros(n)
    s = np.maximum(1.0, np.abs(h - G @ z))
    mu = np.ones(mI)
    y = np.zeros(mE)

    def residuals(z, y, s, mu):
        r_d = P @ z + q + A.T @ y + G.T @ mu
        r_p = A @ z - b
        r_g = G @ z + s - h
        return r_d, r_p, r_g

    best = np.inf
    stall = 0
    it = 0
    for it in range(1, max_iter + 1):
        r_d, r_p, r_g = residuals(z, y, s, mu)
        err = max(_inf_norm(r_d), _inf_norm(r_p), _inf_norm(r_g), _inf_norm(mu * s))
        if err <= tol:
            return z, y, mu, True, it
        if err < best - 1e-16:
            best = err
            stall = 0
        else:
            stall += 1
            if stall > 15:
                break

        d = np.clip(mu / s, 1e-16, 1e16)
        H_blk = P + G.T @ (d[:, None] * G)
        # escalate the regularization only when the factorization breaks
        # down (possible when a few barrier terms dominate the rest)
        fac = None
        reg = _REG
        while reg <= 1.0:
            K = np.zeros((n + mE, n + mE))
            K[:n, :n] = H_blk + reg * np.eye(n)
            K[:n, n:] = A.T
            K[n:, :n] = A
            K[n:, n:] = -reg * np.eye(mE)
            try:
                with warnings.catch_warnings():
                    warnings.simplefilter("ignore", LinAlgWarning)
                    cand = lu_factor(K, check_finite=False)
            except (np.linalg.LinAlgError, ValueError):
                reg *= 1e3
                continue
            probe = lu_solve(cand, np.ones(n + mE), check_finite=False)
            if np.isfinite(probe).all():
                fac = cand
                break
            reg *= 1e3
        if fac is None:
            break

        def solve(rhs):
            return lu_solve(fac, rhs, check_finite=False)

        def direction(tau_vec):
            rhs_z = -r_d - G.T @ (tau_vec / s - mu + d * r_g)
            rhs = np.concatenate([rhs_z, -r_p])
            sol = solve(rhs)
            dz, dy = sol[:n], sol[n:]
            ds = -r_g - G @ dz
            dmu = (tau_vec - s * mu - mu * ds) / s
            return dz, dy, ds, dmu

        def max_step(v, dv):
            neg = dv < 0
            if not neg.any():
                return 1.0
            return min(1.0, float((-v[neg] / dv[neg]).min()))

        # Predictor.
        dz_a, dy_a, ds_a, dmu_a = direction(np.zeros(mI))
        if not (np.isfinite(dz_a).all() and np.isfinite(ds_a).all()
                and np.isfinite(dmu_a).all()):
            break
        alpha_p = max_step(s, ds_a)
        alpha_d = max_step(mu, dmu_a)
        mu_avg = float(s @ mu) / mI
        mu_aff = float((s + alpha_p * ds_a) @ (mu + alpha_d * dmu_a)) / mI
        sigma = (max(mu_aff, 0.0) / max(mu_avg, 1e-300)) ** 3

        # Corrector.
        tau = sigma * mu_avg - ds_a * dmu_a
        dz, dy, ds, dmu = direction(tau)
        alpha_p = 0.995 * max_step(s, ds)
        alpha_d = 0.995 * max_step(mu, dmu)
        alpha = min(alpha_p, alpha_d)
        z = z + alpha * dz
        y = y + alpha * dy
        s = np.maximum(s + alpha * ds, 1e-30)
        mu = np.maximum(mu + alpha * dmu, 1e-30)

    r_d, r_p, r_g = residuals(z, y, s, mu)
    err = max(_inf_norm(r_d), _inf_norm(r_p), _inf_norm(r_g), _inf_norm(mu * s))
    return z, y, mu, err <= tol, it


def check_feasible(Aeq, beq, Gin, hin) -> FeasibilityReport:
    """Phase-1 oracle: minimize the total nonnegative constraint violation.

    The system {Aeq z = beq, Gin z <= hin} is declared feasible iff the
    optimal total slack is at most ``FEASIBILITY_SLACK_TOL``.
    """
    n = _n_cols(Aeq, Gin)
    A, b = _as_system(Aeq, beq, n)
    G, h = _as_system(Gin, hin, n)
    mE, mI = A.shape[0], G.shape[0]
    # Variables: (z, tp, tm, ti) with A z + tp - tm = b, G z - ti <= h, t >= 0.
    nv = n + 2 * mE + mI
    c = np.concatenate([np.zeros(n), np.ones(2 * mE + mI)])
    Ae = np.hstack([A, np.eye(mE), -np.eye(mE), np.zeros((mE, mI))])
    Gi = np.zeros((mI + 2 * mE + mI, nv))
    hi = np.zeros(mI + 2 * mE + mI)
    Gi[:mI, :n] = G
    Gi[:mI, n + 2 * mE:] = -np.eye(mI)
    hi[:mI] = h
    Gi[mI:, n:] = -np.eye(2 * mE + mI)
    z, y, mu, ok, _ = _ipm(np.zeros((nv, nv)), c, Ae, b, Gi, hi,
                           tol=1e-9, max_iter=DEFAULT_MAX_ITER)
    if not ok:
        raise SolverError("phase-1 feasibility LP did not converge")
    slack = float(c @ z)
    feasible = slack <= FEASIBILITY_SLACK_TOL
    return FeasibilityReport(feasible=feasible, slack=max(slack, 0.0),
                             witness=z[:n].copy() if feasible else None)


def _n_cols(Aeq, Gin):
    for M in (Aeq, Gin):
        if M is not None:
            M = np.asarray(M, dtype=float)
            if M.ndim == 2:
                return M.shape[1]
    raise ValueError("cannot infer variable count from empty systems")


def solve_qp(p: QpProblem, tol: float = DEFAULT_TOL,
             max_iter: int = DEFAULT_MAX_ITER,
             inner_tol: float | None = None) -> Solution:
    """Solve a convex QP to KKT residuals <= tol (max-norm).

    Statuses: OPTIMAL when the KKT conditions are certified; INFEASIBLE
    when the phase-1 oracle reports positive minimum slack; MAX_ITER when
    the iteration failed on a (phase-1-)feasible problem. The iteration
    targets ``inner_tol`` (default: two decades inside the contract) so
    certified residuals carry margin.
    """
    inner = inner_tol if inner_tol is not None else min(tol, 1e-9)
    z, y, mu, ok, it = _ipm(p.P, p.q, p.Aeq, p.beq, p.Gin, p.hin, inner, max_iter)
    if not ok:
        # Retry classification at the contract tolerance before phase-1.
        sol = Solution(Status.OPTIMAL, z, y, mu, _objective(p, z), it)
        res = sol.kkt_residuals(p)
        ok = max(res["stationarity"], res["eq"], res["ineq"],
                 res["comp"], res["dual_sign"]) <= tol
    if ok:
        return Solution(Status.OPTIMAL, z, y, mu, _objective(p, z), it)
    report = check_feasible(p.Aeq, p.beq, p.Gin, p.hin)
    status = Status.MAX_ITER if report.feasible else Status.INFEASIBLE
    return Solution(status, z, y, mu, _objective(p, z), it)


def solve_lp(c, Aeq=None, beq=None, Gin=None, hin=None,
             tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER,
             inner_tol: float | None = None) -> Solution:
    """LP front end: solve_qp with a zero quadratic term."""
    c = np.asarray(c, dtype=float).ravel()
    p = QpProblem(np.zeros((c.size, c.size)), c, Aeq, beq, Gin, hin)
    return solve_qp(p, tol=tol, max_iter=max_iter, inner_tol=inner_tol)


def _objective(p: QpProblem, z: np.ndarray) -> float:
    return float(0.5 * z @ p.P @ z + p.q @ z)
