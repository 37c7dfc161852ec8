"""Transcription and solution of the main and ancillary control problems.

Both problems are posed in simultaneous form: states and inputs are all
decision variables, the dynamics enter as equality constraints, and the
terminal state is pinned to the origin. Box constraints scaled to zero
(the decoupled limit) degenerate to equalities so the interior-point
kernel never sees an empty-interior inequality.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import Horizons, SubsystemModel
from .rci import ScalingConstants
from .sets import Box, contains_point
from .solver import QpProblem, Solution, SolverError, Status, solve_qp

_ZERO_BOX_TOL = 1e-14


class MainInfeasible(RuntimeError):
    """The nominal state is outside the main problem's feasibility region."""


class AncillaryInfeasible(RuntimeError):
    """No admissible error-rejection plan exists for this disturbance sequence."""


@dataclass
class Prediction:
    """Optimal nominal plan: states x(0..N), inputs u(0..N-1), cost."""

    x_seq: np.ndarray
    u_seq: np.ndarray
    cost: float

    def rollout_residual(self, A: np.ndarray, B: np.ndarray) -> float:
        """Max dynamics defect when re-simulating the plan."""
        res = 0.0
        for k in range(self.u_seq.shape[0]):
            step = A @ self.x_seq[k] + B @ self.u_seq[k]
            res = max(res, float(np.abs(self.x_seq[k + 1] - step).max()))
        return res


@dataclass
class AncillarySolution:
    e_seq: np.ndarray
    f_seq: np.ndarray
    cost: float


@dataclass
class DisturbanceSequence:
    """Planned disturbances w(0..N); the last entry is always zero and the
    sequence reads as zero beyond index N."""

    w_seq: np.ndarray

    def __post_init__(self):
        self.w_seq = np.atleast_2d(np.asarray(self.w_seq, dtype=float))
        if np.any(self.w_seq[-1]):
            raise ValueError("last disturbance entry must be zero")

    @classmethod
    def zero(cls, N: int, n: int) -> "DisturbanceSequence":
        return cls(np.zeros((N + 1, n)))

    @property
    def N(self) -> int:
        return self.w_seq.shape[0] - 1

    def entry(self, k: int) -> np.ndarray:
        """w(k), zero-extended beyond the stored horizon."""
        if k >= self.w_seq.shape[0]:
            return np.zeros(self.w_seq.shape[1])
        return self.w_seq[k]

    def tail(self) -> "DisturbanceSequence":
        shifted = np.vstack([self.w_seq[1:], np.zeros((1, self.w_seq.shape[1]))])
        return DisturbanceSequence(shifted)

    def max_membership_violation(self, W, tol: float = 1e-8) -> float:
        """0.0 when every entry lies in W (LP membership at tol)."""
        worst = 0.0
        for w in self.w_seq:
            if not contains_point(W, w, tol=tol):
                worst = max(worst, float(np.abs(w).max()))
        return worst


def _scaled_box_rows(box: Box, a: float, nv: int, offset: int, dim: int):
    """(Gin, hin, Aeq, beq) rows pinning variables [offset, offset+dim) to a*box."""
    if a <= _ZERO_BOX_TOL:
        Aeq = np.zeros((dim, nv))
        Aeq[:, offset:offset + dim] = np.eye(dim)
        return None, None, Aeq, np.zeros(dim)
    Gin = np.zeros((2 * dim, nv))
    Gin[:dim, offset:offset + dim] = np.eye(dim)
    Gin[dim:, offset:offset + dim] = -np.eye(dim)
    hin = np.concatenate([a * box.hi, -a * box.lo])
    return Gin, hin, None, None


def _transcribe(A, B, Q, R, T, x0, terminal_zero, x_box, x_scale, x_steps,
                u_box, u_scale, w=None):
    """Shared builder for both OCPs over horizon T.

    Variables are [x(0..T), u(0..T-1)]; ``x_steps`` lists the prediction
    steps whose state is box-constrained; w, when given, enters the
    dynamics additively.
    """
    n, m = A.shape[0], B.shape[1]
    nx = (T + 1) * n
    nv = nx + T * m

    P = np.zeros((nv, nv))
    q = np.zeros(nv)
    for k in range(T):
        P[k * n:(k + 1) * n, k * n:(k + 1) * n] = Q
        P[nx + k * m:nx + (k + 1) * m, nx + k * m:nx + (k + 1) * m] = R

    eq_rows = [np.zeros((n, nv))]
    eq_rows[0][:, :n] = np.eye(n)
    eq_rhs = [np.asarray(x0, dtype=float).ravel()]
    for k in range(T):
        row = np.zeros((n, nv))
        row[:, (k + 1) * n:(k + 2) * n] = np.eye(n)
        row[:, k * n:(k + 1) * n] = -A
        row[:, nx + k * m:nx + (k + 1) * m] = -B
        eq_rows.append(row)
        eq_rhs.append(w.entry(k) if w is not None else np.zeros(n))
    if terminal_zero:
        row = np.zeros((n, nv))
        row[:, T * n:(T + 1) * n] = np.eye(n)
        eq_rows.append(row)
        eq_rhs.append(np.zeros(n))

    in_rows, in_rhs = [], []
    for k in x_steps:
        Gk, hk, Ak, bk = _scaled_box_rows(x_box, x_scale, nv, k * n, n)
        if Gk is not None:
            in_rows.append(Gk)
            in_rhs.append(hk)
        else:
            eq_rows.append(Ak)
            eq_rhs.append(bk)
    for k in range(T):
        Gk, hk, Ak, bk = _scaled_box_rows(u_box, u_scale, nv, nx + k * m, m)
        if Gk is not None:
            in_rows.append(Gk)
            in_rhs.append(hk)
        else:
            eq_rows.append(Ak)
            eq_rhs.append(bk)

    Aeq = np.vstack(eq_rows)
    beq = np.concatenate(eq_rhs)
    Gin = np.vstack(in_rows) if in_rows else None
    hin = np.concatenate(in_rhs) if in_rows else None
    return QpProblem(P, q, Aeq, beq, Gin, hin), nx


def _extract(sol: Solution, nx: int, T: int, n: int, m: int):
    x = sol.z[:nx].reshape(T + 1, n).copy()
    u = sol.z[nx:].reshape(T, m).copy()
    return x, u


def solve_main(model: SubsystemModel, scalings: ScalingConstants,
               horizons: Horizons, x_bar) -> Prediction:
    """Nominal regulation problem over horizon N with tightened boxes.

    States at steps 1..N-1 live in alpha_x*X, all inputs in alpha_u*U,
    and the plan terminates exactly at the origin.
    """
    N = horizons.N
    prob, nx = _transcribe(model.A, model.B, model.Q, model.R, N,
                           x_bar, True, model.X, scalings.alpha_x,
                           range(1, N), model.U, scalings.alpha_u)
    sol = solve_qp(prob)
    if sol.status is Status.INFEASIBLE:
        raise MainInfeasible(
            f"subsystem {model.id}: nominal state outside the feasibility region")
    if sol.status is not Status.OPTIMAL:
        raise SolverError(f"subsystem {model.id}: main problem solve failed to converge")
    x, u = _extract(sol, nx, N, model.n, model.m)
    x[N] = 0.0
    return Prediction(x_seq=x, u_seq=u, cost=sol.objective)


def solve_ancillary(model: SubsystemModel, scalings: ScalingConstants,
                    horizons: Horizons, e_bar,
                    w: DisturbanceSequence) -> AncillarySolution:
    """Error-rejection problem over horizon H driven by the planned
    disturbances; errors live in beta_x*X, corrections in beta_u*U."""
    H = horizons.H
    prob, nx = _transcribe(model.A, model.B, model.Q, model.R, H,
                           e_bar, True, model.X, scalings.beta_x,
                           range(0, H), model.U, scalings.beta_u, w=w)
    sol = solve_qp(prob)
    if sol.status is Status.INFEASIBLE:
        raise AncillaryInfeasible(
            f"subsystem {model.id}: no admissible error-rejection plan")
    if sol.status is not Status.OPTIMAL:
        raise SolverError(f"subsystem {model.id}: ancillary solve failed to converge")
    e, f = _extract(sol, nx, H, model.n, model.m)
    e[H] = 0.0
    return AncillarySolution(e_seq=e, f_seq=f, cost=sol.objective)


def assemble_disturbance(model: SubsystemModel,
                         neighbor_preds: dict[int, Prediction],
                         N: int | None = None) -> DisturbanceSequence:
    """w(l) = sum_j A_ij x_j(l) + B_ij u_j(l) from the neighbours' plans.

    The neighbours' input sequences have length N; u_j(N) is taken as
    zero, consistent with their terminal state being the origin, so the
    assembled sequence always ends in an exact zero.
    """
    if not model.couplings:
        return DisturbanceSequence.zero(N if N is not None else 1, model.n)
    horizons = {len(neighbor_preds[j].u_seq) for j in model.couplings if j in neighbor_preds}
    missing = [j for j in model.couplings if j not in neighbor_preds]
    if missing:
        raise KeyError(f"subsystem {model.id}: missing neighbour predictions {missing}")
    if len(horizons) != 1:
        raise ValueError("neighbour predictions have inconsistent horizons")
    N = horizons.pop()
    w = np.zeros((N + 1, model.n))
    for j, (Aij, Bij) in model.couplings.items():
        pred = neighbor_preds[j]
        w += pred.x_seq @ Aij.T
        w[:N] += pred.u_seq @ Bij.T
    w[N] = 0.0
    return DisturbanceSequence(w)
