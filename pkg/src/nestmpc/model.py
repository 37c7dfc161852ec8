"""Subsystem models, horizons, and zero-order-hold discretization."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import expm

from .sets import Box


@dataclass
class SubsystemModel:
    """Discrete-time LTI subsystem with couplings to its neighbours.

    couplings maps a neighbour id j to the pair (A_ij, B_ij) through which
    j's state and input disturb this subsystem.
    """

    id: int
    A: np.ndarray
    B: np.ndarray
    couplings: dict[int, tuple[np.ndarray, np.ndarray]]
    X: Box
    U: Box
    Q: np.ndarray
    R: np.ndarray

    def __post_init__(self):
        self.A = np.atleast_2d(np.asarray(self.A, dtype=float))
        n = self.A.shape[0]
        self.B = np.asarray(self.B, dtype=float).reshape(n, -1)
        m = self.B.shape[1]
        self.Q = np.asarray(self.Q, dtype=float).reshape(n, n)
        self.R = np.asarray(self.R, dtype=float).reshape(m, m)
        if self.X.dim != n or self.U.dim != m:
            raise ValueError(f"subsystem {self.id}: constraint box dimensions do not match (A, B)")
        for M, name in ((self.Q, "Q"), (self.R, "R")):
            if not np.allclose(M, M.T, atol=1e-10):
                raise ValueError(f"subsystem {self.id}: {name} must be symmetric")
            if np.linalg.eigvalsh(M).min() <= 0:
                raise ValueError(f"subsystem {self.id}: {name} must be positive definite")
        ctrb = np.hstack([np.linalg.matrix_power(self.A, k) @ self.B for k in range(n)])
        if np.linalg.matrix_rank(ctrb) < n:
            raise ValueError(f"subsystem {self.id}: (A, B) is not controllable")
        cleaned = {}
        for j, (Aij, Bij) in self.couplings.items():
            Aij = np.asarray(Aij, dtype=float).reshape(n, -1)
            Bij = np.asarray(Bij, dtype=float).reshape(n, -1)
            if np.any(Aij) or np.any(Bij):
                cleaned[j] = (Aij, Bij)
        self.couplings = cleaned

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]

    @property
    def neighbors(self) -> list[int]:
        return sorted(self.couplings)

    def stage_cost(self, x, u) -> float:
        x = np.asarray(x, dtype=float).ravel()
        u = np.asarray(u, dtype=float).ravel()
        return float(0.5 * (x @ self.Q @ x + u @ self.R @ u))


@dataclass(frozen=True)
class Horizons:
    """Main horizon N and ancillary horizon H, with H >= N + 1 so the
    stored disturbance sequence (zero beyond step N) fits under H."""

    N: int
    H: int

    def __post_init__(self):
        if self.N < 1:
            raise ValueError("main horizon N must be >= 1")
        if self.H < self.N + 1:
            raise ValueError(f"ancillary horizon H must be >= N + 1 (got N={self.N}, H={self.H})")


def discretize_zoh(A_cont, B_cont, Ts: float) -> tuple[np.ndarray, np.ndarray]:
    """Exact ZOH discretization via the matrix exponential of [[A, B], [0, 0]]."""
    if Ts <= 0:
        raise ValueError("sampling period Ts must be positive")
    A = np.atleast_2d(np.asarray(A_cont, dtype=float))
    n = A.shape[0]
    B = np.asarray(B_cont, dtype=float).reshape(n, -1)
    m = B.shape[1]
    aug = np.zeros((n + m, n + m))
    aug[:n, :n] = A
    aug[:n, n:] = B
    M = expm(aug * Ts)
    return M[:n, :n].copy(), M[:n, n:].copy()


def stack_network(models: dict[int, SubsystemModel]) -> tuple[np.ndarray, np.ndarray, dict[int, slice], dict[int, slice]]:
    """Assemble the full coupled (A, B) from subsystem blocks.

    Returns (A, B, state_slices, input_slices) with subsystems ordered by id.
    """
    ids = sorted(models)
    n_tot = sum(models[i].n for i in ids)
    m_tot = sum(models[i].m for i in ids)
    xs, us = {}, {}
    ox = ou = 0
    for i in ids:
        xs[i] = slice(ox, ox + models[i].n)
        us[i] = slice(ou, ou + models[i].m)
        ox += models[i].n
        ou += models[i].m
    A = np.zeros((n_tot, n_tot))
    B = np.zeros((n_tot, m_tot))
    for i in ids:
        mi = models[i]
        A[xs[i], xs[i]] = mi.A
        B[xs[i], us[i]] = mi.B
        for j, (Aij, Bij) in mi.couplings.items():
            A[xs[i], xs[j]] = Aij
            B[xs[i], us[j]] = Bij
    return A, B, xs, us


def discretize_network(models: dict[int, SubsystemModel], Ts: float) -> dict[int, SubsystemModel]:
    """ZOH-discretize a network of continuous-time subsystems consistently.

    The full stacked system is discretized in one matrix exponential so
    that the coupled blocks stay exact, then repartitioned into new
    SubsystemModel blocks (couplings that discretize to zero are dropped).
    """
    A_c, B_c, xs, us = stack_network(models)
    A_d, B_d = discretize_zoh(A_c, B_c, Ts)
    out = {}
    for i in sorted(models):
        mi = models[i]
        couplings = {}
        for j in sorted(models):
            if j == i:
                continue
            Aij = A_d[xs[i], xs[j]]
            Bij = B_d[xs[i], us[j]]
            if np.any(Aij) or np.any(Bij):
                couplings[j] = (Aij, Bij)
        out[i] = SubsystemModel(id=i, A=A_d[xs[i], xs[i]], B=B_d[xs[i], us[i]],
                                couplings=couplings, X=mi.X, U=mi.U, Q=mi.Q, R=mi.R)
    return out
