"""Brute-force reference solvers for small QPs and LPs.

Independent of the interior-point kernel: QPs are solved by enumerating
every active set of inequality constraints and solving the resulting
equality-constrained KKT system; LPs additionally cover vertices formed
by any n active constraints. Only practical for a handful of variables.
"""

import itertools

import numpy as np

_FEAS_TOL = 1e-8


def qp_active_set_oracle(P, q, Aeq=None, beq=None, Gin=None, hin=None):
    """Globally optimal value/point of a strictly convex QP by active-set
    enumeration. Returns (z, objective) or (None, None) when infeasible."""
    q = np.asarray(q, dtype=float).ravel()
    n = q.size
    P = np.asarray(P, dtype=float).reshape(n, n)
    A = np.zeros((0, n)) if Aeq is None else np.asarray(Aeq, dtype=float).reshape(-1, n)
    b = np.zeros(0) if beq is None else np.asarray(beq, dtype=float).ravel()
    G = np.zeros((0, n)) if Gin is None else np.asarray(Gin, dtype=float).reshape(-1, n)
    h = np.zeros(0) if hin is None else np.asarray(hin, dtype=float).ravel()
    mI = G.shape[0]

    best_z, best_obj = None, np.inf
    for r in range(mI + 1):
        for active in itertools.combinations(range(mI), r):
            E = np.vstack([A, G[list(active)]])
            f = np.concatenate([b, h[list(active)]])
            k = E.shape[0]
            K = np.block([[P, E.T], [E, np.zeros((k, k))]])
            rhs = np.concatenate([-q, f])
            try:
                sol = np.linalg.lstsq(K, rhs, rcond=None)[0]
            except np.linalg.LinAlgError:
                continue
            z = sol[:n]
            if np.abs(K @ sol - rhs).max(initial=0.0) > 1e-7:
                continue
            if mI and (G @ z - h).max(initial=0.0) > _FEAS_TOL:
                continue
            if A.shape[0] and np.abs(A @ z - b).max(initial=0.0) > _FEAS_TOL:
                continue
            obj = float(0.5 * z @ P @ z + q @ z)
            if obj < best_obj - 1e-12:
                best_obj = obj
                best_z = z.copy()
    if best_z is None:
        return None, None
    return best_z, best_obj


def lp_vertex_oracle(c, Aeq=None, beq=None, Gin=None, hin=None):
    """Optimal LP value by vertex enumeration over all n-subsets of the
    constraints (equalities always included). Returns (z, objective) or
    (None, None) when no feasible vertex exists. Assumes the feasible set
    is bounded so an optimal vertex exists."""
    c = np.asarray(c, dtype=float).ravel()
    n = c.size
    A = np.zeros((0, n)) if Aeq is None else np.asarray(Aeq, dtype=float).reshape(-1, n)
    b = np.zeros(0) if beq is None else np.asarray(beq, dtype=float).ravel()
    G = np.zeros((0, n)) if Gin is None else np.asarray(Gin, dtype=float).reshape(-1, n)
    h = np.zeros(0) if hin is None else np.asarray(hin, dtype=float).ravel()
    mE, mI = A.shape[0], G.shape[0]

    best_z, best_obj = None, np.inf
    need = max(n - mE, 0)
    for active in itertools.combinations(range(mI), need):
        E = np.vstack([A, G[list(active)]])
        f = np.concatenate([b, h[list(active)]])
        if np.linalg.matrix_rank(E) < n:
            continue
        z = np.linalg.lstsq(E, f, rcond=None)[0]
        if mI and (G @ z - h).max(initial=0.0) > _FEAS_TOL:
            continue
        if mE and np.abs(A @ z - b).max(initial=0.0) > _FEAS_TOL:
            continue
        obj = float(c @ z)
        if obj < best_obj - 1e-12:
            best_obj = obj
            best_z = z.copy()
    if best_z is None:
        return None, None
    return best_z, best_obj
