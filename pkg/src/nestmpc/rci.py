"""Off-line invariance design and the on-line selection-map feedback.

The design LP optimizes, over stage feedback matrices M_0..M_{h-1} with
D_h(M) = 0, the fractions (eta, theta) of the state and input boxes
consumed by the implicit invariant set R_h(M) = sum_l D_l(M) W and its
control image sum_l M_l W. The set itself is never constructed: all
containments are certified facet-by-facet through supports over the
disturbance generators, and the on-line feedback decomposes the unplanned
error over the stages by a small LP.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .sets import Box, ConvexSet, coupling_disturbance_set, support
from .solver import Status, solve_lp

SLACK_EVENT_TOL = 1e-7


class RciInfeasible(RuntimeError):
    """No invariance design exists at this parameterization horizon."""


class DesignError(RuntimeError):
    """The nested scaling budget cannot be met."""


@dataclass(frozen=True)
class RciWeights:
    """Relative preference between contracting the state box (q_eta) and
    the input box (q_theta) in the design objective."""

    q_eta: float = 1.0
    q_theta: float = 1.0

    def __post_init__(self):
        if self.q_eta < 0 or self.q_theta < 0:
            raise ValueError("weights must be nonnegative")
        if self.q_eta == 0 and self.q_theta == 0:
            raise ValueError("at least one weight must be positive")


@dataclass
class RciDesign:
    """Result of the invariance LP: stage matrices plus scalings.

    D is the derived list D_0..D_h with D_0 = I and ||D_h|| ~ 0; eta and
    theta bound the invariant set and its control image inside eta*X and
    theta*U respectively.
    """

    h: int
    M: list[np.ndarray]
    eta: float
    theta: float
    delta: float
    D: list[np.ndarray]
    W: ConvexSet
    A: np.ndarray
    B: np.ndarray

    @property
    def W_generators(self) -> np.ndarray:
        return self.W.generators

    def dh_norm(self) -> float:
        return float(np.abs(self.D[self.h]).max())

    def with_disturbance(self, W_new: ConvexSet, eta: float, theta: float,
                         weights: RciWeights = RciWeights()) -> "RciDesign":
        """Same stage matrices, rescaled for a summand disturbance set."""
        delta = weights.q_eta * eta + weights.q_theta * theta
        return RciDesign(self.h, self.M, eta, theta, delta, self.D, W_new,
                         self.A, self.B)


@dataclass
class ScalingConstants:
    """Fractions of the constraint boxes allotted to the main MPC (alpha),
    the ancillary MPC (beta) and the invariance feedback (xi)."""

    alpha_x: float
    alpha_u: float
    beta_x: float
    beta_u: float
    xi_x: float
    xi_u: float

    def __post_init__(self):
        for name in ("alpha_x", "alpha_u", "beta_x", "beta_u", "xi_x", "xi_u"):
            v = getattr(self, name)
            if not (-1e-12 <= v <= 1.0 + 1e-12):
                raise ValueError(f"{name} = {v} outside [0, 1]")
            setattr(self, name, float(min(max(v, 0.0), 1.0)))
        if self.alpha_x + self.beta_x + self.xi_x > 1.0 + 1e-9:
            raise ValueError("state scalings exceed the unit budget")
        if self.alpha_u + self.beta_u + self.xi_u > 1.0 + 1e-9:
            raise ValueError("input scalings exceed the unit budget")


@dataclass
class SubsystemDesign:
    """Per-subsystem output of the two-pass design."""

    scalings: ScalingConstants
    full: RciDesign     # designed against the whole interaction set W
    hat: RciDesign      # same M, rescaled for the unplanned summand W_hat


def _stage_matrices(A: np.ndarray, B: np.ndarray, M: list[np.ndarray]) -> list[np.ndarray]:
    """D_0 = I; D_l = A^l + sum_{j<l} A^(l-1-j) B M_j."""
    h = len(M)
    n = A.shape[0]
    D = [np.eye(n)]
    for l in range(1, h + 1):
        # recursion D_l = A D_{l-1} + B M_{l-1}
        D.append(A @ D[l - 1] + B @ M[l - 1])
    return D


def solve_rci(A, B, W: ConvexSet, X: Box, U: Box, h: int,
              weights: RciWeights = RciWeights()) -> RciDesign:
    """Solve the invariance design LP for disturbance set W.

    Minimizes q_eta*eta + q_theta*theta (through the epigraph variable
    delta) over stage matrices with D_h(M) = 0, subject to the invariant
    set fitting in eta*X and its control image in theta*U. Feasibility of
    this LP certifies that R_h(M) is robust control invariant for
    (X, U, W).
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    n = A.shape[0]
    B = np.asarray(B, dtype=float).reshape(n, -1)
    m = B.shape[1]
    if h < n:
        raise ValueError(f"parameterization horizon h = {h} must be >= state dimension {n}")
    G = W.generators
    nG = G.shape[0]
    xf = X.facets()
    uf = U.facets()
    Kx, Ku = len(xf), len(uf)

    nM = h * m * n
    i_eta, i_theta, i_delta = nM, nM + 1, nM + 2
    i_t = nM + 3
    i_s = i_t + h * Kx
    nv = i_s + h * Ku

    Apow = [np.eye(n)]
    for _ in range(h):
        Apow.append(A @ Apow[-1])

    rows_G, rows_h = [], []

    def m_block(j):
        return slice(j * m * n, (j + 1) * m * n)

    # (a) state-facet epigraphs: c' D_l(M) g <= t_{l,k}
    for l in range(h):
        for k, (c, d) in enumerate(xf):
            const = G @ (Apow[l].T @ c)          # c' A^l g per generator
            block = np.zeros((nG, nv))
            for j in range(l):
                v = B.T @ (Apow[l - 1 - j].T @ c)     # c' A^(l-1-j) B
                block[:, m_block(j)] = (v[None, :, None] * G[:, None, :]).reshape(nG, m * n)
            block[:, i_t + l * Kx + k] = -1.0
            rows_G.append(block)
            rows_h.append(-const)

    # (b) sum_l t_{l,k} <= eta d_k
    for k, (c, d) in enumerate(xf):
        row = np.zeros(nv)
        for l in range(h):
            row[i_t + l * Kx + k] = 1.0
        row[i_eta] = -d
        rows_G.append(row[None, :])
        rows_h.append(np.array([0.0]))

    # (c) input-facet epigraphs: c' M_l g <= s_{l,k}
    for l in range(h):
        for k, (c, d) in enumerate(uf):
            block = np.zeros((nG, nv))
            block[:, m_block(l)] = (c[None, :, None] * G[:, None, :]).reshape(nG, m * n)
            block[:, i_s + l * Ku + k] = -1.0
            rows_G.append(block)
            rows_h.append(np.zeros(nG))

    # (d) sum_l s_{l,k} <= theta d_k
    for k, (c, d) in enumerate(uf):
        row = np.zeros(nv)
        for l in range(h):
            row[i_s + l * Ku + k] = 1.0
        row[i_theta] = -d
        rows_G.append(row[None, :])
        rows_h.append(np.array([0.0]))

    # (e) box bounds and the objective epigraph
    bounds = np.zeros((5, nv))
    bh = np.zeros(5)
    bounds[0, i_eta] = 1.0
    bh[0] = 1.0
    bounds[1, i_eta] = -1.0
    bounds[2, i_theta] = 1.0
    bh[2] = 1.0
    bounds[3, i_theta] = -1.0
    bounds[4, i_eta] = weights.q_eta
    bounds[4, i_theta] = weights.q_theta
    bounds[4, i_delta] = -1.0
    rows_G.append(bounds)
    rows_h.append(bh)

    Gin = np.vstack(rows_G)
    hin = np.concatenate(rows_h)

    # equality: D_h(M) = 0, entrywise
    Aeq = np.zeros((n * n, nv))
    beq = np.zeros(n * n)
    for r in range(n):
        for cidx in range(n):
            rowi = r * n + cidx
            beq[rowi] = -Apow[h][r, cidx]
            for j in range(h):
                E = Apow[h - 1 - j] @ B      # n x m
                for p in range(m):
                    Aeq[rowi, j * m * n + p * n + cidx] = E[r, p]

    c_obj = np.zeros(nv)
    c_obj[i_delta] = 1.0
    sol = solve_lp(c_obj, Aeq, beq, Gin, hin)
    if sol.status is Status.INFEASIBLE:
        raise RciInfeasible(
            f"no invariance design exists at h = {h}; increase h or weaken the coupling")
    if sol.status is not Status.OPTIMAL:
        raise RuntimeError("invariance design LP did not converge")

    M = [sol.z[m_block(j)].reshape(m, n).copy() for j in range(h)]
    D = _stage_matrices(A, B, M)
    eta = float(min(max(sol.z[i_eta], 0.0), 1.0))
    theta = float(min(max(sol.z[i_theta], 0.0), 1.0))
    return RciDesign(h=h, M=M, eta=eta, theta=theta, delta=float(sol.z[i_delta]),
                     D=D, W=W, A=A, B=B)


def _stage_supports(D_or_M: list[np.ndarray], gens: np.ndarray, c: np.ndarray) -> float:
    """sum over stages of max over generators of c' T_l g."""
    return float(sum((gens @ (T.T @ c)).max() for T in D_or_M))


def set_support_margins(design: RciDesign, X: Box, U: Box) -> tuple[float, float]:
    """Worst facet excess of R_h over eta*X and of its control image over
    theta*U (negative margins mean strictly inside)."""
    gens = design.W.generators
    x_excess = max(_stage_supports(design.D[:design.h], gens, c) - design.eta * d
                   for c, d in X.facets())
    u_excess = max(_stage_supports(design.M, gens, c) - design.theta * d
                   for c, d in U.facets())
    return x_excess, u_excess


def rescale_for_summand(design: RciDesign, W_hat: ConvexSet, X: Box, U: Box,
                        n_directions: int = 64, seed: int = 0) -> tuple[float, float]:
    """Scalings (eta~, theta~) for a summand disturbance set, M fixed.

    With the stage matrices frozen, the invariant set built from W_hat is
    again RCI, and its box fractions are plain support evaluations.
    """
    rng = np.random.default_rng(seed)
    for _ in range(n_directions):
        d = rng.standard_normal(design.W.dim)
        if support(W_hat, d) > support(design.W, d) + 1e-8:
            raise ValueError("W_hat is not a summand of the design disturbance set")
    gens = W_hat.generators
    eta_t = max(_stage_supports(design.D[:design.h], gens, c) / d for c, d in X.facets())
    theta_t = max(_stage_supports(design.M, gens, c) / d for c, d in U.facets())
    eta_t = max(eta_t, 0.0)
    theta_t = max(theta_t, 0.0)
    if eta_t > 1.0 + 1e-9 or theta_t > 1.0 + 1e-9:
        raise DesignError("summand rescaling exceeds the unit box")
    return float(eta_t), float(theta_t)


def design_scalings(models: dict, h: int,
                    weights: RciWeights = RciWeights()) -> dict[int, SubsystemDesign]:
    """Two-pass scaling design for a network of subsystems.

    Pass A solves the invariance LP per subsystem against its full
    interaction set and sets alpha = 1 - (eta, theta). Pass B builds each
    unplanned set from the neighbours' alphas, rescales the frozen design
    for it to obtain xi, and assigns beta as the exact remainder so the
    per-axis budgets close at 1.
    """
    ids = sorted(models)
    X = {i: models[i].X for i in ids}
    U = {i: models[i].U for i in ids}

    full = {}
    for i in ids:
        mi = models[i]
        W = coupling_disturbance_set(mi.couplings, X, U,
                                     {j: 1.0 for j in mi.couplings},
                                     {j: 1.0 for j in mi.couplings}, mi.n)
        for c, d in mi.X.facets():
            if support(W, c) >= d:
                raise DesignError(
                    f"subsystem {i}: interaction set not inside the state box interior")
        full[i] = solve_rci(mi.A, mi.B, W, mi.X, mi.U, h, weights)

    alpha_x = {i: 1.0 - full[i].eta for i in ids}
    alpha_u = {i: 1.0 - full[i].theta for i in ids}

    out = {}
    for i in ids:
        mi = models[i]
        W_hat = coupling_disturbance_set(
            mi.couplings, X, U,
            {j: 1.0 - alpha_x[j] for j in mi.couplings},
            {j: 1.0 - alpha_u[j] for j in mi.couplings}, mi.n)
        eta_t, theta_t = rescale_for_summand(full[i], W_hat, mi.X, mi.U)
        beta_x = 1.0 - alpha_x[i] - eta_t
        beta_u = 1.0 - alpha_u[i] - theta_t
        if beta_x < -1e-12 or beta_u < -1e-12:
            raise DesignError(
                f"subsystem {i}: coupling too strong for the nested design "
                f"(beta_x = {beta_x:.3e}, beta_u = {beta_u:.3e})")
        sc = ScalingConstants(alpha_x=alpha_x[i], alpha_u=alpha_u[i],
                              beta_x=max(beta_x, 0.0), beta_u=max(beta_u, 0.0),
                              xi_x=eta_t, xi_u=theta_t)
        out[i] = SubsystemDesign(scalings=sc, full=full[i],
                                 hat=full[i].with_disturbance(W_hat, eta_t, theta_t, weights))
    return out


@dataclass
class SelectionResult:
    f_hat: np.ndarray
    stage_points: np.ndarray       # h x n, the decomposition w_l of e_hat
    stage_weight_sums: np.ndarray  # h, per-stage total mixture weight
    slack: float                   # l1 mismatch left by the decomposition
    relaxed: bool                  # True when e_hat was outside the set


def selection_control(design: RciDesign, e_hat,
                      stage_weights: np.ndarray | None = None) -> SelectionResult:
    """Invariance-inducing feedback from the stage decomposition of e_hat.

    Finds per-stage mixtures of the disturbance generators whose stage
    images sum to e_hat with minimal total weight, and returns the matched
    mixture of M_l images. Points outside the invariant set never abort:
    the decomposition is l1-relaxed and flagged instead.

    The LP works per Minkowski summand of W, which is equivalent to
    mixing the full product generator list (every summand contains the
    origin) and keeps the variable count linear in the summand sizes.
    """
    e_hat = np.asarray(e_hat, dtype=float).ravel()
    h, n = design.h, design.A.shape[0]
    if e_hat.size != n:
        raise ValueError("e_hat dimension mismatch")
    groups = design.W.summand_generators
    if stage_weights is None:
        stage_weights = np.ones(h)

    sizes = [g.shape[0] for g in groups]
    n_lam = h * sum(sizes)

    cols = []
    cost = []
    for l in range(h):
        Dl = design.D[l]
        for g, k in zip(groups, sizes):
            cols.append(Dl @ g.T)                  # n x k
            cost.append(np.full(k, stage_weights[l]))
    A_lam = np.hstack(cols)
    c_lam = np.concatenate(cost)

    n_groups = h * len(groups)
    G_lam = np.zeros((n_groups + n_lam, n_lam))
    h_lam = np.zeros(n_groups + n_lam)
    off = 0
    for gi in range(n_groups):
        k = sizes[gi % len(sizes)]
        G_lam[gi, off:off + k] = 1.0
        h_lam[gi] = 1.0
        off += k
    G_lam[n_groups:, :] = -np.eye(n_lam)

    sol = solve_lp(c_lam, A_lam, e_hat, G_lam, h_lam, inner_tol=1e-8)
    if sol.status is Status.OPTIMAL:
        lam = np.maximum(sol.z[:n_lam], 0.0)
        slack = 0.0
    else:
        # point outside the invariant set (or a borderline solve): l1-relax
        # the matching constraint instead of aborting the closed loop.
        # Two well-scaled stages: minimize the slack, then the weight.
        nv = n_lam + 2 * n
        Aeq = np.hstack([A_lam, np.eye(n), -np.eye(n)])
        Gin = np.zeros((n_groups + nv, nv))
        Gin[:n_groups, :n_lam] = G_lam[:n_groups]
        Gin[n_groups:, :] = -np.eye(nv)
        hin = np.concatenate([h_lam[:n_groups], np.zeros(nv)])
        c1 = np.concatenate([np.zeros(n_lam), np.ones(2 * n)])
        sol1 = solve_lp(c1, Aeq, e_hat, Gin, hin)
        if sol1.status is not Status.OPTIMAL:
            raise RuntimeError("selection decomposition LP did not converge")
        best_slack = float(c1 @ sol1.z)
        c2 = np.concatenate([c_lam, np.zeros(2 * n)])
        Gin2 = np.vstack([Gin, c1[None, :]])
        hin2 = np.concatenate([hin, [best_slack + 1e-9]])
        sol = solve_lp(c2, Aeq, e_hat, Gin2, hin2)
        if sol.status is not Status.OPTIMAL:
            sol = sol1
        lam = np.maximum(sol.z[:n_lam], 0.0)
        slack = float(np.abs(sol.z[n_lam:]).sum())
    f = np.zeros(design.B.shape[1])
    stage_points = np.zeros((h, n))
    weight_sums = np.zeros(h)
    off = 0
    for l in range(h):
        w_l = np.zeros(n)
        for g, k in zip(groups, sizes):
            w_l += g.T @ lam[off:off + k]
            weight_sums[l] = max(weight_sums[l], float(lam[off:off + k].sum()))
            off += k
        stage_points[l] = w_l
        f += design.M[l] @ w_l
    return SelectionResult(f_hat=f, stage_points=stage_points,
                           stage_weight_sums=weight_sums, slack=slack,
                           relaxed=slack > SLACK_EVENT_TOL)


@dataclass
class RciReport:
    n_samples: int
    dh_norm: float
    containment_excess: float   # R_h vs eta*X, exact over facets
    image_excess: float         # sum_l M_l W vs theta*U, exact over facets
    sample_control_excess: float  # sampled mu-images vs theta*U
    invariance_residual: float  # worst one-step certificate residual
    weight_excess: float        # worst per-stage mixture weight over 1
    max_slack: float            # worst decomposition slack on samples

    def max_violation(self) -> float:
        return max(self.dh_norm, self.containment_excess, self.image_excess,
                   self.sample_control_excess, self.invariance_residual,
                   self.weight_excess, self.max_slack)

    def ok(self, tol: float = 1e-6) -> bool:
        return self.max_violation() <= tol


def verify_rci(design: RciDesign, X: Box, U: Box, n_samples: int = 1000,
               seed: int = 0, lp_samples: int = 200) -> RciReport:
    """Empirical invariance certificate on random points of the set.

    Samples random stage mixtures and checks the control bound and
    one-step invariance of the selection feedback on every sample. The
    one-step check is constructive: the successor under any disturbance
    generator g is reproduced by the shifted decomposition (g at stage 0),
    so a single residual per sample covers every generator simultaneously.

    Each sample carries its generating decomposition, which defines the
    selection feedback directly; the first ``lp_samples`` samples are
    additionally pushed through the on-line decomposition LP to certify
    that the runtime path reproduces a valid decomposition as well.
    """
    rng = np.random.default_rng(seed)
    h, n = design.h, design.A.shape[0]
    groups = design.W.summand_generators
    x_ex, u_ex = set_support_margins(design, X, U)

    ctrl_ex = 0.0
    inv_res = 0.0
    w_ex = 0.0
    max_slack = 0.0
    uf = [(c, d * design.theta) for c, d in U.facets()]

    def check(e, f_hat, stage_points, weight_sums):
        nonlocal ctrl_ex, inv_res, w_ex
        w_ex = max(w_ex, float(weight_sums.max(initial=0.0)) - 1.0)
        for c, bound in uf:
            ctrl_ex = max(ctrl_ex, float(c @ f_hat) - bound)
        # shifted-decomposition residual; independent of the generator
        recon = sum(design.D[l] @ stage_points[l - 1] for l in range(1, h))
        succ = design.A @ e + design.B @ f_hat
        inv_res = max(inv_res, float(np.abs(succ - recon).max()))

    for trial in range(n_samples):
        e = np.zeros(n)
        stage_points = np.zeros((h, n))
        weight_sums = np.zeros(h)
        f_known = np.zeros(design.B.shape[1])
        for l in range(h):
            w_l = np.zeros(n)
            for g in groups:
                lam = rng.random(g.shape[0])
                lam *= rng.random() / lam.sum()
                w_l += g.T @ lam
                weight_sums[l] = max(weight_sums[l], float(lam.sum()))
            stage_points[l] = w_l
            e += design.D[l] @ w_l
            f_known += design.M[l] @ w_l
        check(e, f_known, stage_points, weight_sums)
        if trial < lp_samples:
            sel = selection_control(design, e)
            max_slack = max(max_slack, sel.slack)
            check(e, sel.f_hat, sel.stage_points, sel.stage_weight_sums)

    return RciReport(n_samples=n_samples, dh_norm=design.dh_norm(),
                     containment_excess=max(x_ex, 0.0), image_excess=max(u_ex, 0.0),
                     sample_control_excess=max(ctrl_ex, 0.0),
                     invariance_residual=inv_res, weight_excess=max(w_ex, 0.0),
                     max_slack=max_slack)
