"""Generator-based compact convex set algebra.

Sets are represented by their generating points (V-type): a box expands to
its vertices and a Minkowski sum stores the combination sums of its
summands' generators. All queries needed downstream (supports, point
membership, containment in scaled boxes) reduce to maxima or small LPs
over generators, so no half-space enumeration is ever performed.
Generator lists are not hull-reduced; redundancy is harmless at the
problem sizes handled here.
"""

from __future__ import annotations

import itertools

import numpy as np

from .solver import check_feasible


class Box:
    """Axis-aligned box [lo, hi] with 0 strictly inside (PC-set)."""

    def __init__(self, lo, hi):
        self.lo = np.asarray(lo, dtype=float).ravel()
        self.hi = np.asarray(hi, dtype=float).ravel()
        if self.lo.shape != self.hi.shape:
            raise ValueError("lo and hi must have the same length")
        if not (np.isfinite(self.lo).all() and np.isfinite(self.hi).all()):
            raise ValueError("box bounds must be finite")
        if not ((self.lo < 0).all() and (self.hi > 0).all()):
            raise ValueError("box must contain the origin in its interior (lo < 0 < hi)")

    @classmethod
    def symmetric(cls, half_widths) -> "Box":
        h = np.asarray(half_widths, dtype=float).ravel()
        return cls(-h, h)

    @property
    def dim(self) -> int:
        return self.lo.size

    def scale(self, a: float) -> "Box":
        _check_scale(a)
        return Box.__new__(Box)._init_scaled(self, a)

    def _init_scaled(self, other: "Box", a: float) -> "Box":
        # bypass the PC-set check: a = 0 yields the degenerate box {0}
        self.lo = a * other.lo
        self.hi = a * other.hi
        return self

    def vertices(self) -> np.ndarray:
        cols = [(lo, hi) for lo, hi in zip(self.lo, self.hi)]
        return np.array(list(itertools.product(*cols)), dtype=float)

    def facets(self) -> list[tuple[np.ndarray, float]]:
        """Outer normals and offsets: pairs (c, d) with the box = {x: c.x <= d}."""
        out = []
        n = self.dim
        for j in range(n):
            e = np.zeros(n)
            e[j] = 1.0
            out.append((e.copy(), float(self.hi[j])))
            out.append((-e, float(-self.lo[j])))
        return out

    def contains(self, p, tol: float = 1e-9) -> bool:
        p = np.asarray(p, dtype=float).ravel()
        return bool((p >= self.lo - tol).all() and (p <= self.hi + tol).all())

    def to_set(self) -> "ConvexSet":
        return ConvexSet(self.vertices())

    def __repr__(self):
        return f"Box(lo={self.lo.tolist()}, hi={self.hi.tolist()})"


class ConvexSet:
    """Convex hull of a finite generator list; immutable after construction.

    ``summands`` records the Minkowski-sum structure when the set was
    built as a sum; it is an optimization hint for decomposition LPs and
    never affects the hull.
    """

    def __init__(self, generators, summands: tuple | None = None):
        g = np.atleast_2d(np.asarray(generators, dtype=float))
        if g.size == 0 or g.ndim != 2:
            raise ValueError("nonempty 2-D generator array required")
        self.generators = g
        self.generators.setflags(write=False)
        self.summands = summands
        self.dim = g.shape[1]

    @classmethod
    def origin(cls, dim: int) -> "ConvexSet":
        return cls(np.zeros((1, dim)))

    @property
    def summand_generators(self) -> list[np.ndarray]:
        """Generator arrays of the summands (the set itself if atomic)."""
        if self.summands is None:
            return [self.generators]
        return [s.generators for s in self.summands]

    def is_zero(self, tol: float = 0.0) -> bool:
        return bool((np.abs(self.generators) <= tol).all())

    def __repr__(self):
        return f"ConvexSet(dim={self.dim}, n_generators={len(self.generators)})"


def _check_scale(a: float):
    if not (0.0 <= a <= 1.0):
        raise ValueError(f"scale factor must lie in [0, 1], got {a}")


def scale(S, a: float):
    """aS = {a s : s in S} for a in [0, 1]; preserves the input kind."""
    _check_scale(a)
    if isinstance(S, Box):
        return S.scale(a)
    summands = None
    if S.summands is not None:
        summands = tuple(scale(t, a) for t in S.summands)
    return ConvexSet(a * S.generators, summands)


def linear_image(T, S) -> ConvexSet:
    """TS = {Ts : s in S}; S may be a Box or a ConvexSet."""
    T = np.atleast_2d(np.asarray(T, dtype=float))
    if isinstance(S, Box):
        S = S.to_set()
    if T.shape[1] != S.dim:
        raise ValueError(f"dimension mismatch: T has {T.shape[1]} columns, set has dim {S.dim}")
    return ConvexSet(_dedupe(S.generators @ T.T))


def minkowski_sum(S1, S2) -> ConvexSet:
    """S1 + S2 with the generator list formed from all pairwise sums."""
    S1 = S1.to_set() if isinstance(S1, Box) else S1
    S2 = S2.to_set() if isinstance(S2, Box) else S2
    if S1.dim != S2.dim:
        raise ValueError(f"dimension mismatch: {S1.dim} vs {S2.dim}")
    sums = (S1.generators[:, None, :] + S2.generators[None, :, :]).reshape(-1, S1.dim)
    left = S1.summands if S1.summands is not None else (S1,)
    right = S2.summands if S2.summands is not None else (S2,)
    return ConvexSet(_dedupe(sums), summands=left + right)


def _dedupe(g: np.ndarray) -> np.ndarray:
    # exact duplicates only (bitwise); np.unique row order is deterministic
    return np.unique(g, axis=0)


def support(S, d) -> float:
    """h_S(d) = max over generators of <d, g>."""
    S = S.to_set() if isinstance(S, Box) else S
    d = np.asarray(d, dtype=float).ravel()
    if d.size != S.dim:
        raise ValueError("direction dimension mismatch")
    return float((S.generators @ d).max())


def contains_point(S, p, tol: float = 1e-9) -> bool:
    """LP membership test: p in conv(generators ∪ {0}) within tol.

    Solved as existence of lambda >= 0, sum lambda <= 1 with
    sum lambda_i g_i = p (each coordinate matched to within tol).
    """
    S = S.to_set() if isinstance(S, Box) else S
    p = np.asarray(p, dtype=float).ravel()
    if p.size != S.dim:
        raise ValueError("point dimension mismatch")
    G = S.generators
    k = G.shape[0]
    # |G' lam - p| <= tol elementwise, lam >= 0, sum lam <= 1
    Gin = np.vstack([
        G.T,
        -G.T,
        -np.eye(k),
        np.ones((1, k)),
    ])
    hin = np.concatenate([p + tol, -(p - tol), np.zeros(k), [1.0]])
    return check_feasible(None, None, Gin, hin).feasible


def coupling_disturbance_set(couplings: dict, X: dict, U: dict,
                             state_scalings: dict, input_scalings: dict,
                             dim: int) -> ConvexSet:
    """Disturbance set induced on one subsystem by its neighbours.

    Returns  ⊕_j ( s_x[j]·A_ij X[j]  ⊕  s_u[j]·B_ij U[j] )  over the
    neighbour couplings {j: (A_ij, B_ij)}. Unit scalings give the full
    interaction set; scalings (alpha_j) give the planned part and
    (1 - alpha_j) the unplanned part.
    """
    result = ConvexSet.origin(dim)
    started = False
    for j in sorted(couplings):
        Aij, Bij = couplings[j]
        if j not in X or j not in U:
            raise KeyError(f"unknown neighbour id {j}")
        sx = state_scalings[j]
        su = input_scalings[j]
        _check_scale(sx)
        _check_scale(su)
        term_x = linear_image(np.asarray(Aij, dtype=float), X[j].scale(sx))
        term_u = linear_image(np.asarray(Bij, dtype=float), U[j].scale(su))
        piece = minkowski_sum(term_x, term_u)
        result = piece if not started else minkowski_sum(result, piece)
        started = True
    return result
