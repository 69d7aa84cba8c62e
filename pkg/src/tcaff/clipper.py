"""Consistency-graph data association (CLIPPER-style densest consistent subset).

Nodes of the consistency graph are putative object-to-object associations;
two associations are consistent when they preserve the distance between
their endpoints. The solver looks for the indicator ``u`` maximizing
``u'Mu / u'u`` with ``u_p u_q = 0`` wherever ``M[p, q] == 0``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .object_map import ObjectMap


@dataclass(frozen=True)
class PutativeAssociation:
    idx_i: int
    idx_j: int


@dataclass(frozen=True)
class ClipperParams:
    epsilon: float = 0.4
    sigma: float = 0.15
    wh_tol: float = 0.3
    max_solver_iters: int = 1000
    solver_tol: float = 1e-8
    # problems up to this size are solved by exhaustive branch and bound
    exact_max: int = 20

    def __post_init__(self) -> None:
        for name in ("epsilon", "sigma", "wh_tol", "max_solver_iters", "solver_tol"):
            if not getattr(self, name) > 0:
                raise ValueError(f"ClipperParams.{name} must be positive")


@dataclass
class ClipperProblem:
    affinity: np.ndarray
    associations: list[PutativeAssociation] = field(default_factory=list)

    @property
    def size(self) -> int:
        return len(self.affinity)


@dataclass(frozen=True)
class ClipperSolution:
    inliers: tuple[int, ...]
    density: float


def putative_associations(
    map_i: ObjectMap, map_j: ObjectMap, params: ClipperParams = ClipperParams()
) -> list[PutativeAssociation]:
    """All object pairs whose widths and heights agree within ``wh_tol``."""
    if len(map_i) == 0 or len(map_j) == 0:
        return []
    si, sj = map_i.sizes(), map_j.sizes()
    diff = np.abs(si[:, None, :] - sj[None, :, :])
    ok = np.all(diff <= params.wh_tol, axis=2)
    ii, jj = np.nonzero(ok)  # row-major order is already lexicographic
    return [PutativeAssociation(int(a), int(b)) for a, b in zip(ii, jj)]


def consistency_distance(
    a_p: PutativeAssociation, a_q: PutativeAssociation, map_i: ObjectMap, map_j: ObjectMap
) -> float:
    """``| ||p_i - q_i|| - ||p_j - q_j|| |`` over 3D centroids."""
    ci, cj = map_i.objects, map_j.objects
    di = np.linalg.norm(np.subtract(ci[a_p.idx_i].centroid, ci[a_q.idx_i].centroid))
    dj = np.linalg.norm(np.subtract(cj[a_p.idx_j].centroid, cj[a_q.idx_j].centroid))
    return float(abs(di - dj))


def _pairwise_dist(p: np.ndarray) -> np.ndarray:
    diff = p[:, None, :] - p[None, :, :]
    return np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))


def build_problem(
    map_i: ObjectMap,
    map_j: ObjectMap,
    assocs: list[PutativeAssociation],
    params: ClipperParams = ClipperParams(),
) -> ClipperProblem:
    m = len(assocs)
    if m == 0:
        return ClipperProblem(np.zeros((0, 0)), [])
    ii = np.array([a.idx_i for a in assocs])
    jj = np.array([a.idx_j for a in assocs])
    pi = map_i.centroids()[ii]
    pj = map_j.centroids()[jj]
    di = _pairwise_dist(pi)
    dj = _pairwise_dist(pj)
    d = np.abs(di - dj)
    M = np.exp(-(d**2) / (2.0 * params.sigma**2))
    M[d >= params.epsilon] = 0.0
    # one-to-one: associations sharing an endpoint cannot both be inliers
    M[(ii[:, None] == ii[None, :]) | (jj[:, None] == jj[None, :])] = 0.0
    np.fill_diagonal(M, 1.0)
    M = 0.5 * (M + M.T)
    return ClipperProblem(M, list(assocs))


def subset_density(M: np.ndarray, subset) -> float:
    idx = np.asarray(list(subset), dtype=int)
    if idx.size == 0:
        return 0.0
    return float(M[np.ix_(idx, idx)].sum() / idx.size)


def solve(problem: ClipperProblem, params: ClipperParams = ClipperParams()) -> ClipperSolution:
    """Densest pairwise-consistent subset of associations.

    Nodes with a zero diagonal are treated as removed. Small problems are solved
    exactly; larger ones through the penalized continuous relaxation.
    """
    M = np.asarray(problem.affinity, dtype=float)
    if M.size == 0 or not np.any(np.diag(M) > 0):
        return ClipperSolution((), 0.0)
    if len(M) <= params.exact_max:
        return solve_exact(M)
    return solve_relaxed(M, params)


def solve_exact(M: np.ndarray) -> ClipperSolution:
    """Branch-and-bound enumeration of consistent subsets (cliques of ``M > 0``)."""
    M = np.asarray(M, dtype=float)
    alive = np.flatnonzero(np.diag(M) > 0)
    adj = M > 0
    best_set: tuple[int, ...] = ()
    best = 0.0

    def bound(num: float, size: int, cand: np.ndarray, w_to_s: np.ndarray) -> float:
        # each candidate's most optimistic contribution: its own diagonal, its
        # edges to the current set and all its edges inside the candidate pool
        sub = M[np.ix_(cand, cand)]
        gain = np.diag(sub) + 2.0 * w_to_s + (sub.sum(axis=1) - np.diag(sub))
        top = np.cumsum(np.sort(gain)[::-1])
        return float(np.max((num + top) / (size + np.arange(1, len(top) + 1))))

    def expand(current: list[int], num: float, cand: np.ndarray, w_to_s: np.ndarray) -> None:
        nonlocal best, best_set
        for k, v in enumerate(cand):
            new_num = num + M[v, v] + 2.0 * w_to_s[k]
            new_set = current + [int(v)]
            dens = new_num / len(new_set)
            if dens > best + 1e-12:
                best, best_set = dens, tuple(new_set)
            rest = cand[k + 1 :]
            keep = adj[v, rest]
            nxt = rest[keep]
            if nxt.size == 0:
                continue
            nxt_w = w_to_s[k + 1 :][keep] + M[v, nxt]
            if bound(new_num, len(new_set), nxt, nxt_w) <= best + 1e-12:
                continue
            expand(new_set, new_num, nxt, nxt_w)

    expand([], 0.0, alive, np.zeros(len(alive)))
    return ClipperSolution(tuple(sorted(best_set)), best)


CHECK_EVERY = 10


def solve_relaxed(M: np.ndarray, params: ClipperParams = ClipperParams()) -> ClipperSolution:
    """Projected gradient ascent on the penalized Rayleigh quotient.

    The penalty ``d`` on inconsistent pairs is increased until the support of
    ``u`` is a consistent set, then ``u`` is rounded greedily.
    """
    M = np.asarray(M, dtype=float)
    alive = np.diag(M) > 0
    C = M > 0
    D = (~C).astype(float)
    np.fill_diagonal(D, 0.0)
    D[~alive, :] = 0.0
    D[:, ~alive] = 0.0

    u = alive.astype(float)
    u /= np.linalg.norm(u)
    d = 0.0
    support_tol = 1e-8

    def consistent(v: np.ndarray) -> bool:
        s = v > support_tol * v.max()
        return not np.any(D[np.ix_(s, s)])

    for _ in range(60):
        Md = M - d * D
        # with a penalty active, stop as soon as the support is consistent
        u = _ascend(Md, u, alive, params, consistent if d > 0 else None)
        if consistent(u):
            break
        # grow the penalty geometrically from the current violation scale
        d = max(2.0 * d, 0.05)

    order = np.argsort(-u, kind="stable")
    order = order[(u[order] > 0) & alive[order]]
    kept: list[int] = []
    for p in order:
        if all(C[p, q] for q in kept):
            kept.append(int(p))
    if not kept:
        p = int(np.flatnonzero(alive)[0])
        kept = [p]
    # keep the densest prefix of the greedy sequence
    best_k, best_d = 1, -np.inf
    for k in range(1, len(kept) + 1):
        dens = subset_density(M, kept[:k])
        if dens > best_d + 1e-12:
            best_k, best_d = k, dens
    inliers = tuple(sorted(kept[:best_k]))
    return ClipperSolution(inliers, subset_density(M, inliers))


def _ascend(Md: np.ndarray, u: np.ndarray, alive: np.ndarray, params: ClipperParams, done=None) -> np.ndarray:
    """Projected gradient ascent of ``u' Md u`` on the unit sphere intersected with u >= 0.

    Iterates on an active set: coordinates that are zero with a non-positive
    gradient cannot move, so only the others are updated. The full gradient is
    refreshed every ``CHECK_EVERY`` iterations to let coordinates re-enter.
    """
    u = u.copy()
    u[~alive] = 0.0
    iters = params.max_solver_iters if done is None else max(1, params.max_solver_iters // 5)
    it = 0
    alpha = 1.0
    while it < iters:
        g_full = Md @ u
        A = np.flatnonzero(alive & ((u > 0) | (g_full > 0)))
        if A.size == 0:
            return u
        MA = Md[np.ix_(A, A)]
        x = u[A]
        Mx = MA @ x
        f = x @ Mx
        converged = False
        for _ in range(CHECK_EVERY):
            if it >= iters:
                break
            it += 1
            grad = 2.0 * Mx
            while True:
                v = np.maximum(x + alpha * grad, 0.0)
                nv = math.sqrt(v @ v)
                if nv > 0:
                    v /= nv
                    Mv = MA @ v
                    fv = v @ Mv
                    if fv >= f:
                        break
                alpha *= 0.5
                if alpha < 1e-12:
                    u[:] = 0.0
                    u[A] = x
                    return u
            dv = v - x
            step = math.sqrt(dv @ dv)
            x, f, Mx = v, fv, Mv
            alpha = min(alpha * 2.0, 1e6)
            if step < params.solver_tol:
                converged = True
                break
        u[:] = 0.0
        u[A] = x
        if converged:
            outside = np.setdiff1d(np.flatnonzero(alive), A)
            if outside.size == 0 or not np.any(Md[outside][:, A] @ x > 0):
                return u
        if done is not None and done(u):
            return u
    return u
