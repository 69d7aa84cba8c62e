"""Weighted planar registration and the multiple-near-optima association loop."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import clipper
from .clipper import ClipperParams
from .geometry import Pose2
from .object_map import ObjectMap

MIN_AGE = 0.1  # seconds; recency weights are singular at zero age


class RegistrationError(ValueError):
    pass


@dataclass(frozen=True)
class AlignmentMeasurement:
    """One candidate ``T^{odom_i}_{odom_j}`` and the associations behind it."""

    pose: Pose2
    num_associations: int
    association_ids: tuple[tuple[int, int], ...]
    density: float

    def as_vector(self) -> np.ndarray:
        return self.pose.as_vector()


@dataclass(frozen=True)
class MnoParams:
    N: int = 4
    min_associations: int = 2

    def __post_init__(self) -> None:
        if self.N < 1:
            raise ValueError("N must be >= 1")
        if self.min_associations < 2:
            raise ValueError("min_associations must be >= 2")


def recency_weight(l_i: float, l_j: float, l_min: float = MIN_AGE) -> float:
    return 1.0 / (max(l_i, l_min) * max(l_j, l_min))


def weighted_arun_2d(pairs) -> Pose2:
    """Weighted least-squares rigid fit of ``p_i ~ R p_j + t`` in the plane.

    ``pairs`` is a sequence of ``(point_i, point_j, weight)``; only the x/y
    components of the points are used.
    """
    pairs = list(pairs)
    if len(pairs) < 2:
        raise RegistrationError(f"need at least 2 correspondences, got {len(pairs)}")
    pi = np.array([p[0][:2] for p in pairs], dtype=float)
    pj = np.array([p[1][:2] for p in pairs], dtype=float)
    w = np.array([p[2] for p in pairs], dtype=float)
    if np.any(w < 0) or w.sum() <= 0:
        raise RegistrationError("weights must be non-negative with a positive sum")
    w = w / w.sum()
    ci = w @ pi
    cj = w @ pj
    qi, qj = pi - ci, pj - cj
    if np.all(np.linalg.norm(qj, axis=1) < 1e-12) or np.all(np.linalg.norm(qi, axis=1) < 1e-12):
        raise RegistrationError("correspondences are coincident; rotation is unobservable")
    H = (qj * w[:, None]).T @ qi
    U, _, Vt = np.linalg.svd(H)
    V = Vt.T
    # reflection guard
    sign = np.sign(np.linalg.det(V @ U.T)) or 1.0
    R = V @ np.diag([1.0, sign]) @ U.T
    t = ci - R @ cj
    return Pose2(t[0], t[1], math.atan2(R[1, 0], R[0, 0]))


def _measurement(
    inliers, problem, map_i: ObjectMap, map_j: ObjectMap, now: float, density: float
) -> AlignmentMeasurement:
    assocs = [problem.associations[p] for p in inliers]
    ci, cj = map_i.centroids(), map_j.centroids()
    ai, aj = map_i.ages(now), map_j.ages(now)
    pairs = [
        (ci[a.idx_i], cj[a.idx_j], recency_weight(ai[a.idx_i], aj[a.idx_j])) for a in assocs
    ]
    pose = weighted_arun_2d(pairs)
    ids = tuple((map_i.objects[a.idx_i].id, map_j.objects[a.idx_j].id) for a in assocs)
    return AlignmentMeasurement(pose, len(assocs), ids, density)


def mno_clipper(
    map_i: ObjectMap,
    map_j: ObjectMap,
    cparams: ClipperParams = ClipperParams(),
    mparams: MnoParams = MnoParams(),
    now: float | None = None,
) -> list[AlignmentMeasurement]:
    """Up to ``N`` alignments from repeatedly solving with used associations removed.

    After each solve the affinity block of the selected inliers is zeroed
    (diagonal included), so later solutions use disjoint association sets. The
    loop stops at the first solution with fewer than ``min_associations``.
    The result is ordered densest first: on large problems the relaxed solver
    can find a denser set only after a weaker one has been removed.
    """
    if len(map_i) == 0 or len(map_j) == 0:
        return []
    if now is None:
        now = max(map_i.stamp, map_j.stamp)
    assocs = clipper.putative_associations(map_i, map_j, cparams)
    if len(assocs) < mparams.min_associations:
        return []
    problem = clipper.build_problem(map_i, map_j, assocs, cparams)
    M = problem.affinity.copy()
    out: list[AlignmentMeasurement] = []
    for _ in range(mparams.N):
        sol = clipper.solve(clipper.ClipperProblem(M, problem.associations), cparams)
        if len(sol.inliers) < mparams.min_associations:
            break
        try:
            out.append(_measurement(sol.inliers, problem, map_i, map_j, now, sol.density))
        except RegistrationError:
            pass
        idx = np.asarray(sol.inliers)
        M[np.ix_(idx, idx)] = 0.0
    out.sort(key=lambda z: -z.density)
    return out


def clipper_single(
    map_i: ObjectMap,
    map_j: ObjectMap,
    min_assoc: int,
    cparams: ClipperParams = ClipperParams(),
    now: float | None = None,
) -> AlignmentMeasurement | None:
    """Single-solution baseline: accept the densest solution iff it has ``min_assoc`` inliers."""
    meas = mno_clipper(map_i, map_j, cparams, MnoParams(N=1, min_associations=2), now)
    if meas and meas[0].num_associations >= min_assoc:
        return meas[0]
    return None
