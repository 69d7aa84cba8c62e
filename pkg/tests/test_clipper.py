import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tcaff import clipper
from tcaff.clipper import ClipperParams, ClipperProblem, PutativeAssociation
from tcaff.object_map import ObjectLandmark, ObjectMap

from oracles import densest_consistent_subset, random_problem


def make_map(points, sizes, robot="r"):
    return ObjectMap(robot, 0.0, tuple(
        ObjectLandmark(k, tuple(p), s[0], s[1], 0.0) for k, (p, s) in enumerate(zip(points, sizes))
    ))


def test_associations_identical_maps_distinct_sizes():
    pts = np.random.default_rng(0).uniform(0, 5, (5, 3))
    sizes = [(0.2 + k, 0.3 + k) for k in range(5)]
    m = make_map(pts, sizes)
    assocs = clipper.putative_associations(m, m)
    assert [(a.idx_i, a.idx_j) for a in assocs] == [(k, k) for k in range(5)]


def test_associations_full_bipartite_and_gate():
    a = make_map(np.zeros((3, 3)), [(1, 1)] * 3)
    b = make_map(np.zeros((4, 3)), [(1, 1)] * 4)
    assert len(clipper.putative_associations(a, b)) == 12
    c = make_map(np.zeros((1, 3)), [(1.5, 1.0)])
    assert clipper.putative_associations(a, c, ClipperParams(wh_tol=0.3)) == []
    assert clipper.putative_associations(a, ObjectMap("e")) == []


def test_consistency_distance_examples():
    mi = make_map([[0, 0, 0], [1, 0, 0]], [(1, 1)] * 2)
    mj = make_map([[0, 0, 0], [0, 1.2, 0]], [(1, 1)] * 2)
    p, q = PutativeAssociation(0, 0), PutativeAssociation(1, 1)
    assert clipper.consistency_distance(p, q, mi, mj) == pytest.approx(0.2)
    assert clipper.consistency_distance(q, p, mi, mj) == pytest.approx(0.2)
    assert clipper.consistency_distance(p, q, mj, mi) == pytest.approx(0.2)


def test_consistency_zero_under_isometry():
    rng = np.random.default_rng(2)
    pts = rng.uniform(-3, 3, (6, 3))
    th = 0.8
    R = np.array([[math.cos(th), -math.sin(th), 0], [math.sin(th), math.cos(th), 0], [0, 0, 1]])
    mi = make_map(pts, [(1, 1)] * 6)
    mj = make_map(pts @ R.T + [1, -2, 0], [(1, 1)] * 6)
    for a in range(6):
        for b in range(6):
            d = clipper.consistency_distance(PutativeAssociation(a, a), PutativeAssociation(b, b), mi, mj)
            assert d == pytest.approx(0.0, abs=1e-12)


def test_affinity_entries():
    mi = make_map([[0, 0, 0], [1, 0, 0], [5, 0, 0]], [(1, 1)] * 3)
    mj = make_map([[0, 0, 0], [1, 0, 0], [0, 9, 0]], [(1, 1)] * 3)
    assocs = [PutativeAssociation(0, 0), PutativeAssociation(1, 1), PutativeAssociation(2, 2), PutativeAssociation(0, 1)]
    prob = clipper.build_problem(mi, mj, assocs, ClipperParams())
    M = prob.affinity
    assert M[0, 1] == 1.0  # d = 0
    assert M[0, 2] == 0.0  # d >= epsilon
    assert M[0, 3] == 0.0  # same source object
    assert M[1, 3] == 0.0  # same target object
    assert np.all(np.diag(M) == 1.0)
    assert np.array_equal(M, M.T)
    d = 0.2
    mj2 = make_map([[0, 0, 0], [1 + d, 0, 0]], [(1, 1)] * 2)
    M2 = clipper.build_problem(mi, mj2, assocs[:2], ClipperParams(sigma=0.15)).affinity
    assert M2[0, 1] == pytest.approx(math.exp(-d * d / (2 * 0.15**2)))


def test_solve_examples():
    sol = clipper.solve(ClipperProblem(np.ones((4, 4))))
    assert sol.inliers == (0, 1, 2, 3) and sol.density == pytest.approx(4.0)

    M = np.eye(3)
    M[0, 1] = M[1, 0] = 1.0
    assert clipper.solve(ClipperProblem(M)).inliers == (0, 1)

    M = np.zeros((8, 8))
    M[:5, :5] = 1.0
    M[5:, 5:] = 1.0
    assert clipper.solve(ClipperProblem(M)).inliers == (0, 1, 2, 3, 4)


def test_solve_empty_and_dead():
    assert clipper.solve(ClipperProblem(np.zeros((0, 0)))).inliers == ()
    assert clipper.solve(ClipperProblem(np.zeros((3, 3)))).inliers == ()


@pytest.mark.parametrize("seed", range(40))
def test_exact_solver_matches_oracle(seed):
    M = random_problem(np.random.default_rng(seed))
    best, sets = densest_consistent_subset(M)
    sol = clipper.solve(ClipperProblem(M))
    assert sol.density == pytest.approx(best, abs=1e-6)
    assert clipper.subset_density(M, sol.inliers) == pytest.approx(sol.density, abs=1e-12)
    assert tuple(sorted(sol.inliers)) in [tuple(sorted(s)) for s in sets]


@pytest.mark.parametrize("seed", range(40))
def test_relaxed_solver_is_feasible_and_near_optimal(seed):
    M = random_problem(np.random.default_rng(1000 + seed))
    best, _ = densest_consistent_subset(M)
    sol = clipper.solve_relaxed(M, ClipperParams())
    idx = list(sol.inliers)
    assert idx, "relaxation returned nothing"
    assert all(M[a, b] > 0 for a in idx for b in idx)
    assert sol.density <= best + 1e-9
    assert sol.density >= 0.5 * best


def test_relaxed_path_on_large_problem():
    rng = np.random.default_rng(5)
    n = 60
    M = np.zeros((n, n))
    clique = rng.choice(n, 8, replace=False)
    M[np.ix_(clique, clique)] = 0.95
    for _ in range(200):
        a, b = rng.integers(0, n, 2)
        M[a, b] = M[b, a] = rng.uniform(0.1, 0.9)
    np.fill_diagonal(M, 1.0)
    sol = clipper.solve(ClipperProblem(M), ClipperParams(exact_max=20))
    assert all(M[a, b] > 0 for a in sol.inliers for b in sol.inliers)
    assert set(clique) <= set(sol.inliers) or sol.density >= clipper.subset_density(M, clique) - 1e-9


def test_solver_deterministic():
    M = random_problem(np.random.default_rng(3))
    a = clipper.solve_relaxed(M, ClipperParams())
    b = clipper.solve_relaxed(M.copy(), ClipperParams())
    assert a == b


@given(st.integers(0, 10_000), st.data())
@settings(max_examples=60, deadline=None)
def test_zeroing_never_raises_optimum(seed, data):
    M = random_problem(np.random.default_rng(seed), m_max=9)
    best, _ = densest_consistent_subset(M)
    m = len(M)
    a = data.draw(st.integers(0, m - 1))
    b = data.draw(st.integers(0, m - 1))
    if a == b:
        return
    M2 = M.copy()
    M2[a, b] = M2[b, a] = 0.0
    best2, _ = densest_consistent_subset(M2)
    assert best2 <= best + 1e-12
    assert clipper.solve(ClipperProblem(M2)).density == pytest.approx(best2, abs=1e-6)


@given(st.integers(0, 10_000))
@settings(max_examples=60, deadline=None)
def test_solution_satisfies_constraints(seed):
    M = random_problem(np.random.default_rng(seed))
    sol = clipper.solve(ClipperProblem(M))
    idx = sol.inliers
    assert min((M[a, b] for a in idx for b in idx), default=1.0) > 0
