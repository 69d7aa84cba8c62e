import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tcaff.geometry import (
    Gaussian3, Pose2, between, compose, gt_alignment, inverse, wrap_angle, wrap_angles,
)

angles = st.floats(-1e3, 1e3, allow_nan=False)
coords = st.floats(-100, 100, allow_nan=False)
poses = st.builds(Pose2, coords, coords, angles)


def hom(x, y, th):
    """Homogeneous 3x3 matrix built by hand, independent of Pose2."""
    c, s = math.cos(th), math.sin(th)
    return np.array([[c, -s, x], [s, c, y], [0.0, 0.0, 1.0]])


def from_hom(m):
    return m[0, 2], m[1, 2], math.atan2(m[1, 0], m[0, 0])


def close(p: Pose2, q, tol=1e-9):
    x, y, th = q
    return abs(p.x - x) < tol and abs(p.y - y) < tol and abs(wrap_angle(p.theta - th)) < tol


@pytest.mark.parametrize("a, expected", [(3 * math.pi / 2, -math.pi / 2), (0.0, 0.0), (-math.pi, math.pi), (math.pi, math.pi)])
def test_wrap_examples(a, expected):
    assert wrap_angle(a) == pytest.approx(expected, abs=1e-12)


def test_wrap_rejects_nan():
    with pytest.raises(ValueError):
        wrap_angle(float("nan"))


@given(angles)
def test_wrap_range_and_idempotent(a):
    w = wrap_angle(a)
    assert -math.pi < w <= math.pi
    assert wrap_angle(w) == w
    assert math.isclose(math.cos(w), math.cos(a), abs_tol=1e-9)
    assert math.isclose(math.sin(w), math.sin(a), abs_tol=1e-9)


def test_wrap_vectorized_matches_scalar():
    a = np.random.default_rng(0).uniform(-50, 50, 500)
    a[:3] = [-math.pi, math.pi, 3 * math.pi]
    assert np.allclose(wrap_angles(a), [wrap_angle(v) for v in a], atol=0)


def test_compose_examples():
    p = Pose2(0.3, -1.2, 2.0)
    assert close(compose(Pose2.identity(), p), p.as_vector())
    assert close(compose(p, inverse(p)), (0, 0, 0))
    got = compose(Pose2(1, 0, math.pi / 2), Pose2(1, 0, 0))
    assert close(got, from_hom(hom(1, 0, math.pi / 2) @ hom(1, 0, 0)))
    assert close(got, (1, 1, math.pi / 2))


@pytest.mark.parametrize("p, expected", [((0, 0, 0), (0, 0, 0)), ((1, 0, 0), (-1, 0, 0)), ((0, 0, math.pi / 2), (0, 0, -math.pi / 2))])
def test_inverse_examples(p, expected):
    assert close(inverse(Pose2(*p)), expected)


@given(poses, poses)
def test_compose_matches_matrix_oracle(a, b):
    expected = from_hom(hom(a.x, a.y, a.theta) @ hom(b.x, b.y, b.theta))
    assert close(compose(a, b), expected, tol=1e-7)


@given(poses)
def test_inverse_matches_matrix_oracle(a):
    assert close(inverse(a), from_hom(np.linalg.inv(hom(a.x, a.y, a.theta))), tol=1e-7)


def test_associativity_and_point_mapping():
    rng = np.random.default_rng(1)
    for _ in range(1000):
        a, b, c = (Pose2(*rng.uniform(-10, 10, 2), rng.uniform(-4, 4)) for _ in range(3))
        l, r = compose(compose(a, b), c), compose(a, compose(b, c))
        assert abs(l.x - r.x) < 1e-10 and abs(l.y - r.y) < 1e-10
        assert abs(wrap_angle(l.theta - r.theta)) < 1e-10
        pt = rng.uniform(-5, 5, (1, 3))
        assert np.allclose(compose(a, b).apply(pt), a.apply(b.apply(pt)), atol=1e-10)


def test_apply_passes_z_through():
    out = Pose2(1, 2, math.pi / 2).apply(np.array([[1.0, 0.0, 7.0]]))
    assert np.allclose(out, [[1.0, 3.0, 7.0]])


def test_between_and_operator():
    a, b = Pose2(1, 2, 0.3), Pose2(-1, 0.5, -2.0)
    assert close(compose(a, between(a, b)), b.as_vector())
    assert close(a @ b, compose(a, b).as_vector())


def test_matrix_round_trip():
    p = Pose2(0.5, -3, 2.5)
    assert np.allclose(p.as_matrix(), hom(0.5, -3, 2.5))
    assert close(Pose2.from_matrix(p.as_matrix()), p.as_vector())


def _gt_oracle(oi, wi, oj, wj):
    # T^{odom_i}_{odom_j} = T^{oi}_w (T^{oj}_w)^-1 with T^{o}_w = T^{o}_body (T^{w}_body)^-1
    Ti = hom(*oi) @ np.linalg.inv(hom(*wi))
    Tj = hom(*oj) @ np.linalg.inv(hom(*wj))
    return from_hom(Ti @ np.linalg.inv(Tj))


def test_gt_alignment_conventions():
    p = Pose2(2, 3, 0.7)
    assert close(gt_alignment(p, p, p, p), (0, 0, 0))

    # robot j's odometry frame sits one meter along +x of the world; robot i is drift-free
    w = Pose2(4, 1, 0.2)
    oj = compose(inverse(Pose2(1, 0, 0)), w)
    got = gt_alignment(w, w, oj, w)
    assert close(got, (1, 0, 0))
    assert close(got, _gt_oracle(w.as_vector(), w.as_vector(), oj.as_vector(), w.as_vector()))
    # a point expressed in odom_j maps into odom_i (= world) through the alignment
    pt_world = np.array([[2.0, 5.0, 0.0]])
    pt_j = inverse(Pose2(1, 0, 0)).apply(pt_world)
    assert np.allclose(got.apply(pt_j), pt_world)

    # pure rotation drift of pi/6 on robot i
    wi = Pose2(0, 0, 0)
    oi = Pose2(0, 0, math.pi / 6)
    got = gt_alignment(oi, wi, Pose2.identity(), Pose2.identity())
    assert close(got, (0, 0, math.pi / 6))


def test_gt_alignment_for_inverse_convention_case():
    # odom_j offset by (1,0,0) relative to world, odom_i identical to world
    w = Pose2(0, 0, 0)
    got = gt_alignment(w, w, Pose2(1, 0, 0), w)
    assert close(got, (-1, 0, 0))
    assert close(got, _gt_oracle((0, 0, 0), (0, 0, 0), (1, 0, 0), (0, 0, 0)))


@given(poses, poses, poses, poses)
@settings(max_examples=200)
def test_gt_alignment_matches_oracle(oi, wi, oj, wj):
    expected = _gt_oracle(oi.as_vector(), wi.as_vector(), oj.as_vector(), wj.as_vector())
    assert close(gt_alignment(oi, wi, oj, wj), expected, tol=1e-6)


def test_gaussian_wraps_and_checks():
    g = Gaussian3([0, 0, 3 * math.pi], np.eye(3))
    assert g.mean[2] == pytest.approx(math.pi)
    assert g.is_healthy()
    with pytest.raises(ValueError):
        Gaussian3([0, 0, 0], [[1, 0.5, 0], [0, 1, 0], [0, 0, 1]])
    assert not Gaussian3([0, 0, 0], np.diag([1.0, 1.0, 0.0])).is_healthy()
    with pytest.raises(ValueError):
        g.mean[0] = 1.0
