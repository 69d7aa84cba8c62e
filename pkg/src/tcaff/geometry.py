"""SE(2) pose algebra and frame-alignment conventions.

Transforms follow the ``T^a_b`` convention: a pose ``T^a_b`` maps a point
expressed in frame ``b`` into frame ``a`` via ``p_a = R(theta) p_b + t``, so
``compose(T^a_b, T^b_c) == T^a_c``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

TWO_PI = 2.0 * math.pi


def wrap_angle(a: float) -> float:
    """Wrap an angle to the half-open interval (-pi, pi]."""
    a = float(a)
    if not math.isfinite(a):
        raise ValueError(f"cannot wrap non-finite angle {a!r}")
    w = math.fmod(a, TWO_PI)
    if w <= -math.pi:
        w += TWO_PI
    elif w > math.pi:
        w -= TWO_PI
    return w


def wrap_angles(a: np.ndarray) -> np.ndarray:
    """Vectorized :func:`wrap_angle`."""
    w = np.fmod(np.asarray(a, dtype=float), TWO_PI)
    w = np.where(w <= -math.pi, w + TWO_PI, w)
    return np.where(w > math.pi, w - TWO_PI, w)


@dataclass(frozen=True)
class Pose2:
    x: float = 0.0
    y: float = 0.0
    theta: float = 0.0

    def __post_init__(self) -> None:
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise ValueError(f"non-finite translation ({self.x}, {self.y})")
        object.__setattr__(self, "x", float(self.x))
        object.__setattr__(self, "y", float(self.y))
        object.__setattr__(self, "theta", wrap_angle(self.theta))

    @classmethod
    def identity(cls) -> Pose2:
        return cls(0.0, 0.0, 0.0)

    @classmethod
    def from_vector(cls, v) -> Pose2:
        return cls(float(v[0]), float(v[1]), float(v[2]))

    @classmethod
    def from_matrix(cls, m: np.ndarray) -> Pose2:
        return cls(m[0, 2], m[1, 2], math.atan2(m[1, 0], m[0, 0]))

    def as_vector(self) -> np.ndarray:
        return np.array([self.x, self.y, self.theta])

    def as_matrix(self) -> np.ndarray:
        """3x3 homogeneous matrix."""
        c, s = math.cos(self.theta), math.sin(self.theta)
        return np.array([[c, -s, self.x], [s, c, self.y], [0.0, 0.0, 1.0]])

    def rotation(self) -> np.ndarray:
        c, s = math.cos(self.theta), math.sin(self.theta)
        return np.array([[c, -s], [s, c]])

    def apply(self, points: np.ndarray) -> np.ndarray:
        """Map points (..., 2) or (..., 3) from the child frame into the parent frame.

        A third (z) column is passed through untouched.
        """
        pts = np.asarray(points, dtype=float)
        out = pts.copy()
        c, s = math.cos(self.theta), math.sin(self.theta)
        out[..., 0] = c * pts[..., 0] - s * pts[..., 1] + self.x
        out[..., 1] = s * pts[..., 0] + c * pts[..., 1] + self.y
        return out

    def __matmul__(self, other: Pose2) -> Pose2:
        return compose(self, other)


def compose(a: Pose2, b: Pose2) -> Pose2:
    c, s = math.cos(a.theta), math.sin(a.theta)
    return Pose2(
        a.x + c * b.x - s * b.y,
        a.y + s * b.x + c * b.y,
        a.theta + b.theta,
    )


def inverse(a: Pose2) -> Pose2:
    c, s = math.cos(a.theta), math.sin(a.theta)
    return Pose2(-c * a.x - s * a.y, s * a.x - c * a.y, -a.theta)


def between(a: Pose2, b: Pose2) -> Pose2:
    """Relative pose ``inverse(a) * b``."""
    return compose(inverse(a), b)


def gt_alignment(
    odom_pose_i: Pose2, world_pose_i: Pose2, odom_pose_j: Pose2, world_pose_j: Pose2
) -> Pose2:
    """Ground-truth alignment ``T^{odom_i}_{odom_j}`` at one instant.

    Built from ``T^{odom_i}_{world} = T^{odom_i}_i * (T^{world}_i)^-1`` for each
    robot; with zero drift on both robots the result is constant in time.
    """
    odom_i_world = compose(odom_pose_i, inverse(world_pose_i))
    odom_j_world = compose(odom_pose_j, inverse(world_pose_j))
    return compose(odom_i_world, inverse(odom_j_world))


@dataclass(frozen=True)
class Gaussian3:
    """Gaussian belief over an SE(2) alignment parameterized as [x, y, theta]."""

    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self) -> None:
        mean = np.array(self.mean, dtype=float).reshape(3)
        mean[2] = wrap_angle(mean[2])
        cov = np.array(self.cov, dtype=float).reshape(3, 3)
        if not np.allclose(cov, cov.T, atol=1e-9, rtol=0.0):
            raise ValueError("covariance is not symmetric")
        cov = 0.5 * (cov + cov.T)
        mean.setflags(write=False)
        cov.setflags(write=False)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)

    @property
    def pose(self) -> Pose2:
        return Pose2.from_vector(self.mean)

    def is_healthy(self, max_eig: float = 1e12) -> bool:
        if not np.array_equal(self.cov, self.cov.T):
            return False
        eig = np.linalg.eigvalsh(self.cov)
        return bool(eig.min() > 0.0 and eig.max() < max_eig)
