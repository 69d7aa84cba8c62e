"""Synthetic worlds, trajectories, odometry drift and object observations.

All randomness comes from ``numpy`` generators keyed by explicit counters
(``seed``, stream, tick), so any tick's output can be regenerated on its own.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import Pose2, compose, inverse, wrap_angle
from .object_map import ObjectLandmark

# stream tags keep generators for different purposes independent
STREAM_WORLD = 1
STREAM_ODOM = 2
STREAM_OBSERVE = 3


def rng_for(seed: int, *counters: int) -> np.random.Generator:
    return np.random.default_rng([int(seed) & 0xFFFFFFFF, *[int(c) for c in counters]])


@dataclass(frozen=True)
class WorldConfig:
    extent: tuple[float, float] = (10.0, 10.0)
    n_objects: int = 20
    wh_range: tuple[float, float] = (0.2, 1.5)
    alias_copies: int = 0
    alias_size: int = 4
    seed: int = 0
    origin: tuple[float, float] = (0.0, 0.0)
    # side length of the square the aliased constellation is drawn in
    alias_extent: float = 2.0
    # lower-left corners of the constellation copies; random if empty
    alias_origins: tuple[tuple[float, float], ...] = ()

    def __post_init__(self) -> None:
        if min(self.extent) <= 0:
            raise ValueError("world extent must be positive")
        if self.n_objects < 0 or self.alias_copies < 0 or self.alias_size < 0:
            raise ValueError("object counts must be non-negative")
        lo, hi = self.wh_range
        if not 0 < lo <= hi:
            raise ValueError("wh_range must satisfy 0 < min <= max")
        if self.alias_origins and len(self.alias_origins) != self.alias_copies:
            raise ValueError("alias_origins must list one corner per alias copy")


@dataclass(frozen=True)
class DriftConfig:
    trans_rw_sigma: float = 0.0
    rot_rw_sigma: float = 0.0
    trans_bias: float = 0.0
    rot_bias: float = 0.0

    def __post_init__(self) -> None:
        if self.trans_rw_sigma < 0 or self.rot_rw_sigma < 0:
            raise ValueError("drift sigmas must be non-negative")


@dataclass(frozen=True)
class SensorConfig:
    fov_radius: float = 6.0
    fov_half_angle: float = math.radians(60.0)
    detection_prob: float = 0.9
    centroid_sigma: float = 0.05
    wh_sigma: float = 0.02

    def __post_init__(self) -> None:
        if min(self.fov_radius, self.fov_half_angle, self.centroid_sigma, self.wh_sigma) < 0:
            raise ValueError("sensor parameters must be non-negative")
        if not 0.0 <= self.detection_prob <= 1.0:
            raise ValueError("detection_prob must lie in [0, 1]")


@dataclass
class RobotTruth:
    world_poses: list[Pose2] = field(default_factory=list)
    odom_poses: list[Pose2] = field(default_factory=list)

    def __post_init__(self) -> None:
        if len(self.world_poses) != len(self.odom_poses):
            raise ValueError("world and odometry trajectories differ in length")


def _box(rng: np.random.Generator, n: int, cfg: WorldConfig, lo, size):
    xy = rng.uniform(0.0, 1.0, (n, 2)) * np.asarray(size) + np.asarray(lo)
    wh = rng.uniform(cfg.wh_range[0], cfg.wh_range[1], (n, 2))
    return xy, wh


def generate_world(cfg: WorldConfig, id_offset: int = 0) -> list[ObjectLandmark]:
    """Objects in world coordinates; z is half the object height (boxes on the floor)."""
    rng = rng_for(cfg.seed, STREAM_WORLD, id_offset)
    xy, wh = _box(rng, cfg.n_objects, cfg, cfg.origin, cfg.extent)
    blocks_xy, blocks_wh = [xy], [wh]
    if cfg.alias_copies > 0 and cfg.alias_size > 0:
        cxy, cwh = _box(rng, cfg.alias_size, cfg, (0.0, 0.0), (cfg.alias_extent, cfg.alias_extent))
        for c in range(cfg.alias_copies):
            if cfg.alias_origins:
                corner = np.asarray(cfg.alias_origins[c], dtype=float)
            else:
                room = np.asarray(cfg.extent) - cfg.alias_extent
                corner = np.asarray(cfg.origin) + rng.uniform(0.0, 1.0, 2) * np.maximum(room, 0.0)
            blocks_xy.append(cxy + corner)
            blocks_wh.append(cwh)
    xy = np.vstack(blocks_xy)
    wh = np.vstack(blocks_wh)
    return [
        ObjectLandmark(id_offset + k, (xy[k, 0], xy[k, 1], 0.5 * wh[k, 1]), wh[k, 0], wh[k, 1], 0.0)
        for k in range(len(xy))
    ]


def interpolate_waypoints(waypoints, times) -> list[Pose2]:
    """Piecewise-linear poses through ``(t, x, y, theta)`` keyframes.

    Headings are interpolated along the shorter arc; poses are held constant
    before the first and after the last keyframe.
    """
    wp = np.asarray(waypoints, dtype=float).reshape(-1, 4)
    order = np.argsort(wp[:, 0], kind="stable")
    wp = wp[order]
    theta = np.unwrap(wp[:, 3])
    out = []
    for t in times:
        x = np.interp(t, wp[:, 0], wp[:, 1])
        y = np.interp(t, wp[:, 0], wp[:, 2])
        th = np.interp(t, wp[:, 0], theta)
        out.append(Pose2(x, y, th))
    return out


def simulate_odometry(truth_world: list[Pose2], drift: DriftConfig, seed: int, stream: int = 0) -> RobotTruth:
    """Dead-reckoned poses whose every relative motion is corrupted by bias and noise.

    The odometry frame is anchored at the first true pose.
    """
    n = len(truth_world)
    if n == 0:
        return RobotTruth([], [])
    rng = rng_for(seed, STREAM_ODOM, stream)
    noise = rng.standard_normal((max(n - 1, 0), 3))
    odom = [Pose2.identity()]
    for k in range(1, n):
        d = compose(inverse(truth_world[k - 1]), truth_world[k])
        e = noise[k - 1]
        noisy = Pose2(
            d.x + drift.trans_bias + drift.trans_rw_sigma * e[0],
            d.y + drift.trans_rw_sigma * e[1],
            d.theta + drift.rot_bias + drift.rot_rw_sigma * e[2],
        )
        odom.append(compose(odom[-1], noisy))
    return RobotTruth(list(truth_world), odom)


def observe(
    world: list[ObjectLandmark],
    robot_pose_world: Pose2,
    robot_pose_odom: Pose2,
    sensor: SensorConfig,
    now: float,
    seed: int,
    tick: int,
    stream: int = 0,
) -> list[ObjectLandmark]:
    """Detections of world objects, expressed in the robot's (drifted) odometry frame."""
    if not world:
        return []
    rng = rng_for(seed, STREAM_OBSERVE, stream, tick)
    pts = np.array([o.centroid for o in world])
    body = inverse(robot_pose_world).apply(pts)
    rng_dist = np.hypot(body[:, 0], body[:, 1])
    bearing = np.arctan2(body[:, 1], body[:, 0])
    n = len(world)
    # draw every random quantity for every object so results do not depend on visibility
    detect = rng.uniform(0.0, 1.0, n) < sensor.detection_prob
    c_noise = rng.standard_normal((n, 3)) * sensor.centroid_sigma
    wh_noise = rng.standard_normal((n, 2)) * sensor.wh_sigma
    visible = (rng_dist <= sensor.fov_radius) & (np.abs(bearing) <= sensor.fov_half_angle) & detect
    odom_pts = robot_pose_odom.apply(body) + c_noise
    out = []
    for k in np.flatnonzero(visible):
        o = world[k]
        w = max(o.width + wh_noise[k, 0], 0.01)
        h = max(o.height + wh_noise[k, 1], 0.01)
        out.append(ObjectLandmark(o.id, tuple(odom_pts[k]), w, h, now))
    return out


def heading_drift(truth: RobotTruth, k: int) -> float:
    """Heading error of the odometry relative to the world at index ``k``."""
    first = truth.world_poses[0]
    expected = compose(inverse(first), truth.world_poses[k])
    return wrap_angle(truth.odom_poses[k].theta - expected.theta)
