"""Scenario files: YAML documents describing a world, robots and all parameters.

Schema (every section except ``world`` and ``robots`` is optional)::

    name: str
    seed: int                       # base seed for world, odometry and sensing
    duration_s: float
    mapping_hz: float               # observation / map-update rate
    sharing_hz: float               # map exchange and filter rate
    world:                          # list of blocks, ids assigned consecutively
      - {extent: [w, h], origin: [x, y], n_objects: int, wh_range: [lo, hi],
         alias_copies: int, alias_size: int, alias_extent: float,
         alias_origins: [[x, y], ...]}
    sensor: {fov_radius, fov_half_angle_deg, detection_prob, centroid_sigma, wh_sigma}
    drift: {trans_rw_sigma, rot_rw_sigma, trans_bias, rot_bias}   # per mapping tick
    robots:
      - id: str
        waypoints: [[t, x, y, heading_deg], ...]
        drift: {...}                # optional per-robot override
    map: {kappa}
    clipper: {epsilon, sigma, wh_tol, max_solver_iters, solver_tol, exact_max}
    mno: {N, min_associations}
    filter: {p_nm, nu, tau, window, max_branches, max_no_meas_steps, min_path_measurements}
    kalman: {q_diag: [x, y, theta], r_diag: [x, y, theta]}
    metrics: {fa_trans_m, fa_head_deg}
    segments: {name: [t_start, t_end], ...}   # annotations used by checks

Overrides use dotted keys, e.g. ``filter.window=5`` or ``world.0.n_objects=0``.
"""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np
import yaml

from .clipper import ClipperParams
from .filter import FilterParams, KalmanModel
from .object_map import MapParams
from .registration import MnoParams
from .sim import DriftConfig, SensorConfig, WorldConfig


class ScenarioError(ValueError):
    pass


DEFAULTS: dict = {
    "name": "unnamed",
    "seed": 0,
    "duration_s": 60.0,
    "mapping_hz": 10.0,
    "sharing_hz": 1.0,
    "sensor": {},
    "drift": {},
    "map": {},
    "clipper": {},
    "mno": {},
    "filter": {},
    "kalman": {},
    "metrics": {"fa_trans_m": 1.0, "fa_head_deg": 10.0},
    "segments": {},
}

TOP_KEYS = set(DEFAULTS) | {"world", "robots", "description"}


@dataclass
class RobotSpec:
    id: str
    waypoints: list
    drift: DriftConfig


@dataclass
class Scenario:
    name: str
    seed: int
    duration_s: float
    mapping_hz: float
    sharing_hz: float
    worlds: list[WorldConfig]
    robots: list[RobotSpec]
    sensor: SensorConfig
    map_params: MapParams
    clipper: ClipperParams
    mno: MnoParams
    filter: FilterParams
    kalman: KalmanModel
    fa_trans_m: float = 1.0
    fa_head_deg: float = 10.0
    segments: dict = field(default_factory=dict)
    raw: dict = field(default_factory=dict)

    @property
    def map_per_share(self) -> int:
        return int(round(self.mapping_hz / self.sharing_hz))

    @property
    def pairs(self) -> list[tuple[int, int]]:
        n = len(self.robots)
        return [(a, b) for a in range(n) for b in range(a + 1, n)]


def builtin_names() -> list[str]:
    root = resources.files("tcaff") / "scenarios"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".yaml"))


def _read(name_or_path: str | Path) -> dict:
    p = Path(name_or_path)
    if p.suffix in (".yaml", ".yml") or p.exists():
        if not p.exists():
            raise ScenarioError(f"scenario file not found: {p}")
        text = p.read_text()
    else:
        res = resources.files("tcaff") / "scenarios" / f"{name_or_path}.yaml"
        if not res.is_file():
            known = ", ".join(builtin_names())
            raise ScenarioError(f"unknown scenario {name_or_path!r} (built-in: {known})")
        text = res.read_text()
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ScenarioError(f"cannot parse scenario: {exc}") from exc
    if not isinstance(data, dict):
        raise ScenarioError("scenario must be a mapping")
    return data


def apply_override(data: dict, key: str, value) -> None:
    parts = key.split(".")
    if parts[0] not in TOP_KEYS:
        raise ScenarioError(f"invalid override {key!r}: unknown section {parts[0]!r}")
    node = data
    for part in parts[:-1]:
        if isinstance(node, list):
            try:
                node = node[int(part)]
            except (ValueError, IndexError):
                raise ScenarioError(f"invalid override {key!r}: bad index {part!r}") from None
        else:
            node = node.setdefault(part, {})
        if not isinstance(node, (dict, list)):
            raise ScenarioError(f"invalid override {key!r}: {part!r} is not a section")
    last = parts[-1]
    if isinstance(node, list):
        try:
            node[int(last)] = value
        except (ValueError, IndexError):
            raise ScenarioError(f"invalid override {key!r}: bad index {last!r}") from None
    else:
        node[last] = value


def parse_overrides(items) -> dict:
    out = {}
    for item in items or ():
        if "=" not in item:
            raise ScenarioError(f"invalid override {item!r}: expected key=value")
        k, v = item.split("=", 1)
        out[k.strip()] = yaml.safe_load(v)
    return out


def _build(cls, section: dict, where: str, rename: dict | None = None):
    kwargs = dict(section or {})
    for src, (dst, fn) in (rename or {}).items():
        if src in kwargs:
            kwargs[dst] = fn(kwargs.pop(src))
    try:
        return cls(**kwargs)
    except TypeError as exc:
        raise ScenarioError(f"{where}: {exc}") from exc
    except ValueError as exc:
        raise ScenarioError(f"{where}: {exc}") from exc


def load_scenario(name_or_path: str | Path, overrides: dict | None = None, seed: int | None = None) -> Scenario:
    data = copy.deepcopy(DEFAULTS)
    raw = _read(name_or_path)
    unknown = set(raw) - TOP_KEYS
    if unknown:
        raise ScenarioError(f"unknown scenario keys: {sorted(unknown)}")
    for k, v in raw.items():
        if isinstance(v, dict) and isinstance(data.get(k), dict):
            data[k].update(v)
        else:
            data[k] = v
    for k, v in (overrides or {}).items():
        apply_override(data, k, v)
    if seed is not None:
        data["seed"] = int(seed)
    return from_dict(data)


def from_dict(data: dict) -> Scenario:
    if not data.get("world") and data.get("world") != []:
        raise ScenarioError("scenario needs a 'world' list")
    if not data.get("robots") or len(data["robots"]) < 2:
        raise ScenarioError("scenario needs at least two robots")
    if len(data["robots"]) > 4:
        raise ScenarioError("at most four robots are supported")
    seed = int(data["seed"])
    worlds = []
    for k, w in enumerate(data["world"]):
        w = dict(w)
        for key in ("extent", "origin", "wh_range"):
            if key in w:
                w[key] = tuple(float(v) for v in w[key])
        if "alias_origins" in w:
            w["alias_origins"] = tuple(tuple(float(v) for v in c) for c in w["alias_origins"])
        w["seed"] = seed * 100 + k
        worlds.append(_build(WorldConfig, w, f"world[{k}]"))

    deg = ("fov_half_angle", math.radians)
    sensor = _build(SensorConfig, data["sensor"], "sensor", {"fov_half_angle_deg": deg})
    base_drift = dict(data["drift"])
    robots = []
    ids = set()
    for k, r in enumerate(data["robots"]):
        if "id" not in r or "waypoints" not in r:
            raise ScenarioError(f"robots[{k}] needs 'id' and 'waypoints'")
        if r["id"] in ids:
            raise ScenarioError(f"duplicate robot id {r['id']!r}")
        ids.add(r["id"])
        wp = np.asarray(r["waypoints"], dtype=float)
        if wp.ndim != 2 or wp.shape[1] != 4 or len(wp) < 1:
            raise ScenarioError(f"robots[{k}].waypoints must be rows of [t, x, y, heading_deg]")
        wp[:, 3] = np.radians(wp[:, 3])
        drift = _build(DriftConfig, {**base_drift, **(r.get("drift") or {})}, f"robots[{k}].drift")
        robots.append(RobotSpec(str(r["id"]), wp.tolist(), drift))

    kal = dict(data["kalman"])
    kalman_kwargs = {}
    if "q_diag" in kal:
        kalman_kwargs["Q"] = np.diag(np.asarray(kal.pop("q_diag"), dtype=float))
    if "r_diag" in kal:
        kalman_kwargs["R"] = np.diag(np.asarray(kal.pop("r_diag"), dtype=float))
    if kal:
        raise ScenarioError(f"kalman: unknown keys {sorted(kal)}")
    metrics = dict(data["metrics"])
    extra = set(metrics) - {"fa_trans_m", "fa_head_deg"}
    if extra:
        raise ScenarioError(f"metrics: unknown keys {sorted(extra)}")

    duration = float(data["duration_s"])
    mapping_hz, sharing_hz = float(data["mapping_hz"]), float(data["sharing_hz"])
    if duration <= 0 or mapping_hz <= 0 or sharing_hz <= 0:
        raise ScenarioError("duration_s, mapping_hz and sharing_hz must be positive")
    ratio = mapping_hz / sharing_hz
    if abs(ratio - round(ratio)) > 1e-9 or ratio < 1:
        raise ScenarioError("mapping_hz must be an integer multiple of sharing_hz")

    return Scenario(
        name=str(data["name"]),
        seed=seed,
        duration_s=duration,
        mapping_hz=mapping_hz,
        sharing_hz=sharing_hz,
        worlds=worlds,
        robots=robots,
        sensor=sensor,
        map_params=_build(MapParams, data["map"], "map"),
        clipper=_build(ClipperParams, data["clipper"], "clipper"),
        mno=_build(MnoParams, data["mno"], "mno"),
        filter=_build(FilterParams, data["filter"], "filter"),
        kalman=_build(KalmanModel, kalman_kwargs, "kalman"),
        fa_trans_m=float(metrics.get("fa_trans_m", 1.0)),
        fa_head_deg=float(metrics.get("fa_head_deg", 10.0)),
        segments=dict(data.get("segments") or {}),
        raw=data,
    )
