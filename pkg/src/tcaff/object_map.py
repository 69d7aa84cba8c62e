"""Sparse object maps, recency filtering and the map-sharing wire format.

Wire format (UTF-8 JSON)::

    {"robot_id": str, "stamp": float,
     "objects": [{"id": int, "p": [x, y, z], "w": float, "h": float,
                  "last_seen": float}, ...]}

Floats are written with 17 significant digits so every value round-trips.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


class MapParseError(ValueError):
    """Raised when a map message cannot be decoded."""


@dataclass(frozen=True)
class ObjectLandmark:
    id: int
    centroid: tuple[float, float, float]
    width: float
    height: float
    last_seen: float

    def __post_init__(self) -> None:
        c = tuple(float(v) for v in self.centroid)
        if len(c) != 3 or not all(math.isfinite(v) for v in c):
            raise ValueError(f"object {self.id}: centroid must be 3 finite values, got {self.centroid!r}")
        if not self.width > 0 or not self.height > 0:
            raise ValueError(f"object {self.id}: width/height must be positive")
        object.__setattr__(self, "centroid", c)
        object.__setattr__(self, "id", int(self.id))
        object.__setattr__(self, "width", float(self.width))
        object.__setattr__(self, "height", float(self.height))
        object.__setattr__(self, "last_seen", float(self.last_seen))


@dataclass(frozen=True)
class MapParams:
    kappa: float = 20.0

    def __post_init__(self) -> None:
        if not self.kappa > 0:
            raise ValueError("kappa must be positive")


@dataclass(frozen=True)
class ObjectMap:
    robot_id: str
    stamp: float = 0.0
    objects: tuple[ObjectLandmark, ...] = field(default_factory=tuple)

    def __post_init__(self) -> None:
        objs = tuple(self.objects)
        ids = [o.id for o in objs]
        if len(set(ids)) != len(ids):
            raise ValueError(f"duplicate object ids in map of {self.robot_id}")
        object.__setattr__(self, "objects", objs)
        object.__setattr__(self, "stamp", float(self.stamp))

    def __len__(self) -> int:
        return len(self.objects)

    @property
    def ids(self) -> list[int]:
        return [o.id for o in self.objects]

    def centroids(self) -> np.ndarray:
        if not self.objects:
            return np.zeros((0, 3))
        return np.array([o.centroid for o in self.objects])

    def sizes(self) -> np.ndarray:
        """(n, 2) array of [width, height]."""
        if not self.objects:
            return np.zeros((0, 2))
        return np.array([(o.width, o.height) for o in self.objects])

    def ages(self, now: float) -> np.ndarray:
        """Time since each object was last seen, clamped at zero."""
        seen = np.array([o.last_seen for o in self.objects], dtype=float)
        return np.maximum(now - seen, 0.0)


def upsert(m: ObjectMap, obs: ObjectLandmark) -> ObjectMap:
    """Insert ``obs`` or replace the entry with the same id."""
    objs = list(m.objects)
    for k, o in enumerate(objs):
        if o.id == obs.id:
            objs[k] = obs
            break
    else:
        objs.append(obs)
    return ObjectMap(m.robot_id, max(m.stamp, obs.last_seen), tuple(objs))


def recent_view(m: ObjectMap, now: float, params: MapParams = MapParams()) -> ObjectMap:
    """Objects last seen less than ``kappa`` seconds before ``now``.

    Objects stamped in the future (clock disagreement during replay) get age 0.
    """
    kept = tuple(o for o in m.objects if max(now - o.last_seen, 0.0) < params.kappa)
    return ObjectMap(m.robot_id, max(now, m.stamp), kept)


def _num(x: float) -> float:
    return float(f"{x:.17g}")


def to_dict(m: ObjectMap) -> dict:
    return {
        "robot_id": m.robot_id,
        "stamp": _num(m.stamp),
        "objects": [
            {
                "id": o.id,
                "p": [_num(v) for v in o.centroid],
                "w": _num(o.width),
                "h": _num(o.height),
                "last_seen": _num(o.last_seen),
            }
            for o in m.objects
        ],
    }


def serialize(m: ObjectMap) -> bytes:
    return json.dumps(to_dict(m), separators=(",", ":")).encode("utf-8")


def _field(d: dict, key: str, where: str):
    if not isinstance(d, dict):
        raise MapParseError(f"{where}: expected an object, got {type(d).__name__}")
    if key not in d:
        raise MapParseError(f"{where}: missing field {key!r}")
    return d[key]


def _float(v, where: str) -> float:
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise MapParseError(f"{where}: expected a number, got {v!r}")
    if not math.isfinite(v):
        raise MapParseError(f"{where}: non-finite number")
    return float(v)


def from_dict(d: dict) -> ObjectMap:
    robot_id = _field(d, "robot_id", "map")
    if not isinstance(robot_id, str):
        raise MapParseError("map: 'robot_id' must be a string")
    stamp = _float(_field(d, "stamp", "map"), "map.stamp")
    raw = _field(d, "objects", "map")
    if not isinstance(raw, list):
        raise MapParseError("map: 'objects' must be a list")
    objs = []
    for k, od in enumerate(raw):
        where = f"objects[{k}]"
        oid = _field(od, "id", where)
        if isinstance(oid, bool) or not isinstance(oid, int) or oid < 0:
            raise MapParseError(f"{where}: 'id' must be a non-negative integer")
        p = _field(od, "p", where)
        if not isinstance(p, list) or len(p) != 3:
            raise MapParseError(f"{where}: 'p' must be a list of 3 numbers")
        p = tuple(_float(v, f"{where}.p") for v in p)
        w = _float(_field(od, "w", where), f"{where}.w")
        h = _float(_field(od, "h", where), f"{where}.h")
        if w <= 0 or h <= 0:
            raise MapParseError(f"{where}: width and height must be positive (w={w}, h={h})")
        seen = _float(_field(od, "last_seen", where), f"{where}.last_seen")
        objs.append(ObjectLandmark(oid, p, w, h, seen))
    try:
        return ObjectMap(robot_id, stamp, tuple(objs))
    except ValueError as exc:
        raise MapParseError(str(exc)) from exc


def deserialize(data: bytes | str) -> ObjectMap:
    try:
        d = json.loads(data)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise MapParseError(f"malformed map message: {exc}") from exc
    return from_dict(d)


def dump(m: ObjectMap, root: Path, tick: int) -> Path:
    """Write ``m`` to ``root/maps/<robot_id>/<tick>.json``."""
    path = Path(root) / "maps" / m.robot_id / f"{tick}.json"
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(serialize(m))
    return path

