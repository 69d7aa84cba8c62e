import json
import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tcaff import object_map as om
from tcaff.object_map import MapParams, MapParseError, ObjectLandmark, ObjectMap


def obj(i, seen=0.0, p=(0.0, 0.0, 0.0), w=1.0, h=1.0):
    return ObjectLandmark(i, p, w, h, seen)


def test_upsert_examples():
    m = om.upsert(ObjectMap("r0"), obj(1, 1.0))
    assert len(m) == 1
    m = om.upsert(m, obj(1, 3.0))
    assert len(m) == 1 and m.objects[0].last_seen == 3.0
    for i in (2, 3):
        m = om.upsert(m, obj(i, 2.0))
    assert len(m) == 3 and sorted(m.ids) == [1, 2, 3]


def test_duplicate_ids_rejected():
    with pytest.raises(ValueError):
        ObjectMap("r0", 0.0, (obj(1), obj(1)))


def test_landmark_validation():
    with pytest.raises(ValueError):
        obj(1, w=0.0)
    with pytest.raises(ValueError):
        ObjectLandmark(1, (0.0, math.nan, 0.0), 1.0, 1.0, 0.0)


def test_recent_view_examples():
    m = ObjectMap("r0", 30.0, (obj(1, seen=5.0), obj(2, seen=30.0), obj(3, seen=12.0)))
    v = om.recent_view(m, 30.0, MapParams(kappa=20.0))
    assert sorted(v.ids) == [2, 3]  # age 25 dropped, age 0 kept
    outdoor = om.recent_view(m, 30.0, MapParams(kappa=15.0))
    assert sorted(outdoor.ids) == [2]  # age 18 dropped at kappa 15


def test_ages_clamped():
    m = ObjectMap("r0", 0.0, (obj(1, seen=10.0),))
    assert m.ages(5.0)[0] == 0.0
    assert 1 in om.recent_view(m, 5.0).ids


@given(st.lists(st.floats(0, 100), min_size=0, max_size=20), st.floats(0.1, 50), st.floats(0.1, 50))
def test_recent_view_monotone_in_kappa(seen, k1, k2):
    m = ObjectMap("r0", 100.0, tuple(obj(i, s) for i, s in enumerate(seen)))
    lo, hi = sorted((k1, k2))
    assert set(om.recent_view(m, 100.0, MapParams(lo)).ids) <= set(om.recent_view(m, 100.0, MapParams(hi)).ids)


def test_round_trip_examples():
    empty = ObjectMap("r1", 2.5)
    assert om.deserialize(om.serialize(empty)) == empty
    one = ObjectMap("r1", 1.0, (ObjectLandmark(7, (0.1, 1 / 3, math.pi), 0.2, 1e-3, 0.7),))
    back = om.deserialize(om.serialize(one))
    assert back.objects[0].centroid == one.objects[0].centroid
    assert back == one


def test_wire_format_fields():
    m = ObjectMap("r1", 1.0, (obj(3, 0.5, (1.0, 2.0, 3.0), 0.4, 0.6),))
    d = json.loads(om.serialize(m).decode("utf-8"))
    assert d == {"robot_id": "r1", "stamp": 1.0,
                 "objects": [{"id": 3, "p": [1.0, 2.0, 3.0], "w": 0.4, "h": 0.6, "last_seen": 0.5}]}


def test_missing_field_is_named():
    d = om.to_dict(ObjectMap("r1", 1.0, (obj(3),)))
    del d["objects"][0]["w"]
    with pytest.raises(MapParseError, match="'w'"):
        om.from_dict(d)


@pytest.mark.parametrize("payload", [
    b"not json",
    b'{"robot_id": 3, "stamp": 0, "objects": []}',
    b'{"robot_id": "a", "stamp": 0, "objects": [{"id": 1, "p": [0, 0], "w": 1, "h": 1, "last_seen": 0}]}',
    b'{"robot_id": "a", "stamp": 0, "objects": [{"id": 1, "p": [0, 0, 0], "w": -1, "h": 1, "last_seen": 0}]}',
    b'{"robot_id": "a", "stamp": 0, "objects": [{"id": -1, "p": [0, 0, 0], "w": 1, "h": 1, "last_seen": 0}]}',
])
def test_malformed_messages_rejected(payload):
    with pytest.raises(MapParseError):
        om.deserialize(payload)


finite = st.floats(-1e6, 1e6, allow_nan=False, allow_infinity=False)
positive = st.floats(1e-6, 1e3, allow_nan=False)
landmarks = st.builds(
    lambda p, w, h, s: (p, w, h, s),
    st.tuples(finite, finite, finite), positive, positive, st.floats(0, 1e6),
)


@given(st.text(max_size=8), st.floats(0, 1e6), st.lists(landmarks, max_size=10))
@settings(max_examples=1000)
def test_round_trip_property(robot, stamp, objs):
    m = ObjectMap(robot, stamp, tuple(ObjectLandmark(i, *o) for i, o in enumerate(objs)))
    assert om.deserialize(om.serialize(m)) == m


def test_dump_layout(tmp_path):
    path = om.dump(ObjectMap("r0", 4.0, (obj(1),)), tmp_path, 4)
    assert path == tmp_path / "maps" / "r0" / "4.json"
    assert om.deserialize(path.read_bytes()).ids == [1]
