"""Experiment runner: mapping, map sharing, per-pair alignment, metrics."""

from __future__ import annotations

import csv
import io
import json
import math
import statistics
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterator

import numpy as np

from . import object_map as om
from .filter import TcaffFilter
from .geometry import Pose2, gt_alignment, wrap_angle
from .registration import MnoParams, mno_clipper
from .scenario import Scenario, load_scenario
from .sim import generate_world, interpolate_waypoints, observe, simulate_odometry

CSV_COLUMNS = [
    "step", "time_s", "pair",
    "gt_x", "gt_y", "gt_theta",
    "est_x", "est_y", "est_theta",
    "mode", "n_meas", "trans_err_m", "head_err_deg",
    "n_overlap",
]


@dataclass
class RunRecord:
    step: int
    time_s: float
    pair: str
    gt: Pose2
    estimate: Pose2 | None
    mode: str
    n_meas: int
    trans_err_m: float | None = None
    head_err_deg: float | None = None
    n_overlap: int = 0

    def __post_init__(self) -> None:
        if self.estimate is not None and self.trans_err_m is None:
            self.trans_err_m, self.head_err_deg = alignment_errors(self.estimate, self.gt)


@dataclass
class Metrics:
    mean_trans_err_m: float | None
    std_trans_err_m: float | None
    mean_head_err_deg: float | None
    std_head_err_deg: float | None
    availability: float
    false_accepts: int
    time_to_first_lock_s: float | None
    n_records: int

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class Frame:
    """Everything shared at one map-sharing tick."""

    step: int
    time_s: float
    views: list[om.ObjectMap]
    gt: dict[tuple[int, int], Pose2]
    mapping_times: list[float] = field(default_factory=list)


def alignment_errors(est: Pose2, gt: Pose2) -> tuple[float, float]:
    trans = math.hypot(est.x - gt.x, est.y - gt.y)
    head = abs(math.degrees(wrap_angle(est.theta - gt.theta)))
    return trans, head


def pair_label(scn: Scenario, a: int, b: int) -> str:
    return f"{scn.robots[a].id}-{scn.robots[b].id}"


def simulate(scn: Scenario, dump_dir: Path | None = None) -> Iterator[Frame]:
    """Run the mapping loop and yield the received maps at every sharing tick."""
    world = []
    for cfg in scn.worlds:
        world.extend(generate_world(cfg, id_offset=len(world)))
    n_ticks = int(round(scn.duration_s * scn.mapping_hz)) + 1
    times = [k / scn.mapping_hz for k in range(n_ticks)]
    truths = []
    for r, spec in enumerate(scn.robots):
        poses = interpolate_waypoints(spec.waypoints, times)
        truths.append(simulate_odometry(poses, spec.drift, scn.seed, stream=r))
    maps: list[dict[int, om.ObjectLandmark]] = [{} for _ in scn.robots]
    ratio = scn.map_per_share
    for k, t in enumerate(times):
        mapping_times = []
        for r, truth in enumerate(truths):
            t0 = time.perf_counter()
            for obs in observe(world, truth.world_poses[k], truth.odom_poses[k], scn.sensor, t, scn.seed, k, stream=r):
                maps[r][obs.id] = obs
            mapping_times.append(time.perf_counter() - t0)
        if k % ratio:
            continue
        step = k // ratio
        views = []
        for r, spec in enumerate(scn.robots):
            full = om.ObjectMap(spec.id, t, tuple(maps[r][i] for i in sorted(maps[r])))
            view = om.recent_view(full, t, scn.map_params)
            msg = om.serialize(view)
            if dump_dir is not None:
                path = Path(dump_dir) / "maps" / spec.id / f"{step}.json"
                path.parent.mkdir(parents=True, exist_ok=True)
                path.write_bytes(msg)
            views.append(om.deserialize(msg))
        gt = {
            (a, b): gt_alignment(truths[a].odom_poses[k], truths[a].world_poses[k],
                                 truths[b].odom_poses[k], truths[b].world_poses[k])
            for a, b in scn.pairs
        }
        yield Frame(step, t, views, gt, mapping_times)


def _overlap(a: om.ObjectMap, b: om.ObjectMap) -> int:
    return len(set(a.ids) & set(b.ids))


@dataclass
class RunResult:
    records: list[RunRecord]
    metrics: dict
    timings: dict[str, list[float]]


def run_scenario(
    scenario: str | Path | Scenario,
    overrides: dict | None = None,
    seed: int | None = None,
    out_dir: Path | None = None,
    dump_maps: bool = True,
) -> RunResult:
    """Run TCAFF on every robot pair; optionally write run.csv, metrics.json and maps/."""
    scn = scenario if isinstance(scenario, Scenario) else load_scenario(scenario, overrides, seed)
    filters = {p: TcaffFilter(scn.kalman, scn.filter) for p in scn.pairs}
    records: list[RunRecord] = []
    timings: dict[str, list[float]] = {"mapping": [], "mno_clipper": [], "tcaff": []}
    if out_dir is not None:
        Path(out_dir).mkdir(parents=True, exist_ok=True)
    dump = Path(out_dir) if (out_dir is not None and dump_maps) else None
    for frame in simulate(scn, dump):
        timings["mapping"].extend(frame.mapping_times)
        for a, b in scn.pairs:
            t0 = time.perf_counter()
            meas = mno_clipper(frame.views[a], frame.views[b], scn.clipper, scn.mno, frame.time_s)
            t1 = time.perf_counter()
            filt = filters[(a, b)]
            est = filt.step(meas)
            t2 = time.perf_counter()
            timings["mno_clipper"].append(t1 - t0)
            timings["tcaff"].append(t2 - t1)
            records.append(
                RunRecord(
                    frame.step, frame.time_s, pair_label(scn, a, b), frame.gt[(a, b)],
                    est.pose if est is not None else None, filt.mode.value, len(meas),
                    n_overlap=_overlap(frame.views[a], frame.views[b]),
                )
            )
    metrics = metrics_report(records, scn.fa_trans_m, scn.fa_head_deg)
    if out_dir is not None:
        write_csv(records, Path(out_dir) / "run.csv")
        (Path(out_dir) / "metrics.json").write_text(json.dumps(metrics, indent=2, sort_keys=True) + "\n")
    return RunResult(records, metrics, timings)


def run_baseline(
    scenario: str | Path | Scenario,
    min_assoc=(2,),
    mode: str = "clipper_threshold",
    overrides: dict | None = None,
    seed: int | None = None,
) -> dict[str, dict]:
    """Per-tick registration without temporal filtering.

    ``clipper_threshold`` accepts the single densest solution when it has at
    least ``min_assoc`` inliers (one result per threshold). ``mno_only``
    publishes the MNO measurement with the most associations every tick.
    """
    scn = scenario if isinstance(scenario, Scenario) else load_scenario(scenario, overrides, seed)
    if mode == "clipper_threshold":
        keys = [f"min_assoc={a}" for a in min_assoc]
        mparams = MnoParams(N=1, min_associations=2)
    elif mode == "mno_only":
        keys = ["mno_only"]
        mparams = scn.mno
    else:
        raise ValueError(f"unknown baseline {mode!r}")
    recs: dict[str, list[RunRecord]] = {k: [] for k in keys}
    for frame in simulate(scn):
        for a, b in scn.pairs:
            meas = mno_clipper(frame.views[a], frame.views[b], scn.clipper, mparams, frame.time_s)
            common = dict(step=frame.step, time_s=frame.time_s, pair=pair_label(scn, a, b),
                          gt=frame.gt[(a, b)], n_meas=len(meas),
                          n_overlap=_overlap(frame.views[a], frame.views[b]))
            if mode == "mno_only":
                best = max(meas, key=lambda m: m.num_associations, default=None)
                est = best.pose if best is not None else None
                recs["mno_only"].append(RunRecord(estimate=est, mode="locked" if est else "exploring", **common))
                continue
            for thr, key in zip(min_assoc, keys):
                ok = bool(meas) and meas[0].num_associations >= thr
                est = meas[0].pose if ok else None
                recs[key].append(RunRecord(estimate=est, mode="locked" if ok else "exploring", **common))
    return {k: metrics_report(v, scn.fa_trans_m, scn.fa_head_deg)["overall"] for k, v in recs.items()}


def _mean_std(xs: list[float]) -> tuple[float | None, float | None]:
    if not xs:
        return None, None
    return statistics.fmean(xs), (statistics.pstdev(xs) if len(xs) > 1 else 0.0)


def compute_metrics(records: list[RunRecord], fa_trans_m: float = 1.0, fa_head_deg: float = 10.0) -> Metrics:
    """Error statistics over ticks with an estimate.

    A false accept is a published estimate while the two recent maps share no
    object, or whose error exceeds ``fa_trans_m`` / ``fa_head_deg``.
    """
    with_est = [r for r in records if r.estimate is not None]
    mt, st = _mean_std([r.trans_err_m for r in with_est])
    mh, sh = _mean_std([r.head_err_deg for r in with_est])
    fa = sum(
        1 for r in with_est
        if r.n_overlap == 0 or r.trans_err_m > fa_trans_m or r.head_err_deg > fa_head_deg
    )
    ttl = None
    if with_est and records:
        t0 = min(r.time_s for r in records)
        ttl = min(r.time_s for r in with_est) - t0
    return Metrics(
        mean_trans_err_m=mt,
        std_trans_err_m=st,
        mean_head_err_deg=mh,
        std_head_err_deg=sh,
        availability=(len(with_est) / len(records)) if records else 0.0,
        false_accepts=fa,
        time_to_first_lock_s=ttl,
        n_records=len(records),
    )


def metrics_report(records: list[RunRecord], fa_trans_m: float = 1.0, fa_head_deg: float = 10.0) -> dict:
    """Overall metrics plus one entry per pair."""
    pairs = sorted({r.pair for r in records})
    return {
        "overall": compute_metrics(records, fa_trans_m, fa_head_deg).to_dict(),
        "pairs": {
            p: compute_metrics([r for r in records if r.pair == p], fa_trans_m, fa_head_deg).to_dict()
            for p in pairs
        },
    }


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, float):
        return repr(x)
    return str(x)


def write_csv(records: list[RunRecord], path: Path | None = None) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in sorted(records, key=lambda r: (r.step, r.pair)):
        e = r.estimate
        w.writerow([
            r.step, _fmt(r.time_s), r.pair,
            _fmt(r.gt.x), _fmt(r.gt.y), _fmt(r.gt.theta),
            _fmt(e.x if e else None), _fmt(e.y if e else None), _fmt(e.theta if e else None),
            r.mode, r.n_meas, _fmt(r.trans_err_m), _fmt(r.head_err_deg), r.n_overlap,
        ])
    text = buf.getvalue()
    if path is not None:
        Path(path).write_text(text)
    return text


def read_csv(path_or_text) -> list[RunRecord]:
    p = Path(path_or_text) if not str(path_or_text).startswith("step,") else None
    text = p.read_text() if p is not None else str(path_or_text)
    rows = list(csv.DictReader(io.StringIO(text)))
    out = []
    for row in rows:
        est = None
        if row["est_x"] != "":
            est = Pose2(float(row["est_x"]), float(row["est_y"]), float(row["est_theta"]))
        out.append(
            RunRecord(
                step=int(row["step"]),
                time_s=float(row["time_s"]),
                pair=row["pair"],
                gt=Pose2(float(row["gt_x"]), float(row["gt_y"]), float(row["gt_theta"])),
                estimate=est,
                mode=row["mode"],
                n_meas=int(row["n_meas"]),
                trans_err_m=float(row["trans_err_m"]) if row["trans_err_m"] else None,
                head_err_deg=float(row["head_err_deg"]) if row["head_err_deg"] else None,
                n_overlap=int(row.get("n_overlap") or 0),
            )
        )
    return out


def timing_report(scenario: str | Path | Scenario, overrides: dict | None = None, seed: int | None = None) -> dict:
    """Per-call wall time (ms) of a mapping tick, one MNO-CLIPPER call and one TCAFF step."""
    res = run_scenario(scenario, overrides, seed)
    table = {}
    for key, vals in res.timings.items():
        ms = np.asarray(vals) * 1e3
        table[key] = {
            "mean_ms": float(ms.mean()) if ms.size else 0.0,
            "std_ms": float(ms.std()) if ms.size else 0.0,
            "calls": int(ms.size),
        }
    return table
