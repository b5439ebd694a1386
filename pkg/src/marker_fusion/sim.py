"""Deterministic scenario generator and variant runner.

A scenario moves the hand-eye camera along a scripted trajectory past one or
more tagged objects. :func:`generate` produces three streams from it:

* camera frames with noisy, delayed tag detections (frustum-limited, with
  scripted dropout windows and optional planar-ambiguity flips),
* a drifting VIO stream (camera pose in world plus twist) at ``vio_rate``,
* ground truth on the VIO clock.

:func:`run_scenario` then replays the streams through the tracker for one of
three variants and returns one :class:`TrackRecord` per VIO tick.
"""

from __future__ import annotations

import csv
import enum
import logging
import math
import time as _time
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from . import geom
from .errors import InvalidConfig, MarkerFusionError
from .geom import Pose, Twist, compose, inverse
from .scene import ObjectModel
from .tracker import (
    TagDetection,
    TrackerConfig,
    TrackerOutput,
    TrackerState,
    VioSample,
    VioStream,
    initial_state,
    predict,
    step,
    tag_init,
)

log = logging.getLogger(__name__)


# --------------------------------------------------------------------------
# trajectories (camera pose T_hc^w and world-frame twist)
# --------------------------------------------------------------------------


class Trajectory:
    kind = "abstract"

    def pose(self, t: float) -> Pose:
        raise NotImplementedError

    def twist(self, t: float) -> Twist:
        raise NotImplementedError

    def to_dict(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class StaticTrajectory(Trajectory):
    camera: Pose
    kind = "static"

    def pose(self, t: float) -> Pose:
        return self.camera

    def twist(self, t: float) -> Twist:
        return Twist.zero()

    def to_dict(self) -> dict:
        return {"type": self.kind, "pose": self.camera.to_dict()}


@dataclass(frozen=True)
class ConstantTwistTrajectory(Trajectory):
    """``R(t) = exp(w t) R0``, ``p(t) = p0 + v t`` (world-frame twist)."""

    start: Pose
    velocity: Twist
    kind = "constant_twist"

    def pose(self, t: float) -> Pose:
        q = geom.quat_multiply(geom.quat_from_rotvec(self.velocity.angular * t), self.start.rotation)
        return Pose(q, self.start.translation + self.velocity.linear * t)

    def twist(self, t: float) -> Twist:
        return self.velocity

    def to_dict(self) -> dict:
        return {
            "type": self.kind,
            "start": self.start.to_dict(),
            "linear": self.velocity.linear.tolist(),
            "angular": self.velocity.angular.tolist(),
        }


@dataclass(frozen=True)
class WaypointTrajectory(Trajectory):
    """Piecewise constant-twist motion through timed waypoints; holds at the ends."""

    times: tuple[float, ...]
    poses: tuple[Pose, ...]
    kind = "waypoints"

    def __post_init__(self) -> None:
        if len(self.times) != len(self.poses) or not self.times:
            raise InvalidConfig("waypoints need matching, non-empty times and poses", "trajectory.points")
        if any(not b > a for a, b in zip(self.times, self.times[1:])):
            raise InvalidConfig("waypoint times must be strictly increasing", "trajectory.points")

    def _segment(self, t: float) -> int | None:
        if t <= self.times[0] or t >= self.times[-1]:
            return None
        return int(np.searchsorted(self.times, t, side="right")) - 1

    def pose(self, t: float) -> Pose:
        i = self._segment(t)
        if i is None:
            return self.poses[0] if t <= self.times[0] else self.poses[-1]
        s = (t - self.times[i]) / (self.times[i + 1] - self.times[i])
        return geom.interpolate(self.poses[i], self.poses[i + 1], s)

    def twist(self, t: float) -> Twist:
        i = self._segment(t)
        if i is None:
            return Twist.zero()
        a, b = self.poses[i], self.poses[i + 1]
        dt = self.times[i + 1] - self.times[i]
        rel = geom.quat_multiply(b.rotation, geom.quat_conjugate(a.rotation))
        return Twist((b.translation - a.translation) / dt, geom.quat_to_rotvec(rel) / dt)

    def to_dict(self) -> dict:
        return {
            "type": self.kind,
            "points": [{"time": t, "pose": p.to_dict()} for t, p in zip(self.times, self.poses)],
        }


def _min_jerk(t: float, t0: float, t1: float) -> tuple[float, float]:
    """Smooth 0 -> 1 ramp on [t0, t1] and its time derivative."""
    if t <= t0:
        return 0.0, 0.0
    if t >= t1:
        return 1.0, 0.0
    d = t1 - t0
    u = (t - t0) / d
    s = u**3 * (10.0 - 15.0 * u + 6.0 * u * u)
    ds = 30.0 * u * u * (1.0 - u) ** 2 / d
    return s, ds


def _rot_x(a: float) -> np.ndarray:
    return np.array([math.cos(a / 2), math.sin(a / 2), 0.0, 0.0])


def _rot_y(a: float) -> np.ndarray:
    return np.array([math.cos(a / 2), 0.0, math.sin(a / 2), 0.0])


def _rot_z(a: float) -> np.ndarray:
    return np.array([math.cos(a / 2), 0.0, 0.0, math.sin(a / 2)])


@dataclass(frozen=True)
class PegInHoleTrajectory(Trajectory):
    """Camera approaching a tagged plate at the world origin.

    The plate faces +z; the camera looks straight down at it from
    ``start_distance`` and closes to ``end_distance`` along a minimum-jerk
    profile over ``approach``. Lateral and angular sway is small outside the
    ``agitation`` interval and large inside it (fast arm/base motion, the
    usual cause of losing sight of the markers).
    """

    start_distance: float = 1.2
    end_distance: float = 0.15
    approach: tuple[float, float] = (2.0, 10.0)
    agitation: tuple[float, float] = (3.0, 8.0)
    calm_level: float = 0.1
    lateral_amplitude: float = 0.06
    angular_amplitude: float = 0.12
    kind = "peg_in_hole"

    _FREQ = (0.31, 0.43, 0.37, 0.53, 0.47)  # x, y, yaw, pitch, roll [Hz]
    _PHASE = (0.0, 1.1, 2.3, 0.7, 1.9)

    def _envelope(self, t: float) -> tuple[float, float]:
        a0, a1 = self.agitation
        up, dup = _min_jerk(t, a0, a0 + 1.0)
        down, ddown = _min_jerk(t, a1 - 0.5, a1 + 0.5)
        k = 1.0 - self.calm_level
        return self.calm_level + k * (up - down), k * (dup - ddown)

    def _components(self, t: float) -> tuple[np.ndarray, np.ndarray]:
        """Values and derivatives of (x, y, d, yaw, pitch, roll)."""
        e, de = self._envelope(t)
        s, ds = _min_jerk(t, *self.approach)
        vals = np.zeros(6)
        ders = np.zeros(6)
        amps = (self.lateral_amplitude, self.lateral_amplitude,
                self.angular_amplitude, self.angular_amplitude, self.angular_amplitude)
        slots = (0, 1, 3, 4, 5)
        for slot, amp, f, ph in zip(slots, amps, self._FREQ, self._PHASE):
            w = 2.0 * math.pi * f
            sn, cs = math.sin(w * t + ph), math.cos(w * t + ph)
            vals[slot] = amp * e * sn
            ders[slot] = amp * (de * sn + e * w * cs)
        span = self.start_distance - self.end_distance
        vals[2] = self.start_distance - span * s
        ders[2] = -span * ds
        return vals, ders

    def pose(self, t: float) -> Pose:
        (x, y, d, yaw, pitch, roll), _ = self._components(t)
        q = geom.quat_multiply(
            _rot_x(math.pi),
            geom.quat_multiply(_rot_z(yaw), geom.quat_multiply(_rot_y(pitch), _rot_x(roll))),
        )
        return Pose(q, [x, y, d])

    def twist(self, t: float) -> Twist:
        (x, y, d, yaw, pitch, roll), (dx, dy, dd, dyaw, dpitch, droll) = self._components(t)
        # angular velocity of Rz(yaw) Ry(pitch) Rx(roll) in the parent frame
        qz = _rot_z(yaw)
        qzy = geom.quat_multiply(qz, _rot_y(pitch))
        w_sway = (
            dyaw * np.array([0.0, 0.0, 1.0])
            + dpitch * geom.quat_rotate(qz, np.array([0.0, 1.0, 0.0]))
            + droll * geom.quat_rotate(qzy, np.array([1.0, 0.0, 0.0]))
        )
        return Twist([dx, dy, dd], geom.quat_rotate(_rot_x(math.pi), w_sway))

    def to_dict(self) -> dict:
        return {
            "type": self.kind,
            "start_distance": self.start_distance,
            "end_distance": self.end_distance,
            "approach": list(self.approach),
            "agitation": list(self.agitation),
            "calm_level": self.calm_level,
            "lateral_amplitude": self.lateral_amplitude,
            "angular_amplitude": self.angular_amplitude,
        }


# --------------------------------------------------------------------------
# configuration
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class NoiseConfig:
    det_trans_sigma: float = 0.005
    det_rot_sigma: float = 0.01
    flip_prob: float = 0.0
    vio_trans_sigma: float = 0.001
    vio_rot_sigma: float = 0.001
    vio_bias_walk: float = 0.002  # m/s/sqrt(s): random walk of a drift velocity
    vio_vel_sigma: float = 0.005
    vio_rate_sigma: float = 0.002

    @classmethod
    def zero(cls) -> NoiseConfig:
        return cls(0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0)


@dataclass(frozen=True)
class DropoutWindow:
    start: float
    end: float
    tags: frozenset[int] | None = None  # None suppresses every tag

    def suppresses(self, t: float, tag_id: int) -> bool:
        return self.start <= t <= self.end and (self.tags is None or tag_id in self.tags)


@dataclass(frozen=True)
class Frustum:
    half_angle_deg: float = 35.0
    max_range: float = 3.0

    def sees(self, p_cam: np.ndarray) -> bool:
        r = float(np.linalg.norm(p_cam))
        if p_cam[2] <= 0.0 or r > self.max_range or r == 0.0:
            return False
        return math.degrees(math.acos(min(1.0, p_cam[2] / r))) <= self.half_angle_deg


@dataclass(frozen=True)
class ObjectPlacement:
    model: ObjectModel
    pose: Pose  # T_object^w


@dataclass(frozen=True)
class ScenarioConfig:
    duration: float
    trajectory: Trajectory
    object_placements: tuple[ObjectPlacement, ...]
    detection_rate: float = 25.0
    vio_rate: float = 200.0
    processing_delay: float = 0.0
    dropout_windows: tuple[DropoutWindow, ...] = ()
    noise: NoiseConfig = NoiseConfig()
    seed: int = 0
    frustum: Frustum = Frustum()
    ap2_slow_factor: float = 16.0
    clean_init: bool = True  # first frame free of ambiguity flips

    def __post_init__(self) -> None:
        validate_config(self)


def validate_config(cfg: ScenarioConfig) -> None:
    def bad(msg: str, fld: str) -> None:
        raise InvalidConfig(f"{fld}: {msg}", field=fld)

    if not cfg.duration > 0:
        bad("must be > 0", "duration")
    if not cfg.detection_rate > 0:
        bad("must be > 0", "detection_rate")
    if not cfg.vio_rate > 0:
        bad("must be > 0", "vio_rate")
    if not cfg.processing_delay >= 0:
        bad("must be >= 0", "processing_delay")
    if not cfg.ap2_slow_factor >= 1:
        bad("must be >= 1", "ap2_slow_factor")
    for i, w in enumerate(cfg.dropout_windows):
        if not (0 <= w.start < w.end <= cfg.duration):
            bad(f"window must satisfy 0 <= start < end <= duration, got ({w.start}, {w.end})",
                f"dropout_windows[{i}]")
    for name in ("det_trans_sigma", "det_rot_sigma", "vio_trans_sigma", "vio_rot_sigma",
                 "vio_bias_walk", "vio_vel_sigma", "vio_rate_sigma"):
        if not getattr(cfg.noise, name) >= 0:
            bad("must be >= 0", f"noise.{name}")
    if not 0 <= cfg.noise.flip_prob <= 1:
        bad("must be in [0, 1]", "noise.flip_prob")
    if not cfg.object_placements:
        bad("need at least one object", "objects")
    seen: set[int] = set()
    for p in cfg.object_placements:
        ids = set(p.model.tag_layout)
        if ids & seen:
            bad(f"tag ids {sorted(ids & seen)} used by more than one object", "objects")
        seen |= ids
    if not 0 < cfg.frustum.half_angle_deg < 90:
        bad("must be in (0, 90)", "frustum.half_angle_deg")
    if not cfg.frustum.max_range > 0:
        bad("must be > 0", "frustum.max_range")


def standard_plate(object_id: str = "plate", first_tag: int = 0) -> ObjectModel:
    """Eight coplanar tags (target first) on a 15 cm plate facing +z."""
    offsets = [
        (0.02, -0.01, 0.30),
        (0.06, 0.00, 0.0),
        (-0.06, 0.00, 0.5),
        (0.00, 0.06, -0.4),
        (0.00, -0.06, 1.2),
        (0.045, 0.045, 0.9),
        (-0.045, 0.045, -1.1),
        (-0.045, -0.045, 2.0),
    ]
    layout = {
        first_tag + i: Pose(_rot_z(yaw), [x, y, 0.0]) for i, (x, y, yaw) in enumerate(offsets)
    }
    return ObjectModel.from_layout(object_id, first_tag, layout, display_mesh_ref=f"meshes/{object_id}.obj")


def peg_in_hole_config(
    seed: int = 0,
    duration: float = 12.0,
    dropout: tuple[float, float] | None = (3.0, 8.0),
    processing_delay: float = 0.12,
    noise: NoiseConfig | None = None,
    **overrides,
) -> ScenarioConfig:
    """The standard desk-scale evaluation sequence (plate approach with one
    full-dropout window mid-approach)."""
    windows = () if dropout is None else (DropoutWindow(*dropout),)
    agitation = dropout if dropout is not None else (3.0, 8.0)
    return ScenarioConfig(
        duration=duration,
        trajectory=PegInHoleTrajectory(agitation=agitation),
        object_placements=(ObjectPlacement(standard_plate(), Pose.identity()),),
        processing_delay=processing_delay,
        dropout_windows=windows,
        noise=NoiseConfig(flip_prob=0.02) if noise is None else noise,
        seed=seed,
        **overrides,
    )


# --------------------------------------------------------------------------
# stream generation
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class DetectionFrame:
    index: int
    capture_time: float
    available_time: float
    detections: tuple[TagDetection, ...]


@dataclass(frozen=True)
class GroundTruthSample:
    time: float
    camera_in_world: Pose
    objects_in_cam: dict[str, Pose]


@dataclass(frozen=True)
class Streams:
    frames: tuple[DetectionFrame, ...]
    vio: tuple[VioSample, ...]
    ground_truth: tuple[GroundTruthSample, ...]


def _tick_times(rate: float, duration: float) -> list[float]:
    n = int(math.floor(duration * rate + 1e-9))
    return [i / rate for i in range(n + 1)]


def _gauss3(rng: np.random.Generator, sigma: float) -> np.ndarray:
    return rng.standard_normal(3) * sigma


_FLIP = Pose(_rot_x(math.pi), [0.0, 0.0, 0.0])


def generate(cfg: ScenarioConfig) -> Streams:
    """Produce detection, VIO and ground-truth streams; all randomness from ``cfg.seed``."""
    validate_config(cfg)
    det_ss, flip_ss, vio_ss = np.random.SeedSequence(cfg.seed).spawn(3)
    rng_det = np.random.default_rng(det_ss)
    rng_flip = np.random.default_rng(flip_ss)
    rng_vio = np.random.default_rng(vio_ss)
    noise = cfg.noise
    tags = [
        (tid, compose(pl.pose, tag_pose))
        for pl in cfg.object_placements
        for tid, tag_pose in sorted(pl.model.tag_layout.items())
    ]

    frames = []
    for k, tc in enumerate(_tick_times(cfg.detection_rate, cfg.duration)):
        cam_inv = inverse(cfg.trajectory.pose(tc))
        dets = []
        for tid, tag_in_world in tags:
            true_pose = compose(cam_inv, tag_in_world)
            # draw unconditionally so visibility never shifts the random sequence
            dt = _gauss3(rng_det, noise.det_trans_sigma)
            dr = _gauss3(rng_det, noise.det_rot_sigma)
            flip = rng_flip.random() < noise.flip_prob and not (cfg.clean_init and k == 0)
            if not cfg.frustum.sees(true_pose.translation):
                continue
            if any(w.suppresses(tc, tid) for w in cfg.dropout_windows):
                continue
            measured = true_pose
            if flip:
                measured = compose(measured, _FLIP)
            if noise.det_trans_sigma or noise.det_rot_sigma:
                measured = compose(measured, Pose.from_rotvec(dr, dt))
            dets.append(TagDetection(tid, measured, tc, tc + cfg.processing_delay))
        frames.append(DetectionFrame(k, tc, tc + cfg.processing_delay, tuple(dets)))

    vio = []
    truth = []
    bias = np.zeros(3)
    drift_vel = np.zeros(3)
    dt_vio = 1.0 / cfg.vio_rate
    for i, t in enumerate(_tick_times(cfg.vio_rate, cfg.duration)):
        cam = cfg.trajectory.pose(t)
        tw = cfg.trajectory.twist(t)
        if i > 0:
            drift_vel = drift_vel + _gauss3(rng_vio, noise.vio_bias_walk * math.sqrt(dt_vio))
            bias = bias + drift_vel * dt_vio
        n_p = _gauss3(rng_vio, noise.vio_trans_sigma)
        n_r = _gauss3(rng_vio, noise.vio_rot_sigma)
        n_v = _gauss3(rng_vio, noise.vio_vel_sigma)
        n_w = _gauss3(rng_vio, noise.vio_rate_sigma)
        q = geom.quat_multiply(geom.quat_from_rotvec(n_r), cam.rotation) if noise.vio_rot_sigma else cam.rotation
        vio.append(
            VioSample(t, Pose(q, cam.translation + bias + n_p), Twist(tw.linear + n_v, tw.angular + n_w))
        )
        cam_inv = inverse(cam)
        truth.append(
            GroundTruthSample(
                t, cam, {pl.model.object_id: compose(cam_inv, pl.pose) for pl in cfg.object_placements}
            )
        )
    return Streams(tuple(frames), tuple(vio), tuple(truth))


# --------------------------------------------------------------------------
# variants and the replay loop
# --------------------------------------------------------------------------


class Variant(str, enum.Enum):
    OURS = "Ours"
    MULTI_ART = "MultiART"
    AP2_LIKE = "AP2Like"


@dataclass(frozen=True)
class TrackRecord:
    """One VIO tick of a replayed run.

    ``tracker_output`` is ``None`` on ticks where the variant produced no new
    estimate (the display keeps the previous one). ``step_runtime`` is the
    measured wall-clock time of the tracker call(s) on this tick;
    ``detector_runtime`` is the modelled processing time of the tag detector
    for the frame(s) consumed on this tick.
    """

    time: float
    ground_truth_object_in_hc: Pose
    tracker_output: TrackerOutput | None
    visible_tags: frozenset[int]
    step_runtime: float = 0.0
    detector_runtime: float = 0.0
    error: str | None = None


def variant_config(variant: Variant, base: TrackerConfig = TrackerConfig()) -> TrackerConfig:
    if variant is Variant.OURS:
        return base
    return replace(base, vio_integration=False, delay_compensation=False)


def variant_frames(cfg: ScenarioConfig, frames: Sequence[DetectionFrame], variant: Variant) -> list[DetectionFrame]:
    """Frames as a variant sees them; AP2Like is slower and therefore sparser."""
    if variant is not Variant.AP2_LIKE:
        return list(frames)
    delay = cfg.processing_delay * cfg.ap2_slow_factor
    stride = max(1, math.ceil(delay * cfg.detection_rate - 1e-9))
    out = []
    for f in frames[::stride]:
        avail = f.capture_time + delay
        dets = tuple(replace(d, available_time=avail) for d in f.detections)
        out.append(replace(f, available_time=avail, detections=dets))
    return out


def detector_latency(cfg: ScenarioConfig, variant: Variant) -> float:
    if variant is Variant.AP2_LIKE:
        return cfg.processing_delay * cfg.ap2_slow_factor
    return cfg.processing_delay


def run_scenario(
    cfg: ScenarioConfig,
    variant: Variant | str = Variant.OURS,
    streams: Streams | None = None,
    tracker_cfg: TrackerConfig | None = None,
    object_index: int = 0,
) -> list[TrackRecord]:
    """Replay generated streams through one tracker variant.

    Frames are consumed on the first VIO tick at or after their
    ``available_time``. Records start once the tracker has been initialized
    from a frame showing every tag of the tracked object. Tracker errors are
    logged into the record; the run is never aborted.
    """
    variant = Variant(variant)
    streams = generate(cfg) if streams is None else streams
    placement = cfg.object_placements[object_index]
    model = placement.model
    object_tags = set(model.tag_layout)
    tcfg = variant_config(variant, model.tracker_config(tracker_cfg or TrackerConfig()))
    latency = detector_latency(cfg, variant)

    schedule: dict[int, list[DetectionFrame]] = {}
    last_tick = len(streams.vio) - 1
    for f in variant_frames(cfg, streams.frames, variant):
        tick = math.ceil(f.available_time * cfg.vio_rate - 1e-6)
        if tick <= last_tick:
            schedule.setdefault(tick, []).append(f)

    vio = VioStream(streams.vio)
    state: TrackerState | None = None
    visible: frozenset[int] = frozenset()
    records: list[TrackRecord] = []
    for i, sample in enumerate(streams.vio):
        now = sample.time
        view = vio.until(now)
        output: TrackerOutput | None = None
        detector_rt = 0.0
        error: str | None = None
        t0 = _time.perf_counter()
        for frame in schedule.get(i, ()):
            dets = [d for d in frame.detections if d.tag_id in object_tags]
            try:
                if state is None:
                    if {d.tag_id for d in dets} != object_tags:
                        continue
                    tag_map = tag_init(dets, model.target_tag_id, model.object_from_target)
                    state = initial_state(tag_map, tcfg)
                detector_rt += latency
                state, output = step(state, dets, view, now, tcfg, capture_time=frame.capture_time)
                visible = frozenset(d.tag_id for d in dets)
            except MarkerFusionError as exc:
                error = f"{type(exc).__name__}: {exc}"
                log.debug("tick %d: %s", i, error)
        if output is None and state is not None and state.last_output is not None and error is None:
            try:
                state, output = predict(state, view, now, tcfg)
            except MarkerFusionError as exc:
                error = f"{type(exc).__name__}: {exc}"
        elapsed = _time.perf_counter() - t0
        if state is None:
            continue
        records.append(
            TrackRecord(
                time=now,
                ground_truth_object_in_hc=streams.ground_truth[i].objects_in_cam[model.object_id],
                tracker_output=output,
                visible_tags=visible,
                step_runtime=elapsed,
                detector_runtime=detector_rt,
                error=error,
            )
        )
    return records


# --------------------------------------------------------------------------
# CSV serialization of streams
# --------------------------------------------------------------------------

DETECTION_COLUMNS = ["frame", "capture_time", "available_time", "tag_id", "tx", "ty", "tz", "qw", "qx", "qy", "qz"]
VIO_COLUMNS = ["time", "tx", "ty", "tz", "qw", "qx", "qy", "qz", "vx", "vy", "vz", "wx", "wy", "wz"]
TRUTH_COLUMNS = [
    "time", "object_id",
    "obj_tx", "obj_ty", "obj_tz", "obj_qw", "obj_qx", "obj_qy", "obj_qz",
    "cam_tx", "cam_ty", "cam_tz", "cam_qw", "cam_qx", "cam_qy", "cam_qz",
]


def _f(x: float) -> str:
    return repr(float(x))


def _pose_cells(p: Pose) -> list[str]:
    return [_f(v) for v in p.translation] + [_f(v) for v in p.rotation]


def write_streams(streams: Streams, out_dir: str | Path) -> dict[str, Path]:
    """Write ``detections.csv``, ``vio.csv`` and ``ground_truth.csv``.

    Frames without any detection get one row with ``tag_id = -1`` and empty
    pose cells so that replays still see the (empty) frame.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {name: out / f"{name}.csv" for name in ("detections", "vio", "ground_truth")}
    with paths["detections"].open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(DETECTION_COLUMNS)
        for f in streams.frames:
            head = [str(f.index), _f(f.capture_time), _f(f.available_time)]
            if not f.detections:
                w.writerow(head + ["-1"] + [""] * 7)
            for d in f.detections:
                w.writerow(head + [str(d.tag_id)] + _pose_cells(d.pose))
    with paths["vio"].open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(VIO_COLUMNS)
        for s in streams.vio:
            w.writerow(
                [_f(s.time)] + _pose_cells(s.pose_world_cam)
                + [_f(v) for v in s.twist.linear] + [_f(v) for v in s.twist.angular]
            )
    with paths["ground_truth"].open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRUTH_COLUMNS)
        for g in streams.ground_truth:
            for oid, p in g.objects_in_cam.items():
                w.writerow([_f(g.time), oid] + _pose_cells(p) + _pose_cells(g.camera_in_world))
    return paths


def _pose_from_cells(cells: Sequence[str]) -> Pose:
    v = [float(c) for c in cells]
    return Pose(v[3:7], v[0:3])


def read_streams(in_dir: str | Path) -> Streams:
    """Inverse of :func:`write_streams`."""
    src = Path(in_dir)
    frames: dict[int, tuple[float, float, list[TagDetection]]] = {}
    with (src / "detections.csv").open(newline="") as fh:
        for row in csv.DictReader(fh):
            k = int(row["frame"])
            tc, ta = float(row["capture_time"]), float(row["available_time"])
            entry = frames.setdefault(k, (tc, ta, []))
            if int(row["tag_id"]) >= 0:
                pose = _pose_from_cells([row[c] for c in DETECTION_COLUMNS[4:]])
                entry[2].append(TagDetection(int(row["tag_id"]), pose, tc, ta))
    vio = []
    with (src / "vio.csv").open(newline="") as fh:
        for row in csv.DictReader(fh):
            pose = _pose_from_cells([row[c] for c in VIO_COLUMNS[1:8]])
            tw = Twist([float(row[c]) for c in ("vx", "vy", "vz")], [float(row[c]) for c in ("wx", "wy", "wz")])
            vio.append(VioSample(float(row["time"]), pose, tw))
    truth: dict[float, GroundTruthSample] = {}
    with (src / "ground_truth.csv").open(newline="") as fh:
        for row in csv.DictReader(fh):
            t = float(row["time"])
            cam = _pose_from_cells([row[c] for c in TRUTH_COLUMNS[9:16]])
            g = truth.setdefault(t, GroundTruthSample(t, cam, {}))
            g.objects_in_cam[row["object_id"]] = _pose_from_cells([row[c] for c in TRUTH_COLUMNS[2:9]])
    return Streams(
        tuple(DetectionFrame(k, tc, ta, tuple(d)) for k, (tc, ta, d) in sorted(frames.items())),
        tuple(vio),
        tuple(truth[t] for t in sorted(truth)),
    )
