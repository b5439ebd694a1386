"""Robust multi-tag object localization with VIO bridging and delay compensation.

Frames: ``T_a^b`` is the pose of ``a`` in ``b`` (see :mod:`marker_fusion.geom`).
Detections carry ``T_y^hc`` (tag in hand-eye camera), VIO carries ``T_hc^w``
(camera in its inertial world frame) plus a world-frame twist.

One call to :func:`step` consumes one camera frame: it counts the known tags,
picks the matching branch (all tags, partial with or without the target, or
none), produces the fused target estimate at the frame's capture time and
then extrapolates it to ``now`` with the VIO twist. Between frames,
:func:`predict` carries the last output forward with VIO relative motion so
that output can be produced at the VIO rate.
"""

from __future__ import annotations

import bisect
import enum
import logging
from dataclasses import dataclass, replace
from typing import Iterable, Mapping, Sequence

from . import geom
from .errors import (
    ClockSkew,
    Degenerate,
    DuplicateTag,
    NegativeDelay,
    NotInitialized,
    TargetMissing,
    UnknownTag,
    VioGap,
)
from .geom import Pose, RansacConfig, Twist, compose, inverse

log = logging.getLogger(__name__)

_TIME_EPS = 1e-9


class Mode(str, enum.Enum):
    ALL_TAGS = "AllTags"
    PARTIAL_WITH_TARGET = "PartialWithTarget"
    PARTIAL_WITHOUT_TARGET = "PartialWithoutTarget"
    VIO_ONLY = "VioOnly"


@dataclass(frozen=True)
class TagDetection:
    tag_id: int
    pose: Pose
    capture_time: float
    available_time: float

    def __post_init__(self) -> None:
        if self.tag_id < 0:
            raise ValueError(f"tag_id must be >= 0, got {self.tag_id}")
        if self.available_time < self.capture_time:
            raise ValueError("available_time precedes capture_time")


@dataclass(frozen=True)
class VioSample:
    time: float
    pose_world_cam: Pose
    twist: Twist


class VioStream:
    """Time-ordered VIO samples with interpolated lookup.

    Poses between samples are blended linearly (translation) and spherically
    (rotation); twists linearly. :meth:`until` returns a causal view that
    refuses queries past ``now``.
    """

    def __init__(self, samples: Sequence[VioSample], _end: int | None = None):
        self._samples = samples
        self._times = [s.time for s in samples] if _end is None else None
        self._end = len(samples) if _end is None else _end
        if _end is None:
            for a, b in zip(self._times, self._times[1:]):
                if not b > a:
                    raise ValueError("VIO samples must be strictly time-ordered")

    @classmethod
    def _view(cls, parent: VioStream, end: int) -> VioStream:
        view = cls.__new__(cls)
        view._samples = parent._samples
        view._times = parent._times
        view._end = end
        return view

    def __len__(self) -> int:
        return self._end

    @property
    def samples(self) -> Sequence[VioSample]:
        return self._samples[: self._end]

    @property
    def start_time(self) -> float:
        if self._end == 0:
            raise VioGap("empty VIO stream")
        return self._times[0]

    @property
    def latest_time(self) -> float:
        if self._end == 0:
            raise VioGap("empty VIO stream")
        return self._times[self._end - 1]

    def latest(self) -> VioSample:
        if self._end == 0:
            raise VioGap("empty VIO stream")
        return self._samples[self._end - 1]

    def until(self, now: float) -> VioStream:
        """Causal view containing samples with time <= now."""
        end = bisect.bisect_right(self._times, now + _TIME_EPS, 0, self._end)
        return VioStream._view(self, end)

    def sample_at(self, t: float) -> VioSample:
        if self._end == 0:
            raise VioGap("empty VIO stream")
        times = self._times
        if t < times[0] - _TIME_EPS or t > times[self._end - 1] + _TIME_EPS:
            raise VioGap(f"t={t:.6f} outside VIO coverage [{times[0]:.6f}, {times[self._end - 1]:.6f}]")
        i = bisect.bisect_left(times, t, 0, self._end)
        if i < self._end and abs(times[i] - t) <= _TIME_EPS:
            return self._samples[i]
        if i > 0 and abs(times[i - 1] - t) <= _TIME_EPS:
            return self._samples[i - 1]
        if i == 0 or i >= self._end:
            # within epsilon of an end sample
            return self._samples[min(max(i, 0), self._end - 1)]
        a, b = self._samples[i - 1], self._samples[i]
        s = (t - a.time) / (b.time - a.time)
        pose = geom.interpolate(a.pose_world_cam, b.pose_world_cam, s)
        twist = Twist(
            a.twist.linear + s * (b.twist.linear - a.twist.linear),
            a.twist.angular + s * (b.twist.angular - a.twist.angular),
        )
        return VioSample(t, pose, twist)

    def pose_at(self, t: float) -> Pose:
        return self.sample_at(t).pose_world_cam


@dataclass(frozen=True)
class TagMap:
    """Target tag id, ``T_x^y`` for every other tag ``y``, and ``T_object^x``.

    ``object_from_target`` is the object's pose expressed in the target tag
    frame, so ``T_object^hc = T_x^hc ∘ object_from_target``.
    """

    target_id: int
    relative: Mapping[int, Pose]
    object_from_target: Pose

    def __post_init__(self) -> None:
        if self.target_id in self.relative:
            raise ValueError("target id must not appear in the relative map")
        object.__setattr__(self, "relative", dict(sorted(self.relative.items())))

    @property
    def tag_ids(self) -> list[int]:
        return [self.target_id, *self.relative]

    @property
    def n_tags(self) -> int:
        return 1 + len(self.relative)


@dataclass(frozen=True)
class TrackerConfig:
    ransac: RansacConfig = RansacConfig()
    update_weight: float = 0.1
    vio_integration: bool = True  # dead reckoning when every tag is lost
    delay_compensation: bool = True  # twist extrapolation over the measured delay
    rng_seed: int = 0

    def __post_init__(self) -> None:
        if not 0.0 < self.update_weight <= 1.0:
            raise ValueError("update_weight must be in (0, 1]")


@dataclass(frozen=True)
class TrackerOutput:
    object_pose_cam: Pose
    fused_target: Pose
    mode: Mode
    delay_applied: float
    time: float
    inliers: tuple[int, ...] = ()
    vio_gap: bool = False
    predicted: bool = False


@dataclass(frozen=True)
class TrackerState:
    tag_map: TagMap
    last_fused: Pose | None = None
    last_fused_time: float | None = None
    last_vio: VioSample | None = None
    update_weight: float = 0.1
    last_output: TrackerOutput | None = None

    def __post_init__(self) -> None:
        if (self.last_fused is None) != (self.last_fused_time is None):
            raise ValueError("last_fused and last_fused_time must be set together")


# --------------------------------------------------------------------------
# building blocks
# --------------------------------------------------------------------------


def _index_detections(detections: Iterable[TagDetection]) -> dict[int, TagDetection]:
    out: dict[int, TagDetection] = {}
    for d in detections:
        if d.tag_id in out:
            raise DuplicateTag(f"tag {d.tag_id} detected more than once")
        out[d.tag_id] = d
    return out


def tag_init(
    detections: Iterable[TagDetection], target_id: int, object_from_target: Pose
) -> TagMap:
    """Record every visible tag's pose relative to the target: ``T_x^y = (T_y^hc)^-1 T_x^hc``."""
    by_id = _index_detections(detections)
    if target_id not in by_id:
        raise TargetMissing(f"target tag {target_id} not among detections")
    if len(by_id) < 2:
        raise ValueError("tag_init needs the target and at least one other tag")
    target = by_id[target_id].pose
    relative = {
        tid: compose(inverse(d.pose), target) for tid, d in by_id.items() if tid != target_id
    }
    return TagMap(target_id, relative, object_from_target)


def trafo3d(tag_in_cam: Pose, target_in_tag: Pose) -> Pose:
    """Target estimate from a non-target tag: ``T_x,y^hc = T_y^hc T_x^y``."""
    return compose(tag_in_cam, target_in_tag)


def tag_init_update(old_map: TagMap, fresh_estimates: Mapping[int, Pose], weight: float) -> TagMap:
    """Blend each stored ``T_x^y`` toward its fresh estimate by ``weight``."""
    if not 0.0 < weight <= 1.0:
        raise ValueError("weight must be in (0, 1]")
    relative = dict(old_map.relative)
    for tid, fresh in fresh_estimates.items():
        if tid not in relative:
            raise UnknownTag(tid)
        relative[tid] = fresh if weight == 1.0 else geom.interpolate(relative[tid], fresh, weight)
    return replace(old_map, relative=relative)


def vio_integrate(prev_fused: Pose, vio_prev: Pose, vio_now: Pose) -> Pose:
    """Dead-reckon a static target: ``T_w^hc(t) T_hc^w(t-1) T_x^hc(t-1)``."""
    return compose(compose(inverse(vio_now), vio_prev), prev_fused)


def predict_camera(pose_world_cam: Pose, twist: Twist, dt: float) -> Pose:
    """Constant-twist camera pose after ``dt``: world-frame translation and
    rotation pre-multiplied by ``exp(angular * dt)``."""
    q = geom.quat_multiply(geom.quat_from_rotvec(twist.angular * dt), pose_world_cam.rotation)
    return Pose(q, pose_world_cam.translation + twist.linear * dt)


def vio_delay_compensate(fused: Pose, vio_now: VioSample, t_d: float) -> Pose:
    """Shift ``fused`` (valid at ``vio_now.time``) forward by ``t_d`` seconds."""
    if t_d < 0:
        raise NegativeDelay(f"t_d={t_d}")
    if t_d == 0:
        return fused
    predicted = predict_camera(vio_now.pose_world_cam, vio_now.twist, t_d)
    return compose(compose(inverse(predicted), vio_now.pose_world_cam), fused)


def delay_computation(capture_time: float, now: float) -> float:
    if now < capture_time - _TIME_EPS:
        raise ClockSkew(f"now={now} precedes capture_time={capture_time}")
    return max(0.0, now - capture_time)


def select_mode(visible: Iterable[int], tag_map: TagMap) -> Mode:
    known = set(tag_map.tag_ids)
    seen = known.intersection(visible)
    k = len(seen)
    if k == tag_map.n_tags:
        return Mode.ALL_TAGS
    if k == 0:
        return Mode.VIO_ONLY
    if tag_map.target_id in seen:
        return Mode.PARTIAL_WITH_TARGET
    return Mode.PARTIAL_WITHOUT_TARGET


# --------------------------------------------------------------------------
# main loop
# --------------------------------------------------------------------------


def initial_state(tag_map: TagMap, cfg: TrackerConfig = TrackerConfig()) -> TrackerState:
    return TrackerState(tag_map=tag_map, update_weight=cfg.update_weight)


def _fuse(
    by_id: Mapping[int, TagDetection], tag_map: TagMap, cfg: TrackerConfig
) -> tuple[Pose, list[int]] | None:
    """RANSAC + average over the target candidates; ``None`` on degenerate consensus."""
    ids: list[int] = []
    candidates: list[Pose] = []
    if tag_map.target_id in by_id:
        # the target's own detection passes through unchanged
        ids.append(tag_map.target_id)
        candidates.append(by_id[tag_map.target_id].pose)
    for tid, rel in tag_map.relative.items():
        if tid in by_id:
            ids.append(tid)
            candidates.append(trafo3d(by_id[tid].pose, rel))
    prefer = 0 if ids and ids[0] == tag_map.target_id else None
    try:
        flags, fused = geom.ransac_poses(candidates, cfg.ransac, cfg.rng_seed, prefer=prefer)
    except Degenerate:
        return None
    return fused, [tid for tid, keep in zip(ids, flags) if keep]


def step(
    state: TrackerState,
    detections: Iterable[TagDetection],
    vio: VioStream,
    now: float,
    cfg: TrackerConfig = TrackerConfig(),
    capture_time: float | None = None,
) -> tuple[TrackerState, TrackerOutput]:
    """Consume one camera frame and return the object pose at ``now``.

    ``capture_time`` is only needed for frames without any detection; it
    defaults to ``now``.
    """
    if state is None or state.tag_map is None:
        raise NotInitialized("call tag_init before step")
    tag_map = state.tag_map
    known = set(tag_map.tag_ids)
    by_id = {tid: d for tid, d in _index_detections(detections).items() if tid in known}

    if by_id:
        times = {d.capture_time for d in by_id.values()}
        if len(times) != 1:
            raise ValueError("detections in one frame must share a capture_time")
        t_ref = times.pop()
    else:
        t_ref = now if capture_time is None else capture_time

    mode = select_mode(by_id, tag_map)
    inliers: list[int] = []
    fused: Pose | None = None
    new_map = tag_map

    if mode is not Mode.VIO_ONLY:
        result = _fuse(by_id, tag_map, cfg)
        if result is not None:
            fused, inliers = result
            if mode is Mode.ALL_TAGS:
                fresh = {
                    tid: compose(inverse(by_id[tid].pose), fused)
                    for tid in inliers
                    if tid != tag_map.target_id
                }
                new_map = tag_init_update(tag_map, fresh, state.update_weight)
        elif tag_map.target_id in by_id:
            fused, inliers = by_id[tag_map.target_id].pose, [tag_map.target_id]
        else:
            mode = Mode.VIO_ONLY

    try:
        if mode is Mode.VIO_ONLY:
            if state.last_fused is None:
                raise NotInitialized("no previous estimate to dead-reckon from")
            if cfg.vio_integration:
                fused = vio_integrate(
                    state.last_fused, vio.pose_at(state.last_fused_time), vio.pose_at(t_ref)
                )
            else:
                # hold the last estimate
                fused, t_ref = state.last_fused, state.last_fused_time

        assert fused is not None
        t_d = delay_computation(t_ref, now)
        vio_ref = vio.sample_at(t_ref) if (cfg.delay_compensation or cfg.vio_integration) else None
        if cfg.delay_compensation:
            assert vio_ref is not None
            fused_now = vio_delay_compensate(fused, vio_ref, t_d)
            delay_applied = t_d
        else:
            fused_now, delay_applied = fused, 0.0
        vio_gap = False
    except VioGap as exc:
        log.warning("VIO gap at t=%.4f: %s", now, exc)
        if mode is Mode.VIO_ONLY:
            fused, t_ref = state.last_fused, state.last_fused_time
        # a fresh tag fusion is kept, only its delay compensation is skipped
        fused_now, delay_applied, vio_ref, vio_gap = fused, 0.0, None, True

    output = TrackerOutput(
        object_pose_cam=compose(fused_now, tag_map.object_from_target),
        fused_target=fused_now,
        mode=mode,
        delay_applied=delay_applied,
        time=now,
        inliers=tuple(inliers),
        vio_gap=vio_gap,
    )
    new_state = TrackerState(
        tag_map=new_map,
        last_fused=fused,
        last_fused_time=t_ref,
        last_vio=vio_ref if vio_ref is not None else state.last_vio,
        update_weight=state.update_weight,
        last_output=output,
    )
    return new_state, output


def predict(
    state: TrackerState, vio: VioStream, now: float, cfg: TrackerConfig = TrackerConfig()
) -> tuple[TrackerState, TrackerOutput | None]:
    """Carry the last output forward to ``now`` with VIO relative motion.

    Returns ``None`` for the output when VIO integration is disabled or the
    stream cannot bracket the interval; the caller then keeps displaying the
    previous output.
    """
    last = state.last_output
    if last is None:
        raise NotInitialized("predict before the first step")
    if not cfg.vio_integration:
        return state, None
    try:
        moved = vio_integrate(last.fused_target, vio.pose_at(last.time), vio.pose_at(now))
    except VioGap:
        return state, None
    output = replace(
        last,
        object_pose_cam=compose(moved, state.tag_map.object_from_target),
        fused_target=moved,
        time=now,
        predicted=True,
    )
    return replace(state, last_output=output), output


def hold_output(last: TrackerOutput, now: float) -> TrackerOutput:
    """The previous output re-stamped at ``now`` (display keeps the last pose)."""
    return replace(last, time=now, predicted=True)


__all__ = [
    "Mode",
    "TagDetection",
    "VioSample",
    "VioStream",
    "TagMap",
    "TrackerConfig",
    "TrackerOutput",
    "TrackerState",
    "tag_init",
    "trafo3d",
    "tag_init_update",
    "vio_integrate",
    "predict_camera",
    "vio_delay_compensate",
    "delay_computation",
    "select_mode",
    "initial_state",
    "step",
    "predict",
    "hold_output",
]
