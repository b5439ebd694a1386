from __future__ import annotations

import itertools
import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.spatial.transform import Rotation, Slerp

from marker_fusion import tracker as tr
from marker_fusion.errors import (
    ClockSkew,
    DuplicateTag,
    NegativeDelay,
    NotInitialized,
    TargetMissing,
    UnknownTag,
    VioGap,
)
from marker_fusion.geom import Pose, Twist, compose, inverse, pose_distance
from marker_fusion.sim import ConstantTwistTrajectory
from marker_fusion.tracker import Mode, TagDetection, TrackerConfig, VioSample, VioStream
from oracle import mat, mat_err, mat_inv, perturb, random_pose


def err(a: Pose, b: Pose) -> float:
    d = pose_distance(a, b)
    return max(d.translation_err, d.rotation_err)


def layout(n: int, rng: np.random.Generator) -> dict[int, Pose]:
    """Tag poses in the object frame, spread over a 10 cm plate."""
    return {i: Pose.from_rotvec([0, 0, rng.uniform(-1, 1)], [*rng.uniform(-0.05, 0.05, 2), 0.0]) for i in range(n)}


def detections(tags: dict[int, Pose], obj_in_cam: Pose, ids, t: float = 0.0) -> list[TagDetection]:
    return [TagDetection(i, compose(obj_in_cam, tags[i]), t, t) for i in ids]


def static_vio(t0: float = 0.0, t1: float = 10.0, rate: float = 200.0, pose: Pose = Pose.identity()) -> VioStream:
    n = int(round((t1 - t0) * rate))
    return VioStream([VioSample(t0 + i / rate, pose, Twist.zero()) for i in range(n + 1)])


def twist_vio(traj, t1: float, rate: float = 200.0) -> VioStream:
    n = int(round(t1 * rate))
    return VioStream([VioSample(i / rate, traj.pose(i / rate), traj.twist(i / rate)) for i in range(n + 1)])


def init(tags: dict[int, Pose], obj_in_cam: Pose, target: int = 0, cfg: TrackerConfig = TrackerConfig()):
    tag_map = tr.tag_init(detections(tags, obj_in_cam, tags), target, inverse(tags[target]))
    return tr.initial_state(tag_map, cfg)


# ---- detections and streams --------------------------------------------------


def test_detection_validation():
    with pytest.raises(ValueError):
        TagDetection(-1, Pose.identity(), 0.0, 0.0)
    with pytest.raises(ValueError):
        TagDetection(1, Pose.identity(), 1.0, 0.5)


def test_vio_stream_ordering_and_coverage():
    s = VioSample(0.0, Pose.identity(), Twist.zero())
    with pytest.raises(ValueError):
        VioStream([s, s])
    vio = static_vio(0.0, 1.0)
    with pytest.raises(VioGap):
        vio.sample_at(1.5)
    with pytest.raises(VioGap):
        vio.sample_at(-0.1)
    view = vio.until(0.5)
    assert view.latest_time == pytest.approx(0.5)
    with pytest.raises(VioGap):
        view.sample_at(0.6)
    with pytest.raises(VioGap):
        VioStream([]).latest()


def test_vio_interpolation_matches_scipy():
    rng = np.random.default_rng(0)
    a, b = random_pose(rng), random_pose(rng)
    tw_a, tw_b = Twist([1, 0, 0], [0, 0, 1]), Twist([0, 1, 0], [0, 0, 3])
    vio = VioStream([VioSample(0.0, a, tw_a), VioSample(0.1, b, tw_b)])
    for s in (0.0, 0.25, 0.5, 0.9, 1.0):
        out = vio.sample_at(0.1 * s)
        ref = Slerp([0, 1], Rotation.from_matrix([mat(a)[:3, :3], mat(b)[:3, :3]]))(s).as_matrix()
        assert np.allclose(out.pose_world_cam.rotation_matrix(), ref, atol=1e-9)
        assert np.allclose(out.pose_world_cam.translation, (1 - s) * a.translation + s * b.translation, atol=1e-12)
        assert np.allclose(out.twist.angular, [0, 0, 1 + 2 * s], atol=1e-12)


# ---- tag_init ----------------------------------------------------------------


def test_tag_init_examples():
    I = Pose.identity()
    m = tr.tag_init([TagDetection(0, I, 0, 0), TagDetection(1, I, 0, 0)], 0, I)
    assert m.relative[1] == I
    m = tr.tag_init(
        [TagDetection(0, Pose.from_translation([1, 0, 0]), 0, 0), TagDetection(1, Pose.from_translation([0, 1, 0]), 0, 0)],
        0,
        I,
    )
    assert np.allclose(m.relative[1].translation, [1, -1, 0], atol=0)
    assert m.tag_ids == [0, 1] and m.n_tags == 2


def test_tag_init_matches_matrix_oracle():
    rng = np.random.default_rng(1)
    dets = [TagDetection(i, random_pose(rng), 0, 0) for i in range(5)]
    m = tr.tag_init(dets, 2, Pose.identity())
    assert 2 not in m.relative
    for d in dets:
        if d.tag_id != 2:
            assert mat_err(m.relative[d.tag_id], mat_inv(mat(d.pose)) @ mat(dets[2].pose)) < 1e-12


def test_tag_init_errors():
    I = Pose.identity()
    with pytest.raises(TargetMissing):
        tr.tag_init([TagDetection(1, I, 0, 0), TagDetection(2, I, 0, 0)], 0, I)
    with pytest.raises(DuplicateTag):
        tr.tag_init([TagDetection(0, I, 0, 0), TagDetection(0, I, 0, 0)], 0, I)
    with pytest.raises(ValueError):
        tr.TagMap(0, {0: I}, I)


# ---- tag_init_update ---------------------------------------------------------


def test_tag_init_update_examples():
    I = Pose.identity()
    old = tr.TagMap(0, {1: I, 2: Pose.from_translation([0, 0, 1])}, I)
    fresh = {1: Pose.from_rotvec([0, 0, 0.3], [0.1, 0, 0]), 2: Pose.from_translation([0, 1, 0])}
    assert tr.tag_init_update(old, fresh, 1.0).relative == fresh
    same = tr.tag_init_update(old, dict(old.relative), 0.37)
    assert all(err(same.relative[k], old.relative[k]) < 1e-15 for k in old.relative)
    half = tr.tag_init_update(old, {1: Pose.from_translation([0.02, 0, 0])}, 0.5)
    assert np.allclose(half.relative[1].translation, [0.01, 0, 0], atol=1e-15)
    assert half.relative[2] == old.relative[2]
    with pytest.raises(UnknownTag):
        tr.tag_init_update(old, {7: I}, 0.5)
    with pytest.raises(ValueError):
        tr.tag_init_update(old, {}, 0.0)


# ---- VIO dead reckoning -----------------------------------------------------


def test_vio_integrate_examples():
    rng = np.random.default_rng(2)
    p = random_pose(rng)
    v = random_pose(rng)
    assert err(tr.vio_integrate(p, v, v), p) < 1e-12
    out = tr.vio_integrate(Pose.from_translation([1, 0, 0]), Pose.identity(), Pose.from_translation([0.1, 0, 0]))
    assert np.allclose(out.translation, [0.9, 0, 0], atol=1e-15)


def test_vio_integrate_world_oracle():
    rng = np.random.default_rng(3)
    for _ in range(100):
        obj_w, cam0, cam1 = random_pose(rng), random_pose(rng), random_pose(rng)
        prev = compose(inverse(cam0), obj_w)
        out = tr.vio_integrate(prev, cam0, cam1)
        assert mat_err(out, mat_inv(mat(cam1)) @ mat(obj_w)) < 1e-12


# ---- delay compensation -----------------------------------------------------


def test_delay_compensation_examples():
    rng = np.random.default_rng(4)
    p = random_pose(rng)
    s = VioSample(0.0, random_pose(rng), Twist([1, 2, 3], [0.1, 0.2, 0.3]))
    assert tr.vio_delay_compensate(p, s, 0.0) == p
    fused = Pose.from_translation([1.0, 0, 0])
    moving = VioSample(0.0, Pose.identity(), Twist([1.0, 0, 0], [0, 0, 0]))
    out = tr.vio_delay_compensate(fused, moving, 0.1)
    assert np.allclose(out.translation, [0.9, 0, 0], atol=1e-15)
    with pytest.raises(NegativeDelay):
        tr.vio_delay_compensate(p, s, -0.01)


def test_delay_compensation_constant_twist_oracle():
    rng = np.random.default_rng(5)
    for _ in range(50):
        traj = ConstantTwistTrajectory(random_pose(rng), Twist(rng.normal(size=3), rng.normal(size=3)))
        obj_w = random_pose(rng)
        t = rng.uniform(0, 2)
        fused = compose(inverse(traj.pose(t)), obj_w)
        out = tr.vio_delay_compensate(fused, VioSample(t, traj.pose(t), traj.twist(t)), 0.05)
        truth = compose(inverse(traj.pose(t + 0.05)), obj_w)
        assert err(out, truth) < 1e-6


def test_delay_computation():
    assert tr.delay_computation(10.0, 10.0) == 0.0
    assert tr.delay_computation(10.0, 10.08) == pytest.approx(0.08, abs=1e-12)
    with pytest.raises(ClockSkew):
        tr.delay_computation(10.0, 9.9)


# ---- modes -------------------------------------------------------------------


def test_mode_is_function_of_visible_set_exhaustive():
    rng = np.random.default_rng(6)
    tags = layout(4, rng)
    obj = Pose.from_rotvec([math.pi, 0, 0], [0.02, -0.01, 0.6])
    state = init(tags, obj, target=0)
    state, _ = tr.step(state, detections(tags, obj, tags), static_vio(), 0.0)
    for r in range(5):
        for subset in itertools.combinations(range(4), r):
            seen = set(subset)
            if len(seen) == 4:
                expected = Mode.ALL_TAGS
            elif not seen:
                expected = Mode.VIO_ONLY
            elif 0 in seen:
                expected = Mode.PARTIAL_WITH_TARGET
            else:
                expected = Mode.PARTIAL_WITHOUT_TARGET
            assert tr.select_mode(seen, state.tag_map) is expected
            _, out = tr.step(state, detections(tags, obj, subset, 0.5), static_vio(), 0.5)
            assert out.mode is expected
            assert err(out.object_pose_cam, obj) < 1e-9
            assert set(out.inliers) == (seen or set())


def test_unknown_tags_are_ignored():
    rng = np.random.default_rng(7)
    tags = layout(3, rng)
    obj = Pose.from_translation([0, 0, 0.5])
    state = init(tags, obj)
    dets = detections(tags, obj, [1]) + [TagDetection(99, random_pose(rng), 0.0, 0.0)]
    _, out = tr.step(state, dets, static_vio(), 0.0)
    assert out.mode is Mode.PARTIAL_WITHOUT_TARGET


# ---- step examples -----------------------------------------------------------


def test_step_exact_static():
    rng = np.random.default_rng(8)
    tags = layout(8, rng)
    obj = Pose.from_rotvec([math.pi, 0.1, 0], [0.05, 0.0, 0.8])
    state = init(tags, obj)
    for k in range(10):
        state, out = tr.step(state, detections(tags, obj, tags, k * 0.04), static_vio(), k * 0.04)
        assert out.mode is Mode.ALL_TAGS
        assert err(out.object_pose_cam, obj) < 1e-9


def test_step_flags_corrupted_tag():
    rng = np.random.default_rng(9)
    tags = layout(8, rng)
    obj = Pose.from_rotvec([math.pi, 0, 0], [0.0, 0.0, 0.7])
    state = init(tags, obj)
    dets = [replace(d, pose=perturb(d.pose, rng, 1e-3, math.radians(0.1))) for d in detections(tags, obj, tags)]
    dets[5] = replace(dets[5], pose=compose(Pose.from_translation([0.5, 0, 0]), dets[5].pose))
    state2, out = tr.step(state, dets, static_vio(), 0.0)
    assert out.mode is Mode.ALL_TAGS
    assert 5 not in out.inliers and len(out.inliers) == 7
    assert np.linalg.norm(out.object_pose_cam.translation - obj.translation) < 2e-3
    # the corrupted tag's stored relative pose is left alone
    assert state2.tag_map.relative[5] == state.tag_map.relative[5]


def test_step_bridges_dropout_with_constant_twist():
    traj = ConstantTwistTrajectory(
        Pose.from_rotvec([math.pi, 0, 0], [0, 0, 1.0]), Twist([0.1, -0.05, 0.02], [0.05, 0.1, -0.2])
    )
    vio = twist_vio(traj, 3.0)
    rng = np.random.default_rng(10)
    tags = layout(4, rng)
    truth = lambda t: compose(inverse(traj.pose(t)), Pose.identity())
    state = init(tags, truth(0.0))
    state, _ = tr.step(state, detections(tags, truth(0.0), tags, 0.0), vio.until(0.0), 0.0)
    worst = 0.0
    for k in range(1, 51):
        t = k * 0.04
        state, out = tr.step(state, [], vio.until(t), t, capture_time=t)
        assert out.mode is Mode.VIO_ONLY
        worst = max(worst, err(out.object_pose_cam, truth(t)))
    assert worst < 1e-6


def test_frozen_baseline_grows_with_velocity():
    traj = ConstantTwistTrajectory(Pose.from_rotvec([math.pi, 0, 0], [0, 0, 1.0]), Twist([0.2, 0, 0], [0, 0, 0]))
    vio = twist_vio(traj, 3.0)
    tags = layout(3, np.random.default_rng(11))
    truth = lambda t: inverse(traj.pose(t))
    cfg = TrackerConfig(vio_integration=False, delay_compensation=False)
    state = init(tags, truth(0.0), cfg=cfg)
    state, _ = tr.step(state, detections(tags, truth(0.0), tags), vio.until(0.0), 0.0, cfg)
    state, out = tr.step(state, [], vio.until(1.0), 1.0, cfg, capture_time=1.0)
    assert out.mode is Mode.VIO_ONLY
    assert np.linalg.norm(out.object_pose_cam.translation - truth(1.0).translation) == pytest.approx(0.2, rel=1e-9)


@pytest.mark.parametrize("compensate", [True, False])
def test_step_delay_compensation(compensate):
    traj = ConstantTwistTrajectory(Pose.from_rotvec([math.pi, 0, 0], [0, 0, 1.0]), Twist([0, 0, -0.5], [0, 0, 0]))
    vio = twist_vio(traj, 2.0)
    tags = layout(3, np.random.default_rng(12))
    truth = lambda t: inverse(traj.pose(t))
    cfg = TrackerConfig(delay_compensation=compensate)
    state = init(tags, truth(0.0), cfg=cfg)
    dets = detections(tags, truth(1.0), tags, 1.0)
    _, out = tr.step(state, dets, vio.until(1.1), 1.1, cfg)
    e = np.linalg.norm(out.object_pose_cam.translation - truth(1.1).translation)
    if compensate:
        assert e < 1e-6 and out.delay_applied == pytest.approx(0.1)
    else:
        assert e == pytest.approx(0.05, rel=0.1) and out.delay_applied == 0.0


def test_step_is_deterministic():
    rng = np.random.default_rng(13)
    tags = layout(6, rng)
    obj = Pose.from_translation([0, 0, 0.5])
    frames = [
        [replace(d, pose=perturb(d.pose, rng, 0.01, 0.05)) for d in detections(tags, obj, tags, 0.04 * k)]
        for k in range(20)
    ]

    def run():
        state = init(tags, obj)
        outs = []
        for k, f in enumerate(frames):
            state, o = tr.step(state, f, static_vio(), 0.04 * k)
            outs.append(o)
        return outs

    a, b = run(), run()
    assert all(x.object_pose_cam == y.object_pose_cam and x.inliers == y.inliers for x, y in zip(a, b))


def test_step_errors():
    tags = layout(3, np.random.default_rng(14))
    obj = Pose.from_translation([0, 0, 0.5])
    state = init(tags, obj)
    with pytest.raises(NotInitialized):
        tr.step(None, [], static_vio(), 0.0)
    with pytest.raises(NotInitialized):
        tr.step(state, [], static_vio(), 0.0)
    with pytest.raises(ClockSkew):
        tr.step(state, detections(tags, obj, tags, 1.0), static_vio(), 0.5)
    with pytest.raises(DuplicateTag):
        tr.step(state, detections(tags, obj, [0, 0]), static_vio(), 0.0)


def test_vio_gap_degrades_gracefully():
    tags = layout(3, np.random.default_rng(15))
    obj = Pose.from_translation([0, 0, 0.5])
    state = init(tags, obj)
    state, first = tr.step(state, detections(tags, obj, tags, 0.0), static_vio(0, 1), 0.0)
    # frame captured before VIO coverage: fusion is kept, compensation skipped
    late = static_vio(5.0, 6.0)
    s2, out = tr.step(state, detections(tags, obj, tags, 2.0), late, 5.5)
    assert out.vio_gap and out.delay_applied == 0.0 and out.mode is Mode.ALL_TAGS
    assert err(out.object_pose_cam, obj) < 1e-9
    # no tags and no VIO bracket: hold the last fused estimate
    _, out = tr.step(state, [], late, 5.5, capture_time=5.5)
    assert out.vio_gap and out.mode is Mode.VIO_ONLY and out.delay_applied == 0.0
    assert err(out.fused_target, state.last_fused) == 0.0


def test_degenerate_consensus_falls_back_to_target():
    tags = layout(3, np.random.default_rng(16))
    obj = Pose.from_translation([0, 0, 0.5])
    state = init(tags, obj, cfg=TrackerConfig(ransac=tr.RansacConfig(min_inliers=2)))
    cfg = TrackerConfig(ransac=tr.RansacConfig(min_inliers=2))
    dets = detections(tags, obj, [0, 1])
    dets[1] = replace(dets[1], pose=compose(Pose.from_translation([0.5, 0, 0]), dets[1].pose))
    _, out = tr.step(state, dets, static_vio(), 0.0, cfg)
    assert out.mode is Mode.PARTIAL_WITH_TARGET and out.inliers == (0,)
    assert err(out.object_pose_cam, obj) < 1e-12
    state, _ = tr.step(state, detections(tags, obj, tags), static_vio(), 0.0, cfg)
    dets = detections(tags, obj, [1, 2])
    dets[1] = replace(dets[1], pose=compose(Pose.from_translation([0.5, 0, 0]), dets[1].pose))
    _, out = tr.step(state, dets, static_vio(), 0.1, cfg)
    assert out.mode is Mode.VIO_ONLY


def test_map_refines_toward_truth():
    rng = np.random.default_rng(17)
    tags = layout(4, rng)
    obj = Pose.from_translation([0, 0, 0.5])
    bad = [replace(d, pose=perturb(d.pose, rng, 0.01, 0.02)) for d in detections(tags, obj, tags)]
    bad[0] = detections(tags, obj, [0])[0]
    state = tr.initial_state(tr.tag_init(bad, 0, inverse(tags[0])))
    before = max(err(state.tag_map.relative[k], compose(inverse(tags[k]), tags[0])) for k in (1, 2, 3))
    for k in range(300):
        state, _ = tr.step(state, detections(tags, obj, tags, 0.04 * k), static_vio(), 0.04 * k)
    after = max(err(state.tag_map.relative[k], compose(inverse(tags[k]), tags[0])) for k in (1, 2, 3))
    assert after < 0.05 * before


# ---- predict -----------------------------------------------------------------


def test_predict_follows_camera_motion():
    traj = ConstantTwistTrajectory(Pose.from_rotvec([math.pi, 0, 0], [0, 0, 1.0]), Twist([0.1, 0, 0.05], [0, 0.2, 0]))
    vio = twist_vio(traj, 1.0)
    tags = layout(3, np.random.default_rng(18))
    truth = lambda t: inverse(traj.pose(t))
    state = init(tags, truth(0.0))
    state, _ = tr.step(state, detections(tags, truth(0.0), tags), vio.until(0.0), 0.0)
    for k in range(1, 8):
        t = k / 200
        state, out = tr.predict(state, vio.until(t), t)
        assert out.predicted and err(out.object_pose_cam, truth(t)) < 1e-9
    _, none = tr.predict(state, vio, 0.2, TrackerConfig(vio_integration=False))
    assert none is None
    with pytest.raises(NotInitialized):
        tr.predict(tr.initial_state(state.tag_map), vio, 0.1)


def test_hold_output():
    out = tr.TrackerOutput(Pose.identity(), Pose.identity(), Mode.ALL_TAGS, 0.0, 1.0)
    held = tr.hold_output(out, 2.0)
    assert held.time == 2.0 and held.predicted and held.object_pose_cam == out.object_pose_cam


@given(st.floats(0.0, 0.3), st.integers(0, 1000))
def test_uncompensated_error_scales_with_delay(t_d, seed):
    rng = np.random.default_rng(seed)
    v = rng.normal(size=3)
    v *= 0.5 / np.linalg.norm(v)
    sample = VioSample(0.0, random_pose(rng), Twist(v, [0, 0, 0]))
    fused = random_pose(rng)
    out = tr.vio_delay_compensate(fused, sample, t_d)
    assert np.linalg.norm(out.translation - fused.translation) == pytest.approx(0.5 * t_d, abs=1e-12)
