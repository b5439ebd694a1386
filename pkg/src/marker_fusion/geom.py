"""Rigid-transform algebra, pose averaging and pose-set RANSAC.

Conventions
-----------
A :class:`Pose` ``T_a^b`` stores the pose of frame ``a`` expressed in frame
``b``: a point ``p_a`` maps to ``p_b = R @ p_a + t``. ``compose(T_b^c, T_a^b)``
gives ``T_a^c``, so chains read left to right exactly like the written
products ``T_hc^tcp T_object^hc``.

Quaternions are Hamilton, stored ``(w, x, y, z)`` and kept in a canonical
sign (``w >= 0``; ties broken on the first non-zero vector component) so that
serialized poses are stable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import Degenerate, EmptySet

_SMALL_ANGLE = 1e-8


# --------------------------------------------------------------------------
# quaternion helpers (plain functions on length-4 arrays)
# --------------------------------------------------------------------------


def quat_multiply(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return np.array(
        [
            aw * bw - ax * bx - ay * by - az * bz,
            aw * bx + ax * bw + ay * bz - az * by,
            aw * by - ax * bz + ay * bw + az * bx,
            aw * bz + ax * by - ay * bx + az * bw,
        ]
    )


def quat_conjugate(q: np.ndarray) -> np.ndarray:
    return np.array([q[0], -q[1], -q[2], -q[3]])


def quat_rotate(q: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Rotate vector ``v`` by unit quaternion ``q``."""
    # v + 2w (u x v) + 2 u x (u x v), spelled out: np.cross is slow on 3-vectors
    w, x, y, z = (float(c) for c in q)
    vx, vy, vz = (float(c) for c in v)
    cx = y * vz - z * vy
    cy = z * vx - x * vz
    cz = x * vy - y * vx
    return np.array(
        [
            vx + 2.0 * (w * cx + y * cz - z * cy),
            vy + 2.0 * (w * cy + z * cx - x * cz),
            vz + 2.0 * (w * cz + x * cy - y * cx),
        ]
    )


def canonical_quat(q: np.ndarray) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    if q[0] < 0.0:
        return -q
    if q[0] == 0.0:
        for c in q[1:]:
            if c != 0.0:
                return -q if c < 0.0 else q
    return q


def quat_from_rotvec(rotvec: Sequence[float]) -> np.ndarray:
    r = np.asarray(rotvec, dtype=float)
    theta = math.sqrt(float(r @ r))
    if theta < _SMALL_ANGLE:
        # sin(x/2)/x ~ 1/2 - x^2/48
        return np.concatenate(([1.0 - theta * theta / 8.0], r * (0.5 - theta * theta / 48.0)))
    half = 0.5 * theta
    return np.concatenate(([math.cos(half)], r * (math.sin(half) / theta)))


def quat_to_rotvec(q: np.ndarray) -> np.ndarray:
    q = canonical_quat(q)
    v = q[1:]
    s = math.sqrt(float(v @ v))
    if s < _SMALL_ANGLE:
        return v * (2.0 / q[0]) if q[0] != 0.0 else v * 2.0
    theta = 2.0 * math.atan2(s, q[0])
    return v * (theta / s)


def quat_to_matrix(q: np.ndarray) -> np.ndarray:
    w, x, y, z = q
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


def quat_from_matrix(m: np.ndarray) -> np.ndarray:
    """Shepperd's method; picks the numerically largest pivot."""
    m = np.asarray(m, dtype=float)
    tr = m[0, 0] + m[1, 1] + m[2, 2]
    diag = (tr, m[0, 0], m[1, 1], m[2, 2])
    k = int(np.argmax(diag))
    if k == 0:
        s = 2.0 * math.sqrt(max(1.0 + tr, 0.0))
        q = [0.25 * s, (m[2, 1] - m[1, 2]) / s, (m[0, 2] - m[2, 0]) / s, (m[1, 0] - m[0, 1]) / s]
    elif k == 1:
        s = 2.0 * math.sqrt(max(1.0 + m[0, 0] - m[1, 1] - m[2, 2], 0.0))
        q = [(m[2, 1] - m[1, 2]) / s, 0.25 * s, (m[0, 1] + m[1, 0]) / s, (m[0, 2] + m[2, 0]) / s]
    elif k == 2:
        s = 2.0 * math.sqrt(max(1.0 - m[0, 0] + m[1, 1] - m[2, 2], 0.0))
        q = [(m[0, 2] - m[2, 0]) / s, (m[0, 1] + m[1, 0]) / s, 0.25 * s, (m[1, 2] + m[2, 1]) / s]
    else:
        s = 2.0 * math.sqrt(max(1.0 - m[0, 0] - m[1, 1] + m[2, 2], 0.0))
        q = [(m[1, 0] - m[0, 1]) / s, (m[0, 2] + m[2, 0]) / s, (m[1, 2] + m[2, 1]) / s, 0.25 * s]
    q = np.array(q)
    return canonical_quat(q / np.linalg.norm(q))


def quat_slerp(q0: np.ndarray, q1: np.ndarray, s: float) -> np.ndarray:
    """Geodesic interpolation, ``s`` in [0, 1] (extrapolates outside)."""
    if float(q0 @ q1) < 0.0:
        q1 = -q1
    rel = quat_multiply(quat_conjugate(q0), q1)
    q = quat_multiply(q0, quat_from_rotvec(s * quat_to_rotvec(rel)))
    return canonical_quat(q / np.linalg.norm(q))


def quat_to_euler_zyx(q: np.ndarray) -> tuple[float, float, float]:
    """Return ``(roll, pitch, yaw)`` for the ZYX (yaw-pitch-roll) convention."""
    w, x, y, z = q
    roll = math.atan2(2.0 * (w * x + y * z), 1.0 - 2.0 * (x * x + y * y))
    sinp = 2.0 * (w * y - z * x)
    pitch = math.asin(min(1.0, max(-1.0, sinp)))
    yaw = math.atan2(2.0 * (w * z + x * y), 1.0 - 2.0 * (y * y + z * z))
    return roll, pitch, yaw


# --------------------------------------------------------------------------
# value types
# --------------------------------------------------------------------------


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Pose:
    """Rigid transform: unit quaternion ``rotation`` (w, x, y, z) and ``translation`` [m]."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self) -> None:
        q = np.array(self.rotation, dtype=float).reshape(4)
        t = np.array(self.translation, dtype=float).reshape(3)
        n = math.sqrt(float(q @ q))
        if not (math.isfinite(n) and n > 0.0) or not math.isfinite(t[0] + t[1] + t[2]):
            raise ValueError(f"invalid pose: rotation={q}, translation={t}")
        if abs(n - 1.0) > 1e-15:
            q = q / n
        object.__setattr__(self, "rotation", _frozen(canonical_quat(q).copy()))
        object.__setattr__(self, "translation", _frozen(t))

    @classmethod
    def identity(cls) -> Pose:
        return cls(np.array([1.0, 0.0, 0.0, 0.0]), np.zeros(3))

    @classmethod
    def from_translation(cls, t: Sequence[float]) -> Pose:
        return cls(np.array([1.0, 0.0, 0.0, 0.0]), t)

    @classmethod
    def from_rotvec(cls, rotvec: Sequence[float], translation: Sequence[float] = (0.0, 0.0, 0.0)) -> Pose:
        return cls(quat_from_rotvec(rotvec), translation)

    @classmethod
    def from_matrix(cls, m: np.ndarray) -> Pose:
        m = np.asarray(m, dtype=float)
        return cls(quat_from_matrix(m[:3, :3]), m[:3, 3])

    def as_matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = quat_to_matrix(self.rotation)
        m[:3, 3] = self.translation
        return m

    def rotation_matrix(self) -> np.ndarray:
        return quat_to_matrix(self.rotation)

    def rotvec(self) -> np.ndarray:
        return quat_to_rotvec(self.rotation)

    def apply(self, point: Sequence[float]) -> np.ndarray:
        return quat_rotate(self.rotation, np.asarray(point, dtype=float)) + self.translation

    def to_dict(self) -> dict:
        return {
            "translation": [float(v) for v in self.translation],
            "quaternion": [float(v) for v in self.rotation],
        }

    @classmethod
    def from_dict(cls, d: dict) -> Pose:
        return cls(d["quaternion"], d["translation"])

    def __repr__(self) -> str:
        q = ", ".join(f"{v:.6g}" for v in self.rotation)
        t = ", ".join(f"{v:.6g}" for v in self.translation)
        return f"Pose(q=[{q}], t=[{t}])"

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Pose):
            return NotImplemented
        return bool(
            np.array_equal(self.rotation, other.rotation)
            and np.array_equal(self.translation, other.translation)
        )

    def __hash__(self) -> int:
        return hash((self.rotation.tobytes(), self.translation.tobytes()))


@dataclass(frozen=True)
class Twist:
    """Linear [m/s] and angular [rad/s] velocity, both in the world frame."""

    linear: np.ndarray
    angular: np.ndarray

    def __post_init__(self) -> None:
        v = np.array(self.linear, dtype=float).reshape(3)
        w = np.array(self.angular, dtype=float).reshape(3)
        if not (np.all(np.isfinite(v)) and np.all(np.isfinite(w))):
            raise ValueError("twist components must be finite")
        object.__setattr__(self, "linear", _frozen(v))
        object.__setattr__(self, "angular", _frozen(w))

    @classmethod
    def zero(cls) -> Twist:
        return cls(np.zeros(3), np.zeros(3))


@dataclass(frozen=True)
class PoseError:
    translation_err: float
    rotation_err: float


# --------------------------------------------------------------------------
# operations
# --------------------------------------------------------------------------


def compose(a: Pose, b: Pose) -> Pose:
    """Return ``a ∘ b`` (apply ``b`` first, then ``a``)."""
    q = quat_multiply(a.rotation, b.rotation)
    t = quat_rotate(a.rotation, b.translation) + a.translation
    return Pose(q, t)


def chain(*poses: Pose) -> Pose:
    """Left-to-right product of any number of poses."""
    if not poses:
        return Pose.identity()
    out = poses[0]
    for p in poses[1:]:
        out = compose(out, p)
    return out


def inverse(p: Pose) -> Pose:
    qc = quat_conjugate(p.rotation)
    return Pose(qc, -quat_rotate(qc, p.translation))


def rotation_angle(qa: np.ndarray, qb: np.ndarray) -> float:
    """Geodesic angle between two unit quaternions, insensitive to sign."""
    if float(np.dot(qa, qb)) < 0.0:
        qb = -qb
    # chordal form: exact zero for equal inputs, well conditioned everywhere
    return 4.0 * math.atan2(float(np.linalg.norm(qa - qb)), float(np.linalg.norm(qa + qb)))


def pose_distance(a: Pose, b: Pose) -> PoseError:
    return PoseError(
        translation_err=float(np.linalg.norm(a.translation - b.translation)),
        rotation_err=rotation_angle(a.rotation, b.rotation),
    )


def interpolate(a: Pose, b: Pose, s: float) -> Pose:
    """Linear translation / spherical rotation blend from ``a`` (s=0) to ``b`` (s=1)."""
    t = a.translation + s * (b.translation - a.translation)
    return Pose(quat_slerp(a.rotation, b.rotation, s), t)


def average_poses(poses: Iterable[Pose]) -> Pose:
    """Arithmetic translation mean plus sign-aligned chordal quaternion mean.

    Quaternions are flipped into the hemisphere of the first element before
    summation, then renormalized.
    """
    poses = list(poses)
    if not poses:
        raise EmptySet("average_poses needs at least one pose")
    if len(poses) == 1:
        return poses[0]
    qs = np.array([p.rotation for p in poses])
    ts = np.array([p.translation for p in poses])
    signs = np.where(qs @ qs[0] < 0.0, -1.0, 1.0)
    q = (qs * signs[:, None]).sum(axis=0)
    return Pose(q, ts.mean(axis=0))


@dataclass(frozen=True)
class RansacConfig:
    trans_thresh: float = 0.03
    rot_thresh: float = 0.1
    min_inliers: int = 1
    exhaustive_limit: int = 12
    max_iterations: int = 64

    def __post_init__(self) -> None:
        if self.trans_thresh <= 0 or self.rot_thresh <= 0:
            raise ValueError("RANSAC thresholds must be > 0")
        if self.min_inliers < 1:
            raise ValueError("min_inliers must be >= 1")


def consensus_set(poses: Sequence[Pose], hypothesis: Pose, cfg: RansacConfig) -> np.ndarray:
    """Boolean mask of poses within both thresholds of ``hypothesis``."""
    flags = np.zeros(len(poses), dtype=bool)
    for j, p in enumerate(poses):
        d = pose_distance(hypothesis, p)
        flags[j] = d.translation_err <= cfg.trans_thresh and d.rotation_err <= cfg.rot_thresh
    return flags


def ransac_poses(
    estimates: Sequence[Pose],
    cfg: RansacConfig = RansacConfig(),
    rng_seed: int = 0,
    prefer: int | None = None,
) -> tuple[np.ndarray, Pose]:
    """Reject outlying pose estimates and average the largest consensus set.

    Every estimate is itself a hypothesis. Up to ``cfg.exhaustive_limit``
    estimates all hypotheses are tested; beyond that ``cfg.max_iterations``
    hypotheses are drawn with ``rng_seed``. Ties in consensus size go to the
    set containing index ``prefer`` (if given), then to the lowest hypothesis
    index.

    Returns the inlier mask and the fused pose.
    """
    estimates = list(estimates)
    n = len(estimates)
    if n == 0:
        raise EmptySet("ransac_poses needs at least one estimate")

    if n <= cfg.exhaustive_limit:
        hypotheses = list(range(n))
    else:
        rng = np.random.default_rng(rng_seed)
        hypotheses = sorted(set(rng.choice(n, size=min(cfg.max_iterations, n), replace=False).tolist()))
        if prefer is not None and prefer not in hypotheses:
            hypotheses = sorted(hypotheses + [prefer])

    best: np.ndarray | None = None
    best_key: tuple[int, int] | None = None
    for h in hypotheses:
        flags = consensus_set(estimates, estimates[h], cfg)
        key = (int(flags.sum()), int(prefer is not None and bool(flags[prefer])))
        if best_key is None or key > best_key:
            best, best_key = flags, key

    assert best is not None and best_key is not None
    if best_key[0] < cfg.min_inliers:
        raise Degenerate(f"largest consensus set has {best_key[0]} < {cfg.min_inliers} members")
    fused = average_poses(p for p, keep in zip(estimates, best) if keep)
    return best, fused
