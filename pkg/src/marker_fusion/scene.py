"""Calibrated transform chains, the object database and scene-graph export."""

from __future__ import annotations

import bisect
import enum
import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from . import geom
from .errors import InvalidConfig, KinematicsGap, MissingRoot
from .geom import Pose, compose, inverse
from .tracker import TagMap, TrackerConfig

_TIME_EPS = 1e-9


class KinematicsStream:
    """Time-indexed ``T_tcp^base`` samples from forward kinematics."""

    def __init__(self, times: Sequence[float], poses: Sequence[Pose]):
        if len(times) != len(poses) or not times:
            raise ValueError("need matching, non-empty times and poses")
        if any(not b > a for a, b in zip(times, times[1:])):
            raise ValueError("kinematics stream must be strictly time-ordered")
        self.times = [float(t) for t in times]
        self.poses = list(poses)

    @classmethod
    def constant(cls, pose: Pose) -> KinematicsStream:
        return _ConstantKinematics(pose)

    def at(self, t: float) -> Pose:
        times = self.times
        if t < times[0] - _TIME_EPS or t > times[-1] + _TIME_EPS:
            raise KinematicsGap(f"t={t} outside [{times[0]}, {times[-1]}]")
        i = bisect.bisect_left(times, t)
        if i < len(times) and abs(times[i] - t) <= _TIME_EPS:
            return self.poses[i]
        if i > 0 and abs(times[i - 1] - t) <= _TIME_EPS:
            return self.poses[i - 1]
        if i == 0 or i == len(times):
            return self.poses[min(i, len(times) - 1)]
        s = (t - times[i - 1]) / (times[i] - times[i - 1])
        return geom.interpolate(self.poses[i - 1], self.poses[i], s)


class _ConstantKinematics(KinematicsStream):
    def __init__(self, pose: Pose):
        self.times = [-np.inf, np.inf]
        self.poses = [pose, pose]

    def at(self, t: float) -> Pose:
        return self.poses[0]


@dataclass(frozen=True)
class CalibrationSet:
    """Fixed hand-eye / eye-to-hand transforms plus the arm's kinematics.

    ``tcp_from_hc`` is ``T_hc^tcp``, ``mako_from_base`` is ``T_base^mako`` and
    ``base_from_tcp_stream`` yields ``T_tcp^base(t)``.
    """

    tcp_from_hc: Pose
    mako_from_base: Pose = field(default_factory=Pose.identity)
    base_from_tcp_stream: KinematicsStream = field(
        default_factory=lambda: KinematicsStream.constant(Pose.identity())
    )


def object_in_tcp(object_in_hc: Pose, calib: CalibrationSet) -> Pose:
    """``T_object^tcp = T_hc^tcp T_object^hc``."""
    return compose(calib.tcp_from_hc, object_in_hc)


def relative_objects(
    object1_in_mako: Pose, object2_in_hc: Pose, calib: CalibrationSet, t: float
) -> Pose:
    """Pose of a held object (seen by the hand-eye camera) in the frame of an
    object seen by the eye-to-hand (mako) camera.

    ``T_o2^o1 = (T_o1^mako)^-1 T_base^mako T_tcp^base(t) T_hc^tcp T_o2^hc``
    """
    return geom.chain(
        inverse(object1_in_mako),
        calib.mako_from_base,
        calib.base_from_tcp_stream.at(t),
        calib.tcp_from_hc,
        object2_in_hc,
    )


# --------------------------------------------------------------------------
# object database
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class ObjectModel:
    """One database entry.

    ``tag_layout`` maps tag id to the tag's pose in the object frame;
    ``object_from_target`` is the object's pose in the target-tag frame.
    ``held`` marks objects carried by the gripper, which are tracked with
    multi-tag fusion only (no dead reckoning, no delay extrapolation).
    """

    object_id: str
    target_tag_id: int
    tag_layout: Mapping[int, Pose]
    object_from_target: Pose
    display_mesh_ref: str = ""
    held: bool = False

    @classmethod
    def from_layout(
        cls, object_id: str, target_tag_id: int, tag_layout: Mapping[int, Pose], **kw
    ) -> ObjectModel:
        """Build a model whose ``object_from_target`` is implied by the layout."""
        return cls(object_id, target_tag_id, dict(tag_layout), inverse(tag_layout[target_tag_id]), **kw)

    @property
    def tag_ids(self) -> list[int]:
        return sorted(self.tag_layout)

    def induced_relative(self) -> dict[int, Pose]:
        """True ``T_x^y`` for every non-target tag ``y``."""
        x = self.tag_layout[self.target_tag_id]
        return {
            tid: compose(inverse(p), x)
            for tid, p in sorted(self.tag_layout.items())
            if tid != self.target_tag_id
        }

    def tag_map(self) -> TagMap:
        return TagMap(self.target_tag_id, self.induced_relative(), self.object_from_target)

    def tracker_config(self, base: TrackerConfig = TrackerConfig()) -> TrackerConfig:
        if not self.held:
            return base
        return replace(base, vio_integration=False, delay_compensation=False)

    def to_dict(self) -> dict:
        d = {
            "object_id": self.object_id,
            "target_tag_id": self.target_tag_id,
            "tags": [{"id": tid, "pose": self.tag_layout[tid].to_dict()} for tid in self.tag_ids],
            "object_from_target": self.object_from_target.to_dict(),
            "display_mesh_ref": self.display_mesh_ref,
        }
        if self.held:
            d["held"] = True
        return d


def validate_object_dict(d: object, where: str = "object") -> list[str]:
    """Field-level diagnostics for one raw database entry (empty when valid)."""
    errors: list[str] = []
    if not isinstance(d, dict):
        return [f"{where}: expected an object, got {type(d).__name__}"]
    name = d.get("object_id", where)
    where = f"object '{name}'" if isinstance(name, str) else where
    allowed = {"object_id", "target_tag_id", "tags", "object_from_target", "display_mesh_ref", "held"}
    for key in d:
        if key not in allowed:
            errors.append(f"{where}: unknown field '{key}'")
    for key in ("object_id", "target_tag_id", "tags", "object_from_target"):
        if key not in d:
            errors.append(f"{where}: missing field '{key}'")
    if errors:
        return errors
    if not isinstance(d["object_id"], str) or not d["object_id"]:
        errors.append(f"{where}: object_id must be a non-empty string")
    if not isinstance(d["target_tag_id"], int) or d["target_tag_id"] < 0:
        errors.append(f"{where}: target_tag_id must be a non-negative integer")
    ids: list[int] = []
    layout: dict[int, Pose] = {}
    if not isinstance(d["tags"], list) or not d["tags"]:
        errors.append(f"{where}: tags must be a non-empty list")
    else:
        for i, tag in enumerate(d["tags"]):
            try:
                tid = tag["id"]
                if not isinstance(tid, int) or tid < 0:
                    raise ValueError("id must be a non-negative integer")
                layout[tid] = _pose_from_json(tag["pose"])
                ids.append(tid)
            except (KeyError, TypeError, ValueError) as exc:
                errors.append(f"{where}: tags[{i}]: {exc}")
    if len(set(ids)) != len(ids):
        errors.append(f"{where}: duplicate tag ids in layout")
    if isinstance(d["target_tag_id"], int) and layout and d["target_tag_id"] not in layout:
        errors.append(f"{where}: target_tag_id {d['target_tag_id']} missing from tag layout")
    try:
        oft = _pose_from_json(d["object_from_target"])
    except (KeyError, TypeError, ValueError) as exc:
        errors.append(f"{where}: object_from_target: {exc}")
        oft = None
    if oft is not None and not errors:
        implied = inverse(layout[d["target_tag_id"]])
        err = geom.pose_distance(oft, implied)
        if err.translation_err > 1e-6 or err.rotation_err > 1e-6:
            errors.append(
                f"{where}: object_from_target inconsistent with the target tag's layout pose "
                f"({err.translation_err:.3g} m, {err.rotation_err:.3g} rad)"
            )
    return errors


def _pose_from_json(d: object) -> Pose:
    if not isinstance(d, dict):
        raise ValueError("pose must be an object with 'translation' and 'quaternion'")
    extra = set(d) - {"translation", "quaternion"}
    if extra:
        raise ValueError(f"unknown pose fields {sorted(extra)}")
    t, q = d.get("translation"), d.get("quaternion")
    if not (isinstance(t, list) and len(t) == 3 and isinstance(q, list) and len(q) == 4):
        raise ValueError("pose needs translation[3] and quaternion[4] (w, x, y, z)")
    q = np.asarray(q, dtype=float)
    if abs(np.linalg.norm(q) - 1.0) > 1e-6:
        raise ValueError("quaternion must have unit norm")
    return Pose(q, t)


def object_from_dict(d: dict) -> ObjectModel:
    errors = validate_object_dict(d)
    if errors:
        raise InvalidConfig("; ".join(errors), field=str(d.get("object_id", "object")) if isinstance(d, dict) else None)
    layout = {tag["id"]: _pose_from_json(tag["pose"]) for tag in d["tags"]}
    return ObjectModel(
        object_id=d["object_id"],
        target_tag_id=d["target_tag_id"],
        tag_layout=layout,
        object_from_target=_pose_from_json(d["object_from_target"]),
        display_mesh_ref=d.get("display_mesh_ref", ""),
        held=bool(d.get("held", False)),
    )


def _database_entries(raw: object) -> list:
    if isinstance(raw, dict) and "objects" in raw:
        return raw["objects"]
    if isinstance(raw, list):
        return raw
    raise InvalidConfig("database must be a list of objects or {'objects': [...]}")


def validate_database(raw: object) -> list[str]:
    try:
        entries = _database_entries(raw)
    except InvalidConfig as exc:
        return [str(exc)]
    if not isinstance(entries, list):
        return ["'objects' must be a list"]
    errors: list[str] = []
    seen: set[str] = set()
    for i, entry in enumerate(entries):
        errors.extend(validate_object_dict(entry, where=f"objects[{i}]"))
        oid = entry.get("object_id") if isinstance(entry, dict) else None
        if isinstance(oid, str):
            if oid in seen:
                errors.append(f"object '{oid}': duplicate object_id")
            seen.add(oid)
    return errors


def load_object_database(path: str | Path) -> dict[str, ObjectModel]:
    raw = json.loads(Path(path).read_text())
    errors = validate_database(raw)
    if errors:
        raise InvalidConfig("; ".join(errors))
    return {m.object_id: m for m in (object_from_dict(e) for e in _database_entries(raw))}


def save_object_database(models: Iterable[ObjectModel], path: str | Path) -> None:
    doc = {"schema_version": 1, "objects": [m.to_dict() for m in models]}
    Path(path).write_text(json.dumps(doc, indent=2) + "\n")


# --------------------------------------------------------------------------
# scene graph
# --------------------------------------------------------------------------


class Hierarchy(str, enum.Enum):
    FLAT = "flat"
    NESTED = "nested"


def export_scene_graph(
    objects: Iterable[tuple[str, Pose]],
    hierarchy: Hierarchy | str = Hierarchy.FLAT,
    root: str | None = None,
) -> dict:
    """Scene-graph document ``{hierarchy, root, nodes: [{id, parent, translation, quaternion}]}``.

    Flat: every node has ``parent = None`` and its pose in the common frame.
    Nested: the root keeps its common-frame pose, every other node is
    re-expressed relative to the root.
    """
    hierarchy = Hierarchy(hierarchy)
    objects = list(objects)
    poses = dict(objects)
    nodes = []
    if hierarchy is Hierarchy.FLAT:
        for oid, pose in objects:
            nodes.append(_node(oid, None, pose))
        return {"hierarchy": hierarchy.value, "root": None, "nodes": nodes}

    if root is None or root not in poses:
        raise MissingRoot(f"root {root!r} not among objects")
    root_inv = inverse(poses[root])
    for oid, pose in objects:
        if oid == root:
            nodes.append(_node(oid, None, pose))
        else:
            nodes.append(_node(oid, root, compose(root_inv, pose)))
    return {"hierarchy": hierarchy.value, "root": root, "nodes": nodes}


def _node(oid: str, parent: str | None, pose: Pose) -> dict:
    return {
        "id": oid,
        "parent": parent,
        "translation": [float(v) for v in pose.translation],
        "quaternion": [float(v) for v in pose.rotation],
    }


def flatten_scene_graph(doc: Mapping) -> dict[str, Pose]:
    """Resolve every node to the common frame (inverse of :func:`export_scene_graph`)."""
    local = {n["id"]: (n["parent"], Pose(n["quaternion"], n["translation"])) for n in doc["nodes"]}
    resolved: dict[str, Pose] = {}

    def resolve(oid: str, depth: int = 0) -> Pose:
        if oid in resolved:
            return resolved[oid]
        if depth > len(local):
            raise ValueError("cycle in scene graph")
        parent, pose = local[oid]
        out = pose if parent is None else compose(resolve(parent, depth + 1), pose)
        resolved[oid] = out
        return out

    return {n["id"]: resolve(n["id"]) for n in doc["nodes"]}
