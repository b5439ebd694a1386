"""JSON scenario and run-manifest files.

Both formats carry ``"schema_version": 1`` and reject unknown keys. Errors
raise :class:`~marker_fusion.errors.InvalidConfig` whose ``field`` is the
dotted path of the offending key; :func:`locate` maps it back to a line of
the source text.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Any

import numpy as np

from .errors import InvalidConfig
from .geom import Pose, Twist
from .scene import object_from_dict, validate_object_dict
from .sim import (
    ConstantTwistTrajectory,
    DropoutWindow,
    Frustum,
    NoiseConfig,
    ObjectPlacement,
    PegInHoleTrajectory,
    ScenarioConfig,
    StaticTrajectory,
    Trajectory,
    Variant,
    WaypointTrajectory,
    standard_plate,
)

SCHEMA_VERSION = 1

_SCENARIO_KEYS = {
    "schema_version", "duration", "detection_rate", "vio_rate", "processing_delay", "trajectory",
    "objects", "dropout_windows", "noise", "frustum", "ap2_slow_factor", "clean_init", "seed",
}
_MANIFEST_KEYS = {"schema_version", "scenario", "variants", "output_dir", "seeds", "emit_scene_graph", "wall_clock"}


def locate(text: str, fld: str | None) -> int | None:
    """1-based line of the last key named in dotted path ``fld``, if found."""
    if not fld:
        return None
    key = re.sub(r"\[\d+\]$", "", fld.split(".")[-1])
    m = re.search(r'"%s"\s*:' % re.escape(key), text)
    return text.count("\n", 0, m.start()) + 1 if m else None


def _check_keys(d: Any, allowed: set[str], where: str) -> None:
    if not isinstance(d, dict):
        raise InvalidConfig(f"{where or 'document'}: expected a JSON object", field=where or None)
    for key in d:
        if key not in allowed:
            path = f"{where}.{key}" if where else key
            raise InvalidConfig(f"{path}: unknown field", field=path)


def _number(d: dict, key: str, where: str, default: float | None = None) -> float:
    path = f"{where}.{key}" if where else key
    if key not in d:
        if default is None:
            raise InvalidConfig(f"{path}: required field missing", field=path)
        return default
    v = d[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise InvalidConfig(f"{path}: expected a number, got {v!r}", field=path)
    return float(v)


def _vec(v: Any, n: int, path: str) -> list[float]:
    if not (isinstance(v, list) and len(v) == n and all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in v)):
        raise InvalidConfig(f"{path}: expected a list of {n} numbers", field=path)
    return [float(x) for x in v]


def _pose(v: Any, path: str) -> Pose:
    _check_keys(v, {"translation", "quaternion"}, path)
    t = _vec(v.get("translation", [0, 0, 0]), 3, f"{path}.translation")
    q = _vec(v.get("quaternion", [1, 0, 0, 0]), 4, f"{path}.quaternion")
    if abs(np.linalg.norm(q) - 1.0) > 1e-6:
        raise InvalidConfig(f"{path}.quaternion: must have unit norm", field=f"{path}.quaternion")
    return Pose(q, t)


def _trajectory(d: Any) -> Trajectory:
    where = "trajectory"
    if not isinstance(d, dict) or "type" not in d:
        raise InvalidConfig("trajectory: needs a 'type'", field=where)
    kind = d["type"]
    if kind == "static":
        _check_keys(d, {"type", "pose"}, where)
        return StaticTrajectory(_pose(d.get("pose", {}), "trajectory.pose"))
    if kind == "constant_twist":
        _check_keys(d, {"type", "start", "linear", "angular"}, where)
        return ConstantTwistTrajectory(
            _pose(d.get("start", {}), "trajectory.start"),
            Twist(_vec(d.get("linear", [0, 0, 0]), 3, "trajectory.linear"),
                  _vec(d.get("angular", [0, 0, 0]), 3, "trajectory.angular")),
        )
    if kind == "waypoints":
        _check_keys(d, {"type", "points"}, where)
        pts = d.get("points")
        if not isinstance(pts, list) or not pts:
            raise InvalidConfig("trajectory.points: expected a non-empty list", field="trajectory.points")
        times, poses = [], []
        for i, p in enumerate(pts):
            _check_keys(p, {"time", "pose"}, f"trajectory.points[{i}]")
            times.append(_number(p, "time", f"trajectory.points[{i}]"))
            poses.append(_pose(p.get("pose", {}), f"trajectory.points[{i}].pose"))
        return WaypointTrajectory(tuple(times), tuple(poses))
    if kind == "peg_in_hole":
        allowed = {"type"} | {f.name for f in fields(PegInHoleTrajectory)}
        _check_keys(d, allowed, where)
        kw: dict[str, Any] = {}
        for key in allowed - {"type"}:
            if key in d:
                kw[key] = tuple(_vec(d[key], 2, f"trajectory.{key}")) if key in ("approach", "agitation") \
                    else _number(d, key, where)
        return PegInHoleTrajectory(**kw)
    raise InvalidConfig(f"trajectory.type: unknown trajectory {kind!r}", field="trajectory.type")


def _objects(v: Any) -> tuple[ObjectPlacement, ...]:
    if v is None:
        return (ObjectPlacement(standard_plate(), Pose.identity()),)
    if not isinstance(v, list) or not v:
        raise InvalidConfig("objects: expected a non-empty list", field="objects")
    out = []
    for i, entry in enumerate(v):
        where = f"objects[{i}]"
        _check_keys(entry, {"model", "preset", "pose"}, where)
        pose = _pose(entry.get("pose", {}), f"{where}.pose")
        if "model" in entry:
            errs = validate_object_dict(entry["model"], where=f"{where}.model")
            if errs:
                raise InvalidConfig("; ".join(errs), field=f"{where}.model")
            model = object_from_dict(entry["model"])
        elif entry.get("preset", "plate") == "plate":
            model = standard_plate(f"plate{i}" if i else "plate", first_tag=8 * i)
        else:
            raise InvalidConfig(f"{where}.preset: unknown preset {entry['preset']!r}", field=f"{where}.preset")
        out.append(ObjectPlacement(model, pose))
    return tuple(out)


def scenario_from_dict(d: Any, seed: int | None = None) -> ScenarioConfig:
    _check_keys(d, _SCENARIO_KEYS, "")
    if d.get("schema_version") != SCHEMA_VERSION:
        raise InvalidConfig(f"schema_version: expected {SCHEMA_VERSION}", field="schema_version")
    if "trajectory" not in d:
        raise InvalidConfig("trajectory: required field missing", field="trajectory")

    noise_d = d.get("noise", {})
    _check_keys(noise_d, {f.name for f in fields(NoiseConfig)}, "noise")
    noise = NoiseConfig(**{k: _number(noise_d, k, "noise") for k in noise_d})

    frustum_d = d.get("frustum", {})
    _check_keys(frustum_d, {"half_angle_deg", "max_range"}, "frustum")
    frustum = Frustum(**{k: _number(frustum_d, k, "frustum") for k in frustum_d})

    windows = []
    for i, w in enumerate(d.get("dropout_windows", [])):
        where = f"dropout_windows[{i}]"
        _check_keys(w, {"start", "end", "tags"}, where)
        tags = w.get("tags", "all")
        if tags == "all":
            tag_set = None
        elif isinstance(tags, list) and all(isinstance(t, int) and not isinstance(t, bool) for t in tags):
            tag_set = frozenset(tags)
        else:
            raise InvalidConfig(f"{where}.tags: expected 'all' or a list of tag ids", field=f"{where}.tags")
        windows.append(DropoutWindow(_number(w, "start", where), _number(w, "end", where), tag_set))

    seed_v = d.get("seed", 0) if seed is None else seed
    if isinstance(seed_v, bool) or not isinstance(seed_v, int) or seed_v < 0:
        raise InvalidConfig("seed: expected a non-negative integer", field="seed")
    clean = d.get("clean_init", True)
    if not isinstance(clean, bool):
        raise InvalidConfig("clean_init: expected true or false", field="clean_init")

    return ScenarioConfig(
        duration=_number(d, "duration", ""),
        trajectory=_trajectory(d["trajectory"]),
        object_placements=_objects(d.get("objects")),
        detection_rate=_number(d, "detection_rate", "", 25.0),
        vio_rate=_number(d, "vio_rate", "", 200.0),
        processing_delay=_number(d, "processing_delay", "", 0.0),
        dropout_windows=tuple(windows),
        noise=noise,
        seed=seed_v,
        frustum=frustum,
        ap2_slow_factor=_number(d, "ap2_slow_factor", "", 16.0),
        clean_init=clean,
    )


def scenario_to_dict(cfg: ScenarioConfig) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "duration": cfg.duration,
        "detection_rate": cfg.detection_rate,
        "vio_rate": cfg.vio_rate,
        "processing_delay": cfg.processing_delay,
        "trajectory": cfg.trajectory.to_dict(),
        "objects": [{"model": p.model.to_dict(), "pose": p.pose.to_dict()} for p in cfg.object_placements],
        "dropout_windows": [
            {"start": w.start, "end": w.end, "tags": "all" if w.tags is None else sorted(w.tags)}
            for w in cfg.dropout_windows
        ],
        "noise": {f.name: getattr(cfg.noise, f.name) for f in fields(NoiseConfig)},
        "frustum": {"half_angle_deg": cfg.frustum.half_angle_deg, "max_range": cfg.frustum.max_range},
        "ap2_slow_factor": cfg.ap2_slow_factor,
        "clean_init": cfg.clean_init,
        "seed": cfg.seed,
    }


def _parse_json(text: str, source: str) -> Any:
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise InvalidConfig(f"{source}:{exc.lineno}: invalid JSON: {exc.msg}") from exc


def _with_line(exc: InvalidConfig, text: str, source: str) -> InvalidConfig:
    line = locate(text, exc.field)
    prefix = f"{source}:{line}" if line else source
    return InvalidConfig(f"{prefix}: {exc}", field=exc.field)


def load_scenario(path: str | Path, seed: int | None = None) -> ScenarioConfig:
    """Read and validate a scenario file; errors are prefixed ``path:line:``."""
    path = Path(path)
    text = path.read_text()
    try:
        return scenario_from_dict(_parse_json(text, str(path)), seed=seed)
    except InvalidConfig as exc:
        if str(exc).startswith(str(path)):
            raise
        raise _with_line(exc, text, str(path)) from None


@dataclass(frozen=True)
class RunManifest:
    scenario_path: Path
    variants: tuple[Variant, ...]
    output_dir: Path
    seeds: tuple[int, ...]
    emit_scene_graph: bool = False
    wall_clock: bool = False


def load_manifest(path: str | Path) -> RunManifest:
    path = Path(path)
    text = path.read_text()
    try:
        d = _parse_json(text, str(path))
        _check_keys(d, _MANIFEST_KEYS, "")
        if d.get("schema_version") != SCHEMA_VERSION:
            raise InvalidConfig(f"schema_version: expected {SCHEMA_VERSION}", field="schema_version")
        for key in ("scenario", "variants", "output_dir", "seeds"):
            if key not in d:
                raise InvalidConfig(f"{key}: required field missing", field=key)
        variants = d["variants"]
        if not isinstance(variants, list) or not variants:
            raise InvalidConfig("variants: expected a non-empty list", field="variants")
        try:
            parsed = tuple(Variant(v) for v in variants)
        except ValueError:
            raise InvalidConfig(
                f"variants: expected names from {[v.value for v in Variant]}", field="variants"
            ) from None
        seeds = d["seeds"]
        if not (isinstance(seeds, list) and seeds and all(isinstance(s, int) and not isinstance(s, bool) and s >= 0 for s in seeds)):
            raise InvalidConfig("seeds: expected a non-empty list of non-negative integers", field="seeds")
        for key in ("emit_scene_graph", "wall_clock"):
            if not isinstance(d.get(key, False), bool):
                raise InvalidConfig(f"{key}: expected true or false", field=key)
        if not isinstance(d["scenario"], str) or not isinstance(d["output_dir"], str):
            raise InvalidConfig("scenario/output_dir: expected path strings", field="scenario")
    except InvalidConfig as exc:
        if str(exc).startswith(str(path)):
            raise
        raise _with_line(exc, text, str(path)) from None
    base = path.parent
    return RunManifest(
        scenario_path=(base / d["scenario"]),
        variants=tuple(dict.fromkeys(parsed)),
        output_dir=(base / d["output_dir"]),
        seeds=tuple(dict.fromkeys(seeds)),
        emit_scene_graph=d.get("emit_scene_graph", False),
        wall_clock=d.get("wall_clock", False),
    )
