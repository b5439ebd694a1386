"""Accuracy/runtime reporting and trajectory export.

Translation errors are per-axis residuals of the object position in the
hand-eye camera frame. Rotation errors are the ZYX (yaw-pitch-roll) Euler
angles of the relative rotation ``R_true^T R_est``, reported as roll (phi),
pitch (theta) and yaw (psi).
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from . import geom
from .errors import IoFailure, NoEstimates
from .geom import Pose
from .sim import TrackRecord
from .tracker import Mode, TrackerOutput

EULER_CONVENTION = "ZYX (yaw-pitch-roll); phi=roll, theta=pitch, psi=yaw"

TRAJECTORY_COLUMNS = (
    ["time"]
    + [f"gt_{c}" for c in ("x", "y", "z", "qw", "qx", "qy", "qz")]
    + [f"est_{c}" for c in ("x", "y", "z", "qw", "qx", "qy", "qz")]
    + ["mode", "visible_count", "updated", "detector_runtime", "visible_tags"]
)

# row order of the accuracy table
TABLE_ROWS = [
    ("e_x_rmse", "e_x,rmse [m]"),
    ("e_y_rmse", "e_y,rmse [m]"),
    ("e_z_rmse", "e_z,rmse [m]"),
    ("e_roll_rmse", "e_phi,rmse [rad]"),
    ("e_pitch_rmse", "e_theta,rmse [rad]"),
    ("e_yaw_rmse", "e_psi,rmse [rad]"),
]


@dataclass(frozen=True)
class MetricsReport:
    e_x_rmse: float
    e_y_rmse: float
    e_z_rmse: float
    e_roll_rmse: float
    e_pitch_rmse: float
    e_yaw_rmse: float
    t_run_mean: float
    t_run_std: float
    n_steps: int
    dropout_fraction: float
    n_updates: int = 0
    wall_clock: bool = True

    def to_dict(self) -> dict:
        d = asdict(self)
        d["euler_convention"] = EULER_CONVENTION
        return d


def pose_residuals(est: Pose, truth: Pose) -> np.ndarray:
    """``[dx, dy, dz, droll, dpitch, dyaw]`` of ``est`` relative to ``truth``."""
    dt = est.translation - truth.translation
    if np.array_equal(est.rotation, truth.rotation):
        # q* q is not bit-exactly the identity; keep zero-error runs at exactly 0
        return np.concatenate([dt, np.zeros(3)])
    rel = geom.quat_multiply(geom.quat_conjugate(truth.rotation), est.rotation)
    return np.concatenate([dt, geom.quat_to_euler_zyx(rel)])


def scored_steps(records: Iterable[TrackRecord]) -> list[tuple[TrackRecord, Pose, bool]]:
    """Time-sorted ``(record, displayed estimate, updated)`` triples.

    Ticks without fresh output are scored against the last estimate held
    constant; ticks before the first estimate are skipped.
    """
    out = []
    held: Pose | None = None
    for r in sorted(records, key=lambda r: r.time):
        updated = r.tracker_output is not None
        if updated:
            held = r.tracker_output.object_pose_cam
        if held is None:
            continue
        out.append((r, held, updated))
    return out


def compute_metrics(records: Sequence[TrackRecord], wall_clock: bool = True) -> MetricsReport:
    """Per-axis RMSE and per-update runtime statistics for one run.

    The runtime of an update is the modelled detector time plus, when
    ``wall_clock`` is set, the measured tracker time. Without it the report
    is a pure function of the records' deterministic fields.
    """
    steps = scored_steps(records)
    if not steps:
        raise NoEstimates("no record carries a tracker output")
    res = np.array([pose_residuals(est, r.ground_truth_object_in_hc) for r, est, _ in steps])
    rmse = np.sqrt(np.mean(res**2, axis=0))
    runtimes = np.array(
        [r.detector_runtime + (r.step_runtime if wall_clock else 0.0) for r, _, upd in steps if upd]
    )
    dropout = sum(1 for r, _, _ in steps if not r.visible_tags) / len(steps)
    return MetricsReport(
        *(float(v) for v in rmse),
        t_run_mean=float(runtimes.mean()),
        t_run_std=float(runtimes.std()),
        n_steps=len(steps),
        dropout_fraction=float(dropout),
        n_updates=int(len(runtimes)),
        wall_clock=wall_clock,
    )


def translation_errors(records: Sequence[TrackRecord]) -> tuple[np.ndarray, np.ndarray]:
    """Times and per-step translation error norms (held-estimate scoring)."""
    steps = scored_steps(records)
    times = np.array([r.time for r, _, _ in steps])
    errs = np.array(
        [np.linalg.norm(est.translation - r.ground_truth_object_in_hc.translation) for r, est, _ in steps]
    )
    return times, errs


def average_reports(reports: Sequence[MetricsReport]) -> MetricsReport:
    """Mean over seeds of every field (runtime std is the pooled std)."""
    if not reports:
        raise NoEstimates("no reports to average")
    fields = [k for k, _ in TABLE_ROWS]
    means = {k: float(np.mean([getattr(r, k) for r in reports])) for k in fields}
    w = np.array([r.n_updates for r in reports], dtype=float)
    mu = np.array([r.t_run_mean for r in reports])
    sd = np.array([r.t_run_std for r in reports])
    tot = w.sum() if w.sum() > 0 else 1.0
    t_mean = float((w * mu).sum() / tot)
    t_std = float(math.sqrt(max(0.0, (w * (sd**2 + (mu - t_mean) ** 2)).sum() / tot)))
    return MetricsReport(
        **means,
        t_run_mean=t_mean,
        t_run_std=t_std,
        n_steps=int(sum(r.n_steps for r in reports)),
        dropout_fraction=float(np.mean([r.dropout_fraction for r in reports])),
        n_updates=int(w.sum()),
        wall_clock=all(r.wall_clock for r in reports),
    )


def format_table(reports: Mapping[str, MetricsReport]) -> str:
    """Aligned text table, one column per variant, rows in accuracy-table order."""
    names = list(reports)
    label_w = max(len(lbl) for _, lbl in TABLE_ROWS + [("", "t_run [s]")])
    col_w = max(20, *(len(n) for n in names))
    lines = [f"# euler: {EULER_CONVENTION}"]
    timing = "modelled detector + measured tracker" if all(r.wall_clock for r in reports.values()) else "modelled detector"
    lines.append(f"# t_run: {timing}")
    lines.append(" " * label_w + " | " + " | ".join(n.rjust(col_w) for n in names))
    lines.append("-" * len(lines[-1]))
    for key, label in TABLE_ROWS:
        cells = [f"{getattr(reports[n], key):.4f}".rjust(col_w) for n in names]
        lines.append(label.ljust(label_w) + " | " + " | ".join(cells))
    cells = [f"{reports[n].t_run_mean:.4f} +- {reports[n].t_run_std:.4f}".rjust(col_w) for n in names]
    lines.append("t_run [s]".ljust(label_w) + " | " + " | ".join(cells))
    return "\n".join(lines) + "\n"


def write_metrics_json(report: MetricsReport, path: str | Path) -> None:
    try:
        Path(path).write_text(json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n")
    except OSError as exc:
        raise IoFailure(str(exc)) from exc


# --------------------------------------------------------------------------
# trajectory CSV
# --------------------------------------------------------------------------


def _f(x: float) -> str:
    return repr(float(x))


def _pose_cells(p: Pose | None) -> list[str]:
    if p is None:
        return [""] * 7
    return [_f(v) for v in p.translation] + [_f(v) for v in p.rotation]


def export_trajectories(records: Sequence[TrackRecord], path: str | Path) -> Path:
    """Write one row per record: truth, displayed estimate and bookkeeping.

    ``est_*`` holds the estimate on display at that tick (the last output
    when the tracker did not update); ``updated`` is 1 on ticks with fresh
    output. Floats are written in shortest round-trip form.
    """
    if not records:
        raise NoEstimates("no records to export")
    path = Path(path)
    held: TrackerOutput | None = None
    try:
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(TRAJECTORY_COLUMNS)
            for r in sorted(records, key=lambda r: r.time):
                if r.tracker_output is not None:
                    held = r.tracker_output
                w.writerow(
                    [_f(r.time)]
                    + _pose_cells(r.ground_truth_object_in_hc)
                    + _pose_cells(held.object_pose_cam if held else None)
                    + [
                        held.mode.value if held else "",
                        str(len(r.visible_tags)),
                        "1" if r.tracker_output is not None else "0",
                        _f(r.detector_runtime),
                        ";".join(str(t) for t in sorted(r.visible_tags)),
                    ]
                )
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc
    return path


def read_trajectories(path: str | Path) -> list[TrackRecord]:
    """Parse an exported trajectory CSV back into records.

    Wall-clock runtimes are not exported, so ``step_runtime`` is 0.
    """
    records = []
    try:
        fh = Path(path).open(newline="")
    except OSError as exc:
        raise IoFailure(str(exc)) from exc
    with fh:
        for row in csv.DictReader(fh):
            gt = Pose([float(row[f"gt_{c}"]) for c in ("qw", "qx", "qy", "qz")],
                      [float(row[f"gt_{c}"]) for c in ("x", "y", "z")])
            output = None
            if row["updated"] == "1":
                est = Pose([float(row[f"est_{c}"]) for c in ("qw", "qx", "qy", "qz")],
                           [float(row[f"est_{c}"]) for c in ("x", "y", "z")])
                output = TrackerOutput(est, est, Mode(row["mode"]), 0.0, float(row["time"]))
            tags = frozenset(int(t) for t in row["visible_tags"].split(";") if t)
            records.append(
                TrackRecord(
                    time=float(row["time"]),
                    ground_truth_object_in_hc=gt,
                    tracker_output=output,
                    visible_tags=tags,
                    detector_runtime=float(row["detector_runtime"]),
                )
            )
    return records
