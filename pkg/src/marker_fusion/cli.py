"""Command-line entry point.

    marker-fusion simulate --scenario scenario.json --out streams/ --seed 3
    marker-fusion run --manifest manifest.json
    marker-fusion objects validate --db objects.json
    marker-fusion objects show --db objects.json

Exit codes: 0 success, 2 validation, 3 I/O, 4 internal error. Data goes to
files or stdout; diagnostics go to stderr.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Sequence

from . import config as cfgmod
from .errors import InvalidConfig, IoFailure, MarkerFusionError
from .evaluation import average_reports, compute_metrics, export_trajectories, format_table, write_metrics_json, MetricsReport
from .geom import Pose
from .scene import Hierarchy, export_scene_graph, load_object_database, validate_database
from .sim import Variant, generate, run_scenario, write_streams

log = logging.getLogger("marker_fusion.cli")

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_IO = 3
EXIT_INTERNAL = 4

THREADS_ENV = "MARKER_FUSION_THREADS"


def _workers(n_jobs: int) -> int:
    raw = os.environ.get(THREADS_ENV)
    cap = os.cpu_count() or 1
    if raw:
        try:
            cap = max(1, int(raw))
        except ValueError:
            log.warning("ignoring non-integer %s=%r", THREADS_ENV, raw)
    return max(1, min(cap, n_jobs))


def cmd_simulate(scenario_path: str | Path, output_dir: str | Path, seed: int | None = None) -> int:
    try:
        cfg = cfgmod.load_scenario(scenario_path, seed=seed)
    except InvalidConfig as exc:
        log.error("%s", exc)
        return EXIT_VALIDATION
    except OSError as exc:
        log.error("cannot read scenario: %s", exc)
        return EXIT_IO
    try:
        out = Path(output_dir)
        out.mkdir(parents=True, exist_ok=True)
        paths = write_streams(generate(cfg), out)
    except (OSError, IoFailure) as exc:
        log.error("cannot write streams: %s", exc)
        return EXIT_IO
    for p in paths.values():
        log.info("wrote %s", p)
    return EXIT_OK


def _scene_graph_lines(records, object_id: str) -> list[str]:
    lines = []
    held: Pose | None = None
    for r in records:
        if r.tracker_output is not None:
            held = r.tracker_output.object_pose_cam
        if held is None:
            continue
        doc = export_scene_graph([("hc", Pose.identity()), (object_id, held)], Hierarchy.NESTED, root="hc")
        lines.append(json.dumps({"time": r.time, "graph": doc}, sort_keys=True))
    return lines


def _run_job(scenario_path: str, variant: str, seed: int, out_dir: str,
             emit_scene_graph: bool, wall_clock: bool) -> tuple[str, int, dict | None, str | None]:
    """One isolated (variant, seed) run; returns the metrics dict or an error."""
    try:
        cfg = cfgmod.load_scenario(scenario_path, seed=seed)
        records = run_scenario(cfg, Variant(variant))
        stem = Path(out_dir) / f"{variant}_seed{seed}"
        export_trajectories(records, f"{stem}_trajectory.csv")
        report = compute_metrics(records, wall_clock=wall_clock)
        write_metrics_json(report, f"{stem}_metrics.json")
        if emit_scene_graph:
            oid = cfg.object_placements[0].model.object_id
            Path(f"{stem}_scene_graph.jsonl").write_text(
                "".join(line + "\n" for line in _scene_graph_lines(records, oid))
            )
        return variant, seed, report.to_dict(), None
    except MarkerFusionError as exc:
        return variant, seed, None, f"{type(exc).__name__}: {exc}"
    except OSError as exc:
        return variant, seed, None, f"IoFailure: {exc}"


def _report_from_dict(d: dict) -> MetricsReport:
    d = dict(d)
    d.pop("euler_convention", None)
    return MetricsReport(**d)


def cmd_run(manifest_path: str | Path) -> int:
    try:
        manifest = cfgmod.load_manifest(manifest_path)
        cfgmod.load_scenario(manifest.scenario_path)
    except InvalidConfig as exc:
        log.error("%s", exc)
        return EXIT_VALIDATION
    except OSError as exc:
        log.error("cannot read input: %s", exc)
        return EXIT_IO
    try:
        manifest.output_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        log.error("cannot create output directory: %s", exc)
        return EXIT_IO

    jobs = [
        (str(manifest.scenario_path), v.value, s, str(manifest.output_dir), manifest.emit_scene_graph, manifest.wall_clock)
        for v in manifest.variants
        for s in manifest.seeds
    ]
    workers = _workers(len(jobs))
    log.info("running %d jobs on %d worker(s)", len(jobs), workers)
    if workers == 1:
        results = [_run_job(*job) for job in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_job, *zip(*jobs)))

    by_variant: dict[str, list[MetricsReport]] = {}
    failed = False
    for variant, seed, report, error in sorted(results, key=lambda r: (r[0], r[1])):
        if error is not None:
            failed = True
            log.error("%s seed %d failed: %s", variant, seed, error)
            continue
        by_variant.setdefault(variant, []).append(_report_from_dict(report))

    ordered = {v.value: average_reports(by_variant[v.value]) for v in manifest.variants if v.value in by_variant}
    try:
        if ordered:
            (manifest.output_dir / "table.txt").write_text(format_table(ordered))
            summary = {name: rep.to_dict() for name, rep in ordered.items()}
            (manifest.output_dir / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    except OSError as exc:
        log.error("cannot write table: %s", exc)
        return EXIT_IO
    if failed:
        return EXIT_INTERNAL
    return EXIT_OK


def _show(models) -> dict:
    out = {}
    for oid in sorted(models):
        m = models[oid]
        out[oid] = {
            "target_tag_id": m.target_tag_id,
            "layout": {str(t): m.tag_layout[t].to_dict() for t in m.tag_ids},
            "relative_to_target": {str(t): p.to_dict() for t, p in sorted(m.induced_relative().items())},
        }
    return out


def cmd_objects(db_path: str | Path, subcommand: str, stdout=None) -> int:
    stdout = stdout or sys.stdout
    try:
        text = Path(db_path).read_text()
    except OSError as exc:
        log.error("cannot read database: %s", exc)
        return EXIT_IO
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        log.error("%s:%d: invalid JSON: %s", db_path, exc.lineno, exc.msg)
        return EXIT_VALIDATION
    errors = validate_database(raw)
    if errors:
        for e in errors:
            log.error("%s: %s", db_path, e)
        return EXIT_VALIDATION
    if subcommand == "validate":
        log.info("%s: ok", db_path)
        return EXIT_OK
    models = load_object_database(db_path)
    stdout.write(json.dumps(_show(models), indent=2, sort_keys=True) + "\n")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="marker-fusion", description="Multi-fiducial object tracking with VIO fusion.")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate detection, VIO and ground-truth CSVs")
    p.add_argument("--scenario", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=None)

    p = sub.add_parser("run", help="run tracker variants over seeds and tabulate metrics")
    p.add_argument("--manifest", required=True)

    p = sub.add_parser("objects", help="validate or inspect an object database")
    p.add_argument("action", choices=["validate", "show"])
    p.add_argument("--db", required=True)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        stream=sys.stderr,
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(name)s: %(levelname)s: %(message)s",
        force=True,
    )
    try:
        if args.command == "simulate":
            if args.seed is not None and args.seed < 0:
                log.error("seed: expected a non-negative integer")
                return EXIT_VALIDATION
            return cmd_simulate(args.scenario, args.out, args.seed)
        if args.command == "run":
            return cmd_run(args.manifest)
        return cmd_objects(args.db, args.action)
    except Exception:
        log.exception("internal error")
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
