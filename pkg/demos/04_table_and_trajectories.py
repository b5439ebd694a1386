"""Accuracy table over five seeds and a trajectory export.

Runs the three tracker variants on the standard sequence, averages the
per-axis RMSE over seeds and writes the Ours trajectory for seed 0 to CSV.
"""

from __future__ import annotations

import sys
import tempfile
from pathlib import Path

from marker_fusion.evaluation import average_reports, compute_metrics, export_trajectories, format_table
from marker_fusion.sim import Variant, generate, peg_in_hole_config, run_scenario

seeds = range(5)
out_dir = Path(sys.argv[1] if len(sys.argv) > 1 else tempfile.mkdtemp())
out_dir.mkdir(parents=True, exist_ok=True)
reports = {v.value: [] for v in Variant}
for seed in seeds:
    cfg = peg_in_hole_config(seed=seed)
    streams = generate(cfg)
    for v in Variant:
        records = run_scenario(cfg, v, streams=streams)
        reports[v.value].append(compute_metrics(records))
        if seed == 0 and v is Variant.OURS:
            out = export_trajectories(records, out_dir / "ours_seed0.csv")

print(format_table({name: average_reports(rs) for name, rs in reports.items()}))
print("trajectory written to", out)
