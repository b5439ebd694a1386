"""Tracking through a five second loss of sight.

All tags disappear between t=3 s and t=8 s while the arm keeps moving.
Trackers that only hold their last estimate fall behind; VIO dead reckoning
keeps the estimate on the object.
"""

from __future__ import annotations

import numpy as np

from marker_fusion.evaluation import translation_errors
from marker_fusion.sim import Variant, generate, peg_in_hole_config, run_scenario

cfg = peg_in_hole_config(seed=0)
streams = generate(cfg)

print(f"{'t [s]':>6} " + " ".join(f"{v.value:>10}" for v in Variant) + "   (translation error, mm)")
curves = {}
for v in Variant:
    times, errs = translation_errors(run_scenario(cfg, v, streams=streams))
    curves[v] = (times, errs)

for t in np.arange(1.0, cfg.duration, 1.0):
    row = []
    for v in Variant:
        times, errs = curves[v]
        i = int(np.searchsorted(times, t))
        row.append(f"{1000 * errs[min(i, len(errs) - 1)]:10.1f}")
    marker = "  <- no tags" if 3.0 <= t <= 8.0 else ""
    print(f"{t:6.1f} " + " ".join(row) + marker)
