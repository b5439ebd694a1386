"""Object database, two-camera relative pose and scene-graph export.

A plate is seen by the eye-to-hand camera and a peg by the hand-eye camera
on the arm. Chaining through the arm kinematics gives the peg in the plate
frame, which is exported as a nested scene graph rooted at the plate.
"""

from __future__ import annotations

import json
import tempfile
from pathlib import Path

from marker_fusion.geom import Pose
from marker_fusion.scene import (
    CalibrationSet,
    KinematicsStream,
    export_scene_graph,
    flatten_scene_graph,
    load_object_database,
    relative_objects,
    save_object_database,
)
from marker_fusion.sim import standard_plate

db = Path(tempfile.mkdtemp()) / "objects.json"
save_object_database([standard_plate(), standard_plate("plate1", first_tag=8)], db)
models = load_object_database(db)
for oid, m in models.items():
    print(f"{oid}: target tag {m.target_tag_id}, tags {m.tag_ids}")

calib = CalibrationSet(
    tcp_from_hc=Pose.from_rotvec([0, 0, 0], [0, 0.05, 0.1]),
    mako_from_base=Pose.from_rotvec([0, 0, 1.57], [1.0, 0, 0.5]),
    base_from_tcp_stream=KinematicsStream.constant(Pose.from_rotvec([3.14, 0, 0], [0.4, 0.1, 0.6])),
)
plate_in_mako = Pose.from_rotvec([0, 0.1, 0], [0.6, 0.3, 0.8])
peg_in_hc = Pose.from_rotvec([0, 0, 0.2], [0.01, -0.02, 0.3])
peg_in_plate = relative_objects(plate_in_mako, peg_in_hc, calib, t=0.0)
print("peg in plate frame:", peg_in_plate)

doc = export_scene_graph([("plate", Pose.identity()), ("peg", peg_in_plate)], "nested", root="plate")
for node in doc["nodes"]:
    print(json.dumps(node))
print("flattened peg pose:", flatten_scene_graph(doc)["peg"])
