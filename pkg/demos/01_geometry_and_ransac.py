"""Pose algebra and outlier-robust fusion of per-tag object estimates.

Eight tags each give an estimate of the same object pose. Two of them are
corrupted the way a flipped marker corrupts a detection; RANSAC finds them
and the consensus average stays close to the truth.
"""

from __future__ import annotations

import math

import numpy as np

from marker_fusion.geom import Pose, average_poses, chain, compose, inverse, pose_distance, ransac_poses

rng = np.random.default_rng(7)

truth = Pose.from_rotvec([0.2, -0.1, 0.4], [0.05, 0.02, 0.6])
print("truth:", truth)

# round trip through inverse
eye = compose(truth, inverse(truth))
print("T * T^-1 deviates from identity by", pose_distance(eye, Pose.identity()))

# a chain of three frames equals pairwise composition
a, b = Pose.from_rotvec([0, 0, 0.3], [1, 0, 0]), Pose.from_rotvec([0.1, 0, 0], [0, 1, 0])
print("chain == compose:", pose_distance(chain(truth, a, b), compose(compose(truth, a), b)))

estimates = []
for k in range(8):
    noisy = Pose.from_rotvec(rng.normal(0, 0.005, 3), rng.normal(0, 0.002, 3))
    estimates.append(compose(truth, noisy))
flip = Pose.from_rotvec([math.pi / 6, 0, 0], [0, 0, 0.05])
estimates[2] = compose(truth, flip)
estimates[5] = compose(truth, flip)

naive = average_poses(estimates)
inliers, fused = ransac_poses(estimates)
print("inlier mask:", inliers.astype(int))
print("plain mean error: ", pose_distance(naive, truth))
print("RANSAC mean error:", pose_distance(fused, truth))
