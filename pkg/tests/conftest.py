"""Shared oracles and fixtures, implemented independently of the package."""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np
import pytest


def skew(w):
    return np.array([
        [0.0, -w[2], w[1]],
        [w[2], 0.0, -w[0]],
        [-w[1], w[0], 0.0],
    ])


def se3_matrix_exp(xi):
    """Brute-force 4x4 matrix exponential via scaling-and-squaring series."""
    xi = np.asarray(xi, dtype=float)
    A = np.zeros((4, 4))
    A[:3, :3] = skew(xi[:3])
    A[:3, 3] = xi[3:]
    norm = np.linalg.norm(A)
    squarings = max(0, int(np.ceil(np.log2(max(norm, 1e-300) / 0.25))))
    B = A / (2.0 ** squarings)
    term = np.eye(4)
    total = np.eye(4)
    for k in range(1, 40):
        term = term @ B / k
        total = total + term
        if np.abs(term).max() < 1e-20:
            break
    for _ in range(squarings):
        total = total @ total
    return total


def random_twists(n, rng, max_angle=np.pi - 0.1, max_trans=2.0):
    """Twists with rotation magnitude uniform in [0, max_angle]."""
    axes = rng.normal(size=(n, 3))
    axes /= np.linalg.norm(axes, axis=1, keepdims=True)
    angles = rng.uniform(0.0, max_angle, n)
    trans = rng.uniform(-max_trans, max_trans, (n, 3))
    return np.hstack([axes * angles[:, None], trans])


# Genuine KITTI odometry sequence-00 calibration values (public dataset).
KITTI_SEQ00_CALIB = """\
P0: 7.188560000000e+02 0.000000000000e+00 6.071928000000e+02 0.000000000000e+00 0.000000000000e+00 7.188560000000e+02 1.852157000000e+02 0.000000000000e+00 0.000000000000e+00 0.000000000000e+00 1.000000000000e+00 0.000000000000e+00
P1: 7.188560000000e+02 0.000000000000e+00 6.071928000000e+02 -3.861448000000e+02 0.000000000000e+00 7.188560000000e+02 1.852157000000e+02 0.000000000000e+00 0.000000000000e+00 0.000000000000e+00 1.000000000000e+00 0.000000000000e+00
P2: 7.188560000000e+02 0.000000000000e+00 6.071928000000e+02 4.538225000000e+01 0.000000000000e+00 7.188560000000e+02 1.852157000000e+02 -1.130887000000e-01 0.000000000000e+00 0.000000000000e+00 1.000000000000e+00 3.779761000000e-03
P3: 7.188560000000e+02 0.000000000000e+00 6.071928000000e+02 -3.372877000000e+02 0.000000000000e+00 7.188560000000e+02 1.852157000000e+02 2.369057000000e+00 0.000000000000e+00 0.000000000000e+00 1.000000000000e+00 4.915215000000e-03
Tr: 4.276802385584e-04 -9.999672484946e-01 -8.084491683471e-03 -1.198459927713e-02 -7.210626507497e-03 8.081198471645e-03 -9.999413164504e-01 -5.403984729748e-02 9.999738645903e-01 4.859485810390e-04 -7.206933692422e-03 -2.921968648686e-01
"""


def pack_points(points_with_reflectance) -> bytes:
    out = b""
    for rec in points_with_reflectance:
        out += struct.pack("<4f", *rec)
    return out


def make_kitti_tree(root: Path, sequences, frames_per_seq=2,
                    calib_text=KITTI_SEQ00_CALIB, seed=0) -> None:
    """Build a miniature KITTI odometry layout with random tiny clouds."""
    rng = np.random.default_rng(seed)
    for seq in sequences:
        seq_dir = root / "sequences" / seq
        (seq_dir / "velodyne").mkdir(parents=True)
        (seq_dir / "calib.txt").write_text(calib_text)
        for frame in range(frames_per_seq):
            records = [
                (rng.uniform(2, 30), rng.uniform(-5, 5), rng.uniform(-2, 2),
                 rng.uniform(0, 1))
                for _ in range(50)
            ]
            path = seq_dir / "velodyne" / f"{frame:06d}.bin"
            path.write_bytes(pack_points(records))


@pytest.fixture
def kitti_root(tmp_path):
    """KITTI tree holding the full test split plus one train sequence."""
    make_kitti_tree(tmp_path, ["00", "13", "14", "15", "20", "21"])
    return tmp_path
