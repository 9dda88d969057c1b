"""Pinhole camera model, point-cloud projection and perturbation sampling.

Perturbations are drawn per axis as uniform Euler Z-Y-X angles and uniform
translations, and applied on the left (delta @ T), matching the
left-correction convention used by the refinement pipeline: the correction
twist a denoiser must undo is then bounded by the perturbation magnitude.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import se3

# Points closer than this to the image plane are culled before projection.
MIN_DEPTH = 1e-6


@dataclass(frozen=True)
class Intrinsics:
    """Pinhole camera parameters, all in pixels."""

    fx: float
    fy: float
    cx: float
    cy: float
    image_width: int
    image_height: int
    skew: float = 0.0

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be positive")
        if self.image_width < 1 or self.image_height < 1:
            raise ValueError("image dimensions must be at least 1 pixel")

    def matrix(self) -> np.ndarray:
        """The 3x3 projection matrix."""
        return np.array(
            [
                [self.fx, self.skew, self.cx],
                [0.0, self.fy, self.cy],
                [0.0, 0.0, 1.0],
            ]
        )


@dataclass(frozen=True)
class PointCloud:
    """Points in the LiDAR frame, meters; optional per-point intensity in [0, 1]."""

    points: np.ndarray
    intensity: Optional[np.ndarray] = None

    def __post_init__(self):
        points = np.asarray(self.points, dtype=float)
        if points.ndim != 2 or points.shape[1] != 3:
            raise ValueError(f"points must have shape (N, 3), got {points.shape}")
        if not np.all(np.isfinite(points)):
            raise ValueError("point coordinates must be finite")
        object.__setattr__(self, "points", points)
        if self.intensity is not None:
            inten = np.asarray(self.intensity, dtype=float)
            if inten.shape != (points.shape[0],):
                raise ValueError("intensity must be one value per point")
            if inten.size and (inten.min() < 0.0 or inten.max() > 1.0):
                raise ValueError("intensity values must lie in [0, 1]")
            object.__setattr__(self, "intensity", inten)

    def __len__(self) -> int:
        return self.points.shape[0]


@dataclass(frozen=True)
class PerturbationSpec:
    """Uniform per-axis perturbation half-ranges and the base RNG seed."""

    rot_range_deg: float = 15.0
    trans_range_m: float = 0.15
    seed: int = 0

    def __post_init__(self):
        if self.rot_range_deg < 0 or self.trans_range_m < 0:
            raise ValueError("perturbation ranges must be non-negative")


def perturb_extrinsic(T_gt, spec: PerturbationSpec,
                      rng: Optional[np.random.Generator] = None) -> np.ndarray:
    """Left-multiply a random bounded perturbation onto ``T_gt``.

    Draws, in order, three Euler Z-Y-X angles (roll, pitch, yaw) uniform in
    +-rot_range_deg and three translation components uniform in
    +-trans_range_m, then returns delta @ T_gt.
    """
    T_gt = se3.check_transform(T_gt)
    if rng is None:
        rng = np.random.default_rng(spec.seed)
    roll, pitch, yaw = rng.uniform(-spec.rot_range_deg, spec.rot_range_deg, 3)
    t = rng.uniform(-spec.trans_range_m, spec.trans_range_m, 3)
    delta = se3.transform_from_rotation_translation(
        se3.rotation_from_euler_zyx(roll, pitch, yaw), t
    )
    return se3.compose(delta, T_gt)


def _project(points: np.ndarray, K: Intrinsics, T_CL) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Project LiDAR points; returns (uv, depth, visible_mask) over all N points."""
    cam = se3.transform_points(T_CL, points)
    x, y, z = cam[:, 0], cam[:, 1], cam[:, 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        u = K.fx * x / z + K.skew * y / z + K.cx
        v = K.fy * y / z + K.cy
    visible = (
        (z > MIN_DEPTH)
        & (u >= 0.0)
        & (u < K.image_width)
        & (v >= 0.0)
        & (v < K.image_height)
    )
    return np.stack([u, v], axis=1), z, visible


def project_points(cloud: PointCloud, K: Intrinsics, T_CL) -> tuple[np.ndarray, np.ndarray]:
    """Project a cloud into the image.

    Returns ``(depth_map, pixel_list)``: a (height, width) depth map in
    meters where collisions keep the nearest depth and empty cells are 0,
    plus the continuous (u, v) coordinates of the points that landed inside
    the image.
    """
    uv, z, visible = _project(cloud.points, K, T_CL)
    uv, z = uv[visible], z[visible]
    depth = np.full((K.image_height, K.image_width), np.inf)
    if z.size:
        cols = np.floor(uv[:, 0]).astype(np.intp)
        rows = np.floor(uv[:, 1]).astype(np.intp)
        np.minimum.at(depth, (rows, cols), z)
    depth[np.isinf(depth)] = 0.0
    return depth, uv


def mean_reprojection_offset(cloud: PointCloud, K: Intrinsics, T_a, T_b) -> float:
    """Mean pixel distance between projections under two extrinsics.

    Averages over points visible under both transforms. Returns 0.0 (with a
    warning) when no point is commonly visible.
    """
    uv_a, _, vis_a = _project(cloud.points, K, T_a)
    uv_b, _, vis_b = _project(cloud.points, K, T_b)
    common = vis_a & vis_b
    if not np.any(common):
        warnings.warn("no commonly visible points; reprojection offset set to 0",
                      stacklevel=2)
        return 0.0
    return float(np.mean(np.linalg.norm(uv_a[common] - uv_b[common], axis=1)))


# Randomized ground-truth extrinsic bounds for synthetic scenes.
SCENE_MAX_ROTATION_DEG = 30.0
SCENE_MAX_TRANSLATION_M = 2.0


def synth_scene(n_points: int, depth_range: tuple[float, float], K: Intrinsics,
                rng: np.random.Generator) -> tuple[PointCloud, np.ndarray]:
    """Generate a random in-frustum cloud and its ground-truth extrinsic.

    Points are sampled uniformly over the image rectangle and the depth
    interval, then moved into a LiDAR frame by a randomized rigid transform
    (rotation <= 30 deg, translation <= 2 m). Projecting the returned cloud
    with the returned transform lands every point back inside the image.
    """
    near, far = depth_range
    if n_points < 1:
        raise ValueError("n_points must be at least 1")
    if not (0.0 < near < far):
        raise ValueError(f"depth range must satisfy 0 < near < far, got {depth_range}")

    u = rng.uniform(0.0, K.image_width, n_points)
    v = rng.uniform(0.0, K.image_height, n_points)
    z = rng.uniform(near, far, n_points)
    y = (v - K.cy) * z / K.fy
    x = ((u - K.cx) * z - K.skew * y) / K.fx
    cam_pts = np.stack([x, y, z], axis=1)

    axis = rng.normal(size=3)
    axis /= np.linalg.norm(axis)
    angle = rng.uniform(0.0, np.radians(SCENE_MAX_ROTATION_DEG))
    trans = rng.uniform(-SCENE_MAX_TRANSLATION_M / np.sqrt(3.0),
                        SCENE_MAX_TRANSLATION_M / np.sqrt(3.0), 3)
    T_gt = se3.exp_map(np.concatenate([axis * angle, trans]))

    lidar_pts = se3.transform_points(se3.invert(T_gt), cam_pts)
    intensity = rng.uniform(0.0, 1.0, n_points)
    return PointCloud(lidar_pts, intensity), T_gt


def write_depth_pgm(depth_map: np.ndarray, path) -> None:
    """Write a depth map as binary 16-bit PGM, millimeter quantization.

    Depths are rounded to millimeters and clipped to the 16-bit range;
    samples are stored most significant byte first per the PGM format.
    """
    depth_map = np.asarray(depth_map, dtype=float)
    if depth_map.ndim != 2:
        raise ValueError("depth map must be 2-D")
    mm = np.clip(np.rint(depth_map * 1000.0), 0, 65535).astype(">u2")
    header = f"P5\n{depth_map.shape[1]} {depth_map.shape[0]}\n65535\n".encode("ascii")
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(mm.tobytes())
