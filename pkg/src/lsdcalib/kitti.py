"""KITTI odometry ingestion: calibration text, Velodyne binaries, splits.

Expects the usual odometry layout under a root directory:

    sequences/<id>/calib.txt
    sequences/<id>/velodyne/<frame>.bin
    sequences/<id>/image_2/<frame>.png   (optional, referenced but not read)

Calibration text carries the left color camera projection (P2) and the
LiDAR-to-camera rigid transform (Tr). The P2 matrix also encodes a camera
offset in its fourth column; it is parsed and kept separate so folding it
into the extrinsic stays an explicit caller choice.
"""

from __future__ import annotations

import hashlib
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator

import numpy as np

from . import se3
from .denoisers import Condition
from .geometry import Intrinsics, PerturbationSpec, PointCloud, perturb_extrinsic

# calib.txt does not record image dimensions; these are the nominal KITTI
# odometry color-image sizes, overridable at parse time.
KITTI_IMAGE_WIDTH = 1241
KITTI_IMAGE_HEIGHT = 376

VELODYNE_RECORD_BYTES = 16


class KittiParseError(ValueError):
    """Calibration or point-cloud bytes do not follow the KITTI layout."""


class EmptyDatasetError(RuntimeError):
    """A sample stream produced nothing."""


def stable_hash64(text: str) -> int:
    """Deterministic 64-bit hash of a string, stable across processes."""
    return int.from_bytes(hashlib.blake2b(text.encode(), digest_size=8).digest(), "big")


@dataclass(frozen=True)
class KittiCalib:
    """Parsed calibration: intrinsics, extrinsic, and the raw P2/Tr rows."""

    intrinsics: Intrinsics
    T_velo_to_cam: np.ndarray
    p2_offset: np.ndarray
    p2_raw: np.ndarray
    tr_raw: np.ndarray


@dataclass(frozen=True)
class SplitSpec:
    """Sequence ids per split; defaults to the odometry benchmark split."""

    train: tuple[str, ...] = ("00", "02", "03", "04", "05", "06", "07", "08", "10", "12")
    val: tuple[str, ...] = ("16", "17", "18")
    test: tuple[str, ...] = ("13", "14", "15", "20", "21")

    def __post_init__(self):
        groups = (set(self.train), set(self.val), set(self.test))
        if sum(len(g) for g in groups) != len(set().union(*groups)):
            raise ValueError("split sequence lists must be pairwise disjoint")

    def sequences(self, which: str) -> tuple[str, ...]:
        try:
            return getattr(self, which)
        except AttributeError:
            raise ValueError(f"unknown split {which!r}; use train, val or test") from None


@dataclass(frozen=True)
class CalibSample:
    """One benchmark unit: conditions, ground truth, perturbed start."""

    condition: Condition
    T_gt: np.ndarray
    T0: np.ndarray
    sample_id: str


def _parse_float_line(key: str, raw: str) -> np.ndarray:
    tokens = raw.split()
    if len(tokens) != 12:
        raise KittiParseError(
            f"line {key!r} must hold 12 floats, found {len(tokens)}"
        )
    try:
        values = np.array([float(tok) for tok in tokens])
    except ValueError as exc:
        raise KittiParseError(f"line {key!r} holds a non-numeric token: {exc}") from exc
    if not np.all(np.isfinite(values)):
        raise KittiParseError(f"line {key!r} holds a non-finite value")
    return values


def parse_kitti_calib(text: str,
                      image_size: tuple[int, int] = (KITTI_IMAGE_WIDTH,
                                                     KITTI_IMAGE_HEIGHT)) -> KittiCalib:
    """Extract intrinsics and the LiDAR-to-camera transform from calib.txt."""
    rows: dict[str, np.ndarray] = {}
    for line in text.splitlines():
        key, sep, raw = line.partition(":")
        key = key.strip()
        if sep and key in ("P2", "Tr") and key not in rows:
            rows[key] = _parse_float_line(key, raw)
    for key in ("P2", "Tr"):
        if key not in rows:
            raise KittiParseError(f"calibration text lacks a {key!r} line")

    p2 = rows["P2"].reshape(3, 4)
    intrinsics = Intrinsics(
        fx=p2[0, 0],
        fy=p2[1, 1],
        cx=p2[0, 2],
        cy=p2[1, 2],
        skew=p2[0, 1],
        image_width=image_size[0],
        image_height=image_size[1],
    )
    T = np.eye(4)
    T[:3, :] = rows["Tr"].reshape(3, 4)
    # Published rotations are rounded to ~12 digits and routinely miss the
    # strict orthogonality gate; snap to the nearest proper rotation then.
    # The raw row survives untouched for bit-exact serialization.
    try:
        T = se3.check_transform(T)
    except ValueError:
        T[:3, :3] = se3.nearest_rotation(T[:3, :3])
        T = se3.check_transform(T)
    return KittiCalib(
        intrinsics=intrinsics,
        T_velo_to_cam=T,
        p2_offset=p2[:, 3].copy(),
        p2_raw=rows["P2"],
        tr_raw=rows["Tr"],
    )


def serialize_kitti_calib(calib: KittiCalib) -> str:
    """Render P2/Tr lines whose floats re-parse bit-exactly."""
    lines = []
    for key, values in (("P2", calib.p2_raw), ("Tr", calib.tr_raw)):
        lines.append(key + ": " + " ".join(repr(float(v)) for v in values))
    return "\n".join(lines) + "\n"


def fold_p2_offset(calib: KittiCalib) -> np.ndarray:
    """Compose the P2 column-4 camera offset into the extrinsic.

    The offset column equals K times the camera translation, so the folded
    transform prepends a translation by K^-1 @ offset. Use this when the
    target camera frame is the left color camera rather than the reference
    camera.
    """
    t = np.linalg.solve(calib.intrinsics.matrix(), calib.p2_offset)
    shift = np.eye(4)
    shift[:3, 3] = t
    return se3.compose(shift, calib.T_velo_to_cam)


def read_velodyne_bin(data: bytes) -> PointCloud:
    """Decode little-endian float32 (x, y, z, reflectance) records.

    Records with non-finite values are dropped with a counted warning;
    reflectance is clipped into [0, 1] to tolerate sloppy exports.
    """
    if len(data) % VELODYNE_RECORD_BYTES != 0:
        raise KittiParseError(
            f"point file size {len(data)} is not a multiple of {VELODYNE_RECORD_BYTES}"
        )
    records = np.frombuffer(data, dtype="<f4").reshape(-1, 4).astype(float)
    finite = np.all(np.isfinite(records), axis=1)
    if not np.all(finite):
        warnings.warn(f"dropped {int(np.sum(~finite))} non-finite point records",
                      stacklevel=2)
        records = records[finite]
    return PointCloud(records[:, :3], np.clip(records[:, 3], 0.0, 1.0))


def _iter_sequence(seq_dir: Path, calib: KittiCalib, T_gt: np.ndarray,
                   spec: PerturbationSpec) -> Iterator[CalibSample]:
    velo_dir = seq_dir / "velodyne"
    if not velo_dir.is_dir():
        warnings.warn(f"sequence {seq_dir.name}: no velodyne directory, skipped",
                      stacklevel=2)
        return
    for bin_path in sorted(velo_dir.glob("*.bin")):
        sample_id = f"{seq_dir.name}/{bin_path.stem}"
        try:
            cloud = read_velodyne_bin(bin_path.read_bytes())
        except (OSError, KittiParseError) as exc:
            warnings.warn(f"sample {sample_id}: {exc}; skipped", stacklevel=2)
            continue
        image = seq_dir / "image_2" / (bin_path.stem + ".png")
        condition = Condition(
            cloud=cloud,
            intrinsics=calib.intrinsics,
            image_ref=str(image) if image.is_file() else None,
            cloud_path=str(bin_path),
        )
        rng = np.random.default_rng(
            np.random.SeedSequence([spec.seed, stable_hash64(sample_id)])
        )
        yield CalibSample(
            condition=condition,
            T_gt=T_gt,
            T0=perturb_extrinsic(T_gt, spec, rng),
            sample_id=sample_id,
        )


def load_samples(root_dir, split: SplitSpec, which: str, spec: PerturbationSpec,
                 fold_p2: bool = False) -> Iterator[CalibSample]:
    """Lazily stream samples for one split, ordered by (sequence, frame).

    Per-sample perturbation seeds mix the base seed carried by ``spec``
    with a stable hash of the sample id, so taking a subset of the data
    never reshuffles the perturbations of the remaining samples. Missing or unreadable files
    are skipped with warnings; an entirely empty stream raises
    EmptyDatasetError.
    """
    root = Path(root_dir)
    yielded = 0
    for seq in split.sequences(which):
        seq_dir = root / "sequences" / seq
        calib_path = seq_dir / "calib.txt"
        try:
            calib = parse_kitti_calib(calib_path.read_text())
        except (OSError, KittiParseError) as exc:
            warnings.warn(f"sequence {seq}: {exc}; skipped", stacklevel=2)
            continue
        T_gt = fold_p2_offset(calib) if fold_p2 else calib.T_velo_to_cam
        for sample in _iter_sequence(seq_dir, calib, T_gt, spec):
            yielded += 1
            yield sample
    if yielded == 0:
        raise EmptyDatasetError(
            f"no usable samples under {root} for the {which!r} split"
        )
