"""Calibration error decomposition, aggregation and report rendering.

Error is measured on the transform ``T_hat @ inv(T_gt)``: its rotation is
decomposed into Euler Z-Y-X angles (degrees) and its translation into
centimeters, all reported as absolute values. The per-sample RMSE is the L2
norm of the three axis errors; threshold rates count samples whose rotation
and translation RMSE are both strictly under the threshold.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, fields

import numpy as np

from . import se3


@dataclass(frozen=True)
class SampleError:
    """Absolute per-axis errors: rotation in degrees, translation in cm."""

    roll: float
    pitch: float
    yaw: float
    tx: float
    ty: float
    tz: float
    rot_rmse: float
    trans_rmse: float

    def __post_init__(self):
        for f in fields(self):
            value = getattr(self, f.name)
            if not math.isfinite(value) or value < 0:
                raise ValueError(f"{f.name} must be finite and non-negative, got {value}")


@dataclass(frozen=True)
class AggregateReport:
    """Mean errors and threshold success rates over a sample set."""

    roll: float
    pitch: float
    yaw: float
    rot_rmse: float
    tx: float
    ty: float
    tz: float
    trans_rmse: float
    rate_3deg3cm: float
    rate_5deg5cm: float
    n_samples: int


def transform_error(T_hat, T_gt) -> np.ndarray:
    """Error transform mapping the ground truth onto the estimate."""
    return se3.compose(T_hat, se3.invert(T_gt))


def sample_error(dT) -> SampleError:
    """Decompose an error transform into per-axis magnitudes."""
    dT = se3.check_transform(dT)
    roll, pitch, yaw = (abs(float(a)) for a in se3.euler_zyx(dT))
    tx, ty, tz = (abs(float(c)) * 100.0 for c in dT[:3, 3])
    return SampleError(
        roll=roll,
        pitch=pitch,
        yaw=yaw,
        tx=tx,
        ty=ty,
        tz=tz,
        rot_rmse=math.sqrt(roll * roll + pitch * pitch + yaw * yaw),
        trans_rmse=math.sqrt(tx * tx + ty * ty + tz * tz),
    )


def _under(err: SampleError, rot_deg: float, trans_cm: float) -> bool:
    return err.rot_rmse < rot_deg and err.trans_rmse < trans_cm


def aggregate(errors: list[SampleError]) -> AggregateReport:
    """Mean every field over the samples and compute threshold rates."""
    if not errors:
        raise ValueError("cannot aggregate an empty sample list")
    n = len(errors)
    # fsum: exactly rounded, so the mean is permutation-invariant bitwise
    mean = lambda name: math.fsum(getattr(e, name) for e in errors) / n
    return AggregateReport(
        roll=mean("roll"),
        pitch=mean("pitch"),
        yaw=mean("yaw"),
        rot_rmse=mean("rot_rmse"),
        tx=mean("tx"),
        ty=mean("ty"),
        tz=mean("tz"),
        trans_rmse=mean("trans_rmse"),
        rate_3deg3cm=sum(_under(e, 3.0, 3.0) for e in errors) / n,
        rate_5deg5cm=sum(_under(e, 5.0, 5.0) for e in errors) / n,
        n_samples=n,
    )


# Column order used by csv and markdown renderers: rotation block, then
# translation block, then success rates.
_COLUMNS = [
    ("Roll", "roll"),
    ("Pitch", "pitch"),
    ("Yaw", "yaw"),
    ("RMSE", "rot_rmse"),
    ("X", "tx"),
    ("Y", "ty"),
    ("Z", "tz"),
    ("RMSE", "trans_rmse"),
    ("3°3cm", "rate_3deg3cm"),
    ("5°5cm", "rate_5deg5cm"),
]


def render_report(report: AggregateReport, format: str = "json") -> str:
    """Serialize an aggregate report as json, csv or markdown text."""
    if format == "json":
        payload = {field.name: getattr(report, field.name) for field in fields(report)}
        return json.dumps(payload, indent=2) + "\n"
    if format == "csv":
        # attribute names, not display names: csv headers must be unique
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow([attr for _, attr in _COLUMNS] + ["n_samples"])
        writer.writerow(
            [repr(getattr(report, attr)) for _, attr in _COLUMNS] + [report.n_samples]
        )
        return buf.getvalue()
    if format == "markdown":
        headers = [header for header, _ in _COLUMNS]
        cells = [f"{getattr(report, attr):.3f}" for _, attr in _COLUMNS]
        lines = [
            "| " + " | ".join(headers) + " |",
            "|" + "|".join(["---"] * len(headers)) + "|",
            "| " + " | ".join(cells) + " |",
            "",
            f"n = {report.n_samples}",
        ]
        return "\n".join(lines) + "\n"
    raise ValueError(f"unknown report format: {format!r}")
