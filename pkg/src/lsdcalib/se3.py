"""SE(3) rigid-transform and se(3) twist arithmetic.

Conventions used throughout the package:

- A twist is a numpy vector of shape (6,) ordered ``(w1, w2, w3, v1, v2, v3)``:
  rotation part ``w`` in radians first, translation part ``v`` in meters second.
- A transform is a 4x4 numpy array with rotation block ``T[:3, :3]``,
  translation column ``T[:3, 3]`` in meters, and bottom row exactly
  ``(0, 0, 0, 1)``.
- Angles are radians internally; degrees appear only at reporting boundaries.

The exponential map uses the Rodrigues formula plus the left Jacobian for the
translation block, with series fallbacks below ``SMALL_ANGLE`` to avoid
catastrophic cancellation in the sin/cos ratio terms. The logarithm refuses
rotations within ``CUT_LOCUS_MARGIN`` of pi, where the principal branch is
ill-defined.
"""

from __future__ import annotations

import math

import numpy as np

# Switchover to Taylor series for the trigonometric ratio coefficients.
SMALL_ANGLE = 1e-8

# log_map refuses rotation angles >= pi - CUT_LOCUS_MARGIN.
CUT_LOCUS_MARGIN = 1e-6

# Orthogonality / determinant tolerance for transform validation.
ROTATION_TOL = 1e-9

# compose() re-projects onto SO(3) when drift exceeds this.
DRIFT_TOL = 1e-12

_IDENTITY4 = np.eye(4)


class CutLocusError(ValueError):
    """Rotation angle too close to pi for a well-defined logarithm."""


def identity() -> np.ndarray:
    """Return a fresh 4x4 identity transform."""
    return _IDENTITY4.copy()


def check_twist(xi) -> np.ndarray:
    """Validate and return a twist as a float64 array of shape (6,)."""
    xi = np.asarray(xi, dtype=float)
    if xi.shape != (6,):
        raise ValueError(f"twist must have shape (6,), got {xi.shape}")
    if not np.all(np.isfinite(xi)):
        raise ValueError("twist has non-finite components")
    return xi


def check_transform(T) -> np.ndarray:
    """Validate and return a rigid transform as a float64 4x4 array.

    Enforces the exact bottom row, orthogonality of the rotation block
    (Frobenius norm of R^T R - I below ``ROTATION_TOL``) and det(R) = +1.
    """
    T = np.asarray(T, dtype=float)
    if T.shape != (4, 4):
        raise ValueError(f"transform must have shape (4, 4), got {T.shape}")
    if not np.all(np.isfinite(T)):
        raise ValueError("transform has non-finite entries")
    if not (T[3, 0] == 0.0 and T[3, 1] == 0.0 and T[3, 2] == 0.0 and T[3, 3] == 1.0):
        raise ValueError("transform bottom row must be exactly (0, 0, 0, 1)")
    R = T[:3, :3]
    if np.linalg.norm(R.T @ R - np.eye(3)) > ROTATION_TOL:
        raise ValueError("rotation block is not orthogonal within tolerance")
    if abs(_det3(R) - 1.0) > ROTATION_TOL:
        raise ValueError("rotation block determinant is not +1 within tolerance")
    return T


def _det3(R: np.ndarray) -> float:
    return (
        R[0, 0] * (R[1, 1] * R[2, 2] - R[1, 2] * R[2, 1])
        - R[0, 1] * (R[1, 0] * R[2, 2] - R[1, 2] * R[2, 0])
        + R[0, 2] * (R[1, 0] * R[2, 1] - R[1, 1] * R[2, 0])
    )


def exp_map(xi) -> np.ndarray:
    """Map a twist to its rigid transform.

    R = I + a W + b W^2 and t = V v with V = I + b W + c W^2, where W is the
    skew matrix of the rotation part and

        a = sin(t)/t,  b = (1 - cos(t))/t^2,  c = (t - sin(t))/t^3.

    Below ``SMALL_ANGLE`` the coefficients switch to their Taylor expansions.
    """
    xi = check_twist(xi)
    w1, w2, w3, v1, v2, v3 = xi
    th2 = w1 * w1 + w2 * w2 + w3 * w3
    th = math.sqrt(th2)
    if th < SMALL_ANGLE:
        a = 1.0 - th2 / 6.0
        b = 0.5 - th2 / 24.0
        c = 1.0 / 6.0 - th2 / 120.0
    else:
        a = math.sin(th) / th
        # 2 sin^2(t/2) = 1 - cos(t), without the cancellation near t = 0
        half_sin = math.sin(0.5 * th)
        b = 2.0 * half_sin * half_sin / th2
        c = (1.0 - a) / th2

    # R = (1 - b*th2) I + b w w^T + a W, using W^2 = w w^T - th2 I.
    T = np.empty((4, 4))
    T[0, 0] = 1.0 - b * (th2 - w1 * w1)
    T[1, 1] = 1.0 - b * (th2 - w2 * w2)
    T[2, 2] = 1.0 - b * (th2 - w3 * w3)
    T[0, 1] = b * w1 * w2 - a * w3
    T[1, 0] = b * w1 * w2 + a * w3
    T[0, 2] = b * w1 * w3 + a * w2
    T[2, 0] = b * w1 * w3 - a * w2
    T[1, 2] = b * w2 * w3 - a * w1
    T[2, 1] = b * w2 * w3 + a * w1

    # V has the same structure with coefficients (b, c).
    V00 = 1.0 - c * (th2 - w1 * w1)
    V11 = 1.0 - c * (th2 - w2 * w2)
    V22 = 1.0 - c * (th2 - w3 * w3)
    V01 = c * w1 * w2 - b * w3
    V10 = c * w1 * w2 + b * w3
    V02 = c * w1 * w3 + b * w2
    V20 = c * w1 * w3 - b * w2
    V12 = c * w2 * w3 - b * w1
    V21 = c * w2 * w3 + b * w1
    T[0, 3] = V00 * v1 + V01 * v2 + V02 * v3
    T[1, 3] = V10 * v1 + V11 * v2 + V12 * v3
    T[2, 3] = V20 * v1 + V21 * v2 + V22 * v3
    T[3, 0] = T[3, 1] = T[3, 2] = 0.0
    T[3, 3] = 1.0
    return T


def log_map(T) -> np.ndarray:
    """Map a rigid transform to its twist (principal branch).

    Raises :class:`CutLocusError` when the rotation angle is within
    ``CUT_LOCUS_MARGIN`` of pi, where the branch is ambiguous. Calibration
    perturbations in this package stay far below that.
    """
    T = check_transform(T)
    R = T[:3, :3]
    # sin(t) * axis = vee(R - R^T) / 2; cos(t) from the trace. atan2 keeps
    # full precision at both small and large angles.
    s1 = 0.5 * (R[2, 1] - R[1, 2])
    s2 = 0.5 * (R[0, 2] - R[2, 0])
    s3 = 0.5 * (R[1, 0] - R[0, 1])
    s = math.sqrt(s1 * s1 + s2 * s2 + s3 * s3)
    c = 0.5 * (R[0, 0] + R[1, 1] + R[2, 2] - 1.0)
    c = min(1.0, max(-1.0, c))
    th = math.atan2(s, c)
    if th >= math.pi - CUT_LOCUS_MARGIN:
        raise CutLocusError(
            f"rotation angle {th:.9f} rad is within {CUT_LOCUS_MARGIN} of pi"
        )

    th2 = th * th
    if th < SMALL_ANGLE:
        k = 1.0 + th2 / 6.0  # t/sin(t)
        d = 1.0 / 12.0 + th2 / 720.0
    else:
        k = th / s
        d = (1.0 - 0.5 * th * math.cos(0.5 * th) / math.sin(0.5 * th)) / th2
    w1, w2, w3 = k * s1, k * s2, k * s3

    # V^{-1} = (1 - d*th2) I + d w w^T - W/2.
    t1, t2, t3 = T[0, 3], T[1, 3], T[2, 3]
    g00 = 1.0 - d * (th2 - w1 * w1)
    g11 = 1.0 - d * (th2 - w2 * w2)
    g22 = 1.0 - d * (th2 - w3 * w3)
    g01 = d * w1 * w2 + 0.5 * w3
    g10 = d * w1 * w2 - 0.5 * w3
    g02 = d * w1 * w3 - 0.5 * w2
    g20 = d * w1 * w3 + 0.5 * w2
    g12 = d * w2 * w3 + 0.5 * w1
    g21 = d * w2 * w3 - 0.5 * w1
    return np.array(
        [
            w1,
            w2,
            w3,
            g00 * t1 + g01 * t2 + g02 * t3,
            g10 * t1 + g11 * t2 + g12 * t3,
            g20 * t1 + g21 * t2 + g22 * t3,
        ]
    )


def nearest_rotation(R: np.ndarray) -> np.ndarray:
    """Closest proper rotation in the Frobenius sense (polar projection)."""
    U, _, Vt = np.linalg.svd(np.asarray(R, dtype=float))
    out = U @ Vt
    if _det3(out) < 0.0:
        U = U.copy()
        U[:, 2] = -U[:, 2]
        out = U @ Vt
    return out


def compose(A, B) -> np.ndarray:
    """Product A @ B, re-projected onto SO(3) if orthogonality drift exceeds
    ``DRIFT_TOL`` (polar projection via SVD)."""
    A = check_transform(A)
    B = check_transform(B)
    C = A @ B
    R = C[:3, :3]
    if np.linalg.norm(R.T @ R - np.eye(3)) > DRIFT_TOL:
        C[:3, :3] = nearest_rotation(R)
    C[3, :3] = 0.0
    C[3, 3] = 1.0
    return C


def invert(T) -> np.ndarray:
    """Analytic inverse (R^T, -R^T t)."""
    T = check_transform(T)
    out = np.empty((4, 4))
    R = T[:3, :3]
    out[:3, :3] = R.T
    out[:3, 3] = -(R.T @ T[:3, 3])
    out[3, :3] = 0.0
    out[3, 3] = 1.0
    return out


def transform_points(T, points: np.ndarray) -> np.ndarray:
    """Apply a rigid transform to an (N, 3) array of points."""
    T = check_transform(T)
    points = np.asarray(points, dtype=float)
    return points @ T[:3, :3].T + T[:3, 3]


def euler_zyx(T) -> tuple[float, float, float]:
    """Intrinsic Z-Y-X (yaw-pitch-roll) Euler angles in degrees.

    Decomposes R = Rz(yaw) Ry(pitch) Rx(roll). The asin argument is clamped
    to [-1, 1]; at gimbal lock (|pitch| = 90 deg) roll is set to 0 by
    convention and yaw absorbs the remaining freedom.
    """
    T = check_transform(T)
    R = T[:3, :3]
    sp = min(1.0, max(-1.0, -R[2, 0]))
    pitch = math.asin(sp)
    if abs(sp) > 1.0 - 1e-12:
        roll = 0.0
        yaw = math.atan2(-R[0, 1], R[1, 1])
    else:
        roll = math.atan2(R[2, 1], R[2, 2])
        yaw = math.atan2(R[1, 0], R[0, 0])
    return math.degrees(roll), math.degrees(pitch), math.degrees(yaw)


def rotation_from_euler_zyx(roll_deg: float, pitch_deg: float, yaw_deg: float) -> np.ndarray:
    """Rotation matrix from intrinsic Z-Y-X Euler angles in degrees."""
    r = math.radians(roll_deg)
    p = math.radians(pitch_deg)
    y = math.radians(yaw_deg)
    cr, sr = math.cos(r), math.sin(r)
    cp, sp = math.cos(p), math.sin(p)
    cy, sy = math.cos(y), math.sin(y)
    return np.array(
        [
            [cy * cp, cy * sp * sr - sy * cr, cy * sp * cr + sy * sr],
            [sy * cp, sy * sp * sr + cy * cr, sy * sp * cr - cy * sr],
            [-sp, cp * sr, cp * cr],
        ]
    )


def transform_from_rotation_translation(R: np.ndarray, t) -> np.ndarray:
    """Assemble a 4x4 transform from a 3x3 rotation and a translation."""
    T = np.eye(4)
    T[:3, :3] = np.asarray(R, dtype=float)
    T[:3, 3] = np.asarray(t, dtype=float)
    return check_transform(T)


def rotation_angle(T) -> float:
    """Rotation angle of the transform in radians, accurate near 0 and pi."""
    T = np.asarray(T, dtype=float)
    R = T[:3, :3]
    s1 = 0.5 * (R[2, 1] - R[1, 2])
    s2 = 0.5 * (R[0, 2] - R[2, 0])
    s3 = 0.5 * (R[1, 0] - R[0, 1])
    s = math.sqrt(s1 * s1 + s2 * s2 + s3 * s3)
    c = 0.5 * (R[0, 0] + R[1, 1] + R[2, 2] - 1.0)
    return math.atan2(s, c)
