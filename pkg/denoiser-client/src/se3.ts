/**
 * Minimal rigid-transform math for the reference denoiser client.
 *
 * Transforms are flat row-major arrays of 16 numbers, exactly the layout
 * used on the wire, so request payloads feed straight into these helpers.
 * The log map recovers the rotation through a quaternion and solves a
 * 3x3 linear system for the translation part; this is deliberately a
 * different route than the host library takes, so agreement between the
 * two is a real cross-check rather than a tautology.
 */

export type Mat4 = number[];

/** Six numbers: rotation vector first, then translation. */
export type Twist = [number, number, number, number, number, number];

export function identity(): Mat4 {
  return [1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1];
}

export function multiply(a: Mat4, b: Mat4): Mat4 {
  const out = new Array<number>(16).fill(0);
  for (let i = 0; i < 4; i++) {
    for (let j = 0; j < 4; j++) {
      let acc = 0;
      for (let k = 0; k < 4; k++) {
        acc += a[i * 4 + k] * b[k * 4 + j];
      }
      out[i * 4 + j] = acc;
    }
  }
  return out;
}

/** Inverse of a rigid transform: transpose the rotation, counter-rotate the offset. */
export function invertRigid(t: Mat4): Mat4 {
  const out = identity();
  for (let i = 0; i < 3; i++) {
    for (let j = 0; j < 3; j++) {
      out[i * 4 + j] = t[j * 4 + i];
    }
  }
  for (let i = 0; i < 3; i++) {
    out[i * 4 + 3] = -(out[i * 4 + 0] * t[3] + out[i * 4 + 1] * t[7] + out[i * 4 + 2] * t[11]);
  }
  return out;
}

export function isTransformArray(value: unknown): value is Mat4 {
  return (
    Array.isArray(value) &&
    value.length === 16 &&
    value.every((v) => typeof v === "number" && Number.isFinite(v))
  );
}

/** Unit quaternion (w, x, y, z) of the rotation block, w kept non-negative. */
function rotationQuaternion(t: Mat4): [number, number, number, number] {
  const trace = t[0] + t[5] + t[10];
  let qw: number;
  let qx: number;
  let qy: number;
  let qz: number;
  if (trace > 0) {
    const s = Math.sqrt(trace + 1) * 2;
    qw = 0.25 * s;
    qx = (t[9] - t[6]) / s;
    qy = (t[2] - t[8]) / s;
    qz = (t[4] - t[1]) / s;
  } else if (t[0] > t[5] && t[0] > t[10]) {
    const s = Math.sqrt(1 + t[0] - t[5] - t[10]) * 2;
    qw = (t[9] - t[6]) / s;
    qx = 0.25 * s;
    qy = (t[1] + t[4]) / s;
    qz = (t[2] + t[8]) / s;
  } else if (t[5] > t[10]) {
    const s = Math.sqrt(1 + t[5] - t[0] - t[10]) * 2;
    qw = (t[2] - t[8]) / s;
    qx = (t[1] + t[4]) / s;
    qy = 0.25 * s;
    qz = (t[6] + t[9]) / s;
  } else {
    const s = Math.sqrt(1 + t[10] - t[0] - t[5]) * 2;
    qw = (t[4] - t[1]) / s;
    qx = (t[2] + t[8]) / s;
    qy = (t[6] + t[9]) / s;
    qz = 0.25 * s;
  }
  if (qw < 0) {
    qw = -qw;
    qx = -qx;
    qy = -qy;
    qz = -qz;
  }
  return [qw, qx, qy, qz];
}

/** Gaussian elimination with partial pivoting for a 3x3 system. */
function solve3(m: number[][], rhs: number[]): number[] {
  const a = m.map((row, i) => [...row, rhs[i]]);
  for (let col = 0; col < 3; col++) {
    let pivot = col;
    for (let row = col + 1; row < 3; row++) {
      if (Math.abs(a[row][col]) > Math.abs(a[pivot][col])) {
        pivot = row;
      }
    }
    [a[col], a[pivot]] = [a[pivot], a[col]];
    for (let row = col + 1; row < 3; row++) {
      const f = a[row][col] / a[col][col];
      for (let k = col; k < 4; k++) {
        a[row][k] -= f * a[col][k];
      }
    }
  }
  const x = [0, 0, 0];
  for (let row = 2; row >= 0; row--) {
    let acc = a[row][3];
    for (let k = row + 1; k < 3; k++) {
      acc -= a[row][k] * x[k];
    }
    x[row] = acc / a[row][row];
  }
  return x;
}

/**
 * Logarithm of a rigid transform, valid below the rotation cut locus.
 *
 * The rotation vector comes from the quaternion; the translation solves
 * V v = p where V is the left Jacobian of the rotation, with series
 * coefficients near zero angle so nothing cancels.
 */
export function logMap(t: Mat4): Twist {
  const [qw, qx, qy, qz] = rotationQuaternion(t);
  const n = Math.hypot(qx, qy, qz);
  const theta = 2 * Math.atan2(n, qw);
  // theta / sin(theta / 2) tends to 2 as the angle vanishes
  const scale = n > 0 ? theta / n : 2;
  const wx = scale * qx;
  const wy = scale * qy;
  const wz = scale * qz;

  const theta2 = theta * theta;
  let a: number;
  let b: number;
  if (theta < 1e-3) {
    a = 0.5 - theta2 / 24 + (theta2 * theta2) / 720;
    b = 1 / 6 - theta2 / 120 + (theta2 * theta2) / 5040;
  } else {
    a = (1 - Math.cos(theta)) / theta2;
    b = (theta - Math.sin(theta)) / (theta2 * theta);
  }
  const v = [
    [1 + b * (-wy * wy - wz * wz), -a * wz + b * wx * wy, a * wy + b * wx * wz],
    [a * wz + b * wx * wy, 1 + b * (-wx * wx - wz * wz), -a * wx + b * wy * wz],
    [-a * wy + b * wx * wz, a * wx + b * wy * wz, 1 + b * (-wx * wx - wy * wy)],
  ];
  const [vx, vy, vz] = solve3(v, [t[3], t[7], t[11]]);
  return [wx, wy, wz, vx, vy, vz];
}

/** Contraction step: gain times the log of the left error T_gt * T_noisy^-1. */
export function contractionTwist(tGt: Mat4, tNoisy: Mat4, gain: number): Twist {
  const twist = logMap(multiply(tGt, invertRigid(tNoisy)));
  return twist.map((v) => gain * v) as Twist;
}
