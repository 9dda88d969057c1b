/**
 * Session state machine for the line-delimited JSON denoiser protocol.
 *
 * Every request line gets exactly one reply line. A request that is not
 * legal in the current state, or that fails validation, is answered with
 * an error reply marked fatal; the caller is expected to stop serving
 * and exit nonzero after writing it. End of input is not an error.
 */

import { contractionTwist, isTransformArray, Mat4, Twist } from "./se3";

export const PROTOCOL_VERSION = 1;

export type SessionState = "awaiting_hello" | "ready" | "in_sample";

export interface SessionOptions {
  /** Contraction gain in [0, 1]. */
  gain: number;
  /** Ground-truth extrinsic for test mode; null degrades to the zero twist. */
  tGt: Mat4 | null;
}

export interface Reply {
  op: string;
  [key: string]: unknown;
}

export interface StepResult {
  reply: Reply;
  /** True when the session is dead and the process should exit nonzero. */
  fatal: boolean;
}

const ZERO_TWIST: Twist = [0, 0, 0, 0, 0, 0];

export class ProtocolSession {
  state: SessionState = "awaiting_hello";
  private readonly gain: number;
  private readonly tGt: Mat4 | null;

  constructor(options: SessionOptions) {
    if (!(options.gain >= 0 && options.gain <= 1)) {
      throw new RangeError(`gain must be in [0, 1], got ${options.gain}`);
    }
    this.gain = options.gain;
    this.tGt = options.tGt;
  }

  handleLine(line: string): StepResult {
    let message: unknown;
    try {
      message = JSON.parse(line);
    } catch {
      return this.fail("request line is not valid JSON");
    }
    if (typeof message !== "object" || message === null || Array.isArray(message)) {
      return this.fail("request must be a JSON object");
    }
    const request = message as Record<string, unknown>;
    const op = request["op"];
    if (typeof op !== "string") {
      return this.fail("request has no op field");
    }
    switch (op) {
      case "hello":
        return this.onHello(request);
      case "begin":
        return this.onBegin(request);
      case "denoise":
        return this.onDenoise(request);
      case "end":
        return this.onEnd();
      default:
        return this.fail(`unknown op ${JSON.stringify(op)}`);
    }
  }

  private onHello(request: Record<string, unknown>): StepResult {
    if (this.state !== "awaiting_hello") {
      return this.fail("hello is only legal as the first message");
    }
    if (request["version"] !== PROTOCOL_VERSION) {
      return this.fail(
        `unsupported protocol version ${JSON.stringify(request["version"])}`
      );
    }
    this.state = "ready";
    return { reply: { op: "hello_ok", version: PROTOCOL_VERSION }, fatal: false };
  }

  private onBegin(request: Record<string, unknown>): StepResult {
    if (this.state !== "ready") {
      return this.fail(`begin is not legal in state ${this.state}`);
    }
    if (typeof request["sample_id"] !== "string") {
      return this.fail("begin needs a string sample_id");
    }
    if (!isTransformArray(request["t0"])) {
      return this.fail("begin needs t0 as 16 finite numbers");
    }
    const intrinsics = request["intrinsics"];
    if (
      !Array.isArray(intrinsics) ||
      intrinsics.length !== 9 ||
      !intrinsics.every((v) => typeof v === "number" && Number.isFinite(v))
    ) {
      return this.fail("begin needs intrinsics as 9 finite numbers");
    }
    this.state = "in_sample";
    return { reply: { op: "begin_ok" }, fatal: false };
  }

  private onDenoise(request: Record<string, unknown>): StepResult {
    if (this.state !== "in_sample") {
      return this.fail(`denoise is not legal in state ${this.state}`);
    }
    const tNoisy = request["t_noisy"];
    if (!isTransformArray(tNoisy)) {
      return this.fail("denoise needs t_noisy as 16 finite numbers");
    }
    const value =
      this.tGt === null ? ZERO_TWIST : contractionTwist(this.tGt, tNoisy, this.gain);
    return { reply: { op: "delta_xi", value: [...value] }, fatal: false };
  }

  private onEnd(): StepResult {
    if (this.state !== "in_sample") {
      return this.fail(`end is not legal in state ${this.state}`);
    }
    this.state = "ready";
    return { reply: { op: "end_ok" }, fatal: false };
  }

  private fail(message: string): StepResult {
    return { reply: { op: "error", message }, fatal: true };
  }
}
