/**
 * Reference contractive denoiser client.
 *
 * Serves the line-delimited JSON protocol on stdin/stdout: hello, begin,
 * denoise and end requests each get exactly one reply line, and stdout
 * carries nothing else. In test mode the ground-truth extrinsic arrives
 * through --t-gt and every denoise request is answered with
 * gain * log(T_gt * T_noisy^-1); without --t-gt the client answers with
 * the zero twist, which leaves the framework's estimate untouched.
 *
 * Flags:
 *   --gain G    contraction gain in [0, 1], default 1.0
 *   --t-gt SRC  ground truth: 16 comma-separated row-major floats, or a
 *               path to a file holding the same 16 numbers
 *
 * A real model client would keep the protocol loop and replace the
 * contraction with network inference conditioned on the begin payload.
 */

import * as fs from "node:fs";
import * as readline from "node:readline";
import { ProtocolSession, SessionOptions } from "./protocol";
import { Mat4 } from "./se3";

function parseTransformSource(source: string): Mat4 {
  const text = source.includes(",") ? source : fs.readFileSync(source, "utf-8");
  const fields = text.trim().split(/[\s,]+/);
  if (fields.length !== 16) {
    throw new Error(`expected 16 transform entries, got ${fields.length}`);
  }
  const values = fields.map(Number);
  if (!values.every(Number.isFinite)) {
    throw new Error(`transform entries must be finite numbers: ${source}`);
  }
  return values;
}

function parseArgs(argv: string[]): SessionOptions {
  let gain = 1.0;
  let tGt: Mat4 | null = null;
  for (let i = 0; i < argv.length; i++) {
    const flag = argv[i];
    const value = argv[i + 1];
    if (flag === "--gain") {
      if (value === undefined) throw new Error("--gain needs a value");
      gain = Number(value);
      if (!(gain >= 0 && gain <= 1)) {
        throw new Error(`--gain must be in [0, 1], got ${value}`);
      }
      i++;
    } else if (flag === "--t-gt") {
      if (value === undefined) throw new Error("--t-gt needs a value");
      tGt = parseTransformSource(value);
      i++;
    } else {
      throw new Error(`unknown flag ${flag}`);
    }
  }
  return { gain, tGt };
}

async function serve(options: SessionOptions): Promise<number> {
  const session = new ProtocolSession(options);
  const rl = readline.createInterface({ input: process.stdin, crlfDelay: Infinity });
  for await (const line of rl) {
    const result = session.handleLine(line);
    process.stdout.write(JSON.stringify(result.reply) + "\n");
    if (result.fatal) {
      console.error(`protocol error: ${result.reply["message"]}`);
      rl.close();
      process.stdin.destroy();
      return 1;
    }
  }
  return 0;
}

async function main(): Promise<number> {
  let options: SessionOptions;
  try {
    options = parseArgs(process.argv.slice(2));
  } catch (error) {
    console.error(`argument error: ${error instanceof Error ? error.message : error}`);
    return 2;
  }
  return serve(options);
}

main().then(
  (code) => {
    process.exitCode = code;
  },
  (error) => {
    console.error(`fatal: ${error instanceof Error ? error.stack : error}`);
    process.exitCode = 1;
  }
);
