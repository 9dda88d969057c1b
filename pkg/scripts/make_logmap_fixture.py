#!/usr/bin/env python3
"""Freeze a transform/twist fixture for cross-implementation checks.

Writes a JSON file of random rigid transforms together with their logarithm
twists as computed by this package. Independent implementations (for example
the external denoiser client) load the file and verify that their own log
map agrees to tight tolerance on every entry.

Usage:
    python3 scripts/make_logmap_fixture.py -o logmap_fixture.json
"""

from __future__ import annotations

import argparse
import json

import numpy as np

from lsdcalib import se3


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--count", type=int, default=1000)
    parser.add_argument("--max-angle", type=float, default=np.pi - 0.1,
                        help="rotation magnitude cap, radians")
    parser.add_argument("--max-trans", type=float, default=2.0,
                        help="translation magnitude cap per axis, meters")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--output", "-o", default="logmap_fixture.json")
    args = parser.parse_args(argv)

    rng = np.random.default_rng(args.seed)
    entries = []
    for _ in range(args.count):
        axis = rng.normal(size=3)
        axis /= np.linalg.norm(axis)
        angle = rng.uniform(0.0, args.max_angle)
        trans = rng.uniform(-args.max_trans, args.max_trans, 3)
        xi = np.concatenate([axis * angle, trans])
        T = se3.exp_map(xi)
        entries.append({
            "transform": [float(v) for v in T.reshape(-1)],
            "twist": [float(v) for v in se3.log_map(T)],
        })
    # a few hand-picked edge cases: identity, pure translation, tiny angle
    for xi in (np.zeros(6),
               np.array([0.0, 0.0, 0.0, 1.0, -2.0, 0.5]),
               np.array([1e-9, -2e-9, 1e-9, 0.1, 0.2, 0.3])):
        T = se3.exp_map(xi)
        entries.append({
            "transform": [float(v) for v in T.reshape(-1)],
            "twist": [float(v) for v in se3.log_map(T)],
        })

    payload = {
        "seed": args.seed,
        "count": len(entries),
        "tolerance": 1e-9,
        "entries": entries,
    }
    with open(args.output, "w") as fh:
        json.dump(payload, fh, indent=1)
        fh.write("\n")
    print(f"wrote {len(entries)} entries to {args.output}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
