"""Denoiser client that breaks the wire protocol on purpose.

Modes:
  garbage      replies a non-JSON line to the first denoise request
  wrong-op     replies with an unexpected op to denoise
  short-value  replies delta_xi with only three components
  hangup       exits without replying to denoise
  slow         sleeps long past any reasonable deadline before replying
  bad-version  answers the handshake with an unsupported version
"""

import argparse
import json
import sys
import time


def send(obj):
    sys.stdout.write(json.dumps(obj) + "\n")
    sys.stdout.flush()


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--mode", required=True,
                        choices=["garbage", "wrong-op", "short-value",
                                 "hangup", "slow", "bad-version"])
    args = parser.parse_args()

    for line in sys.stdin:
        msg = json.loads(line)
        op = msg["op"]
        if op == "hello":
            if args.mode == "bad-version":
                send({"op": "hello_ok", "version": 99})
            else:
                send({"op": "hello_ok", "version": msg["version"]})
        elif op == "begin":
            send({"op": "begin_ok"})
        elif op == "denoise":
            if args.mode == "garbage":
                sys.stdout.write("not json at all\n")
                sys.stdout.flush()
            elif args.mode == "wrong-op":
                send({"op": "surprise"})
            elif args.mode == "short-value":
                send({"op": "delta_xi", "value": [0.0, 0.0, 0.0]})
            elif args.mode == "hangup":
                sys.exit(0)
            elif args.mode == "slow":
                time.sleep(60.0)
                send({"op": "delta_xi", "value": [0.0] * 6})
            else:
                send({"op": "delta_xi", "value": [0.0] * 6})
        elif op == "end":
            send({"op": "end_ok"})


if __name__ == "__main__":
    main()
