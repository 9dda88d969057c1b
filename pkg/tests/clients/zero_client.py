"""Minimal conforming denoiser client: replies a zero twist to every request."""

import json
import sys


def send(obj):
    sys.stdout.write(json.dumps(obj) + "\n")
    sys.stdout.flush()


def main():
    for line in sys.stdin:
        msg = json.loads(line)
        op = msg["op"]
        if op == "hello":
            send({"op": "hello_ok", "version": msg["version"]})
        elif op == "begin":
            send({"op": "begin_ok"})
        elif op == "denoise":
            send({"op": "delta_xi", "value": [0.0] * 6})
        elif op == "end":
            send({"op": "end_ok"})
        else:
            print(f"unknown op {op!r}", file=sys.stderr)
            sys.exit(1)


if __name__ == "__main__":
    main()
