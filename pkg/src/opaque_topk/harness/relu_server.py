"""Reference external scorer: ReLU of the first payload component.

Run as ``python -m opaque_topk.harness.relu_server`` and pass that command
line to ``--scorer``.
"""

import json
import sys


def main() -> None:
    for line in sys.stdin:
        if not line.strip():
            continue
        request = json.loads(line)
        scores = [max(0.0, float(p[0])) for p in request["payloads"]]
        sys.stdout.write(json.dumps({"scores": scores}) + "\n")
        sys.stdout.flush()


if __name__ == "__main__":
    main()
