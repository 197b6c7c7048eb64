# kind: supervised
import json
import sys

data = json.load(open("data.json"))
out = json.load(open("output.json"))
for i, t in enumerate(out["take"]):
    if t not in (0, 1):
        sys.exit(f"take[{i}] must be 0 or 1, got {t}")
load = sum(w * t for w, t in zip(data["weight"], out["take"]))
if load > data["capacity"] + 1e-6:
    sys.exit(f"bag capacity exceeded: {load} > {data['capacity']}")
