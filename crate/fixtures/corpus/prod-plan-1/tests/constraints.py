# kind: supervised
import json
import sys

data = json.load(open("data.json"))
out = json.load(open("output.json"))
for key in ("x", "y"):
    if out[key] < -1e-6:
        sys.exit(f"quantity '{key}' is negative: {out[key]}")
if out["x"] + out["y"] > data["capacity"] + 1e-6:
    sys.exit(f"machine capacity exceeded: {out['x'] + out['y']} > {data['capacity']}")
