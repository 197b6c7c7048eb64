# kind: supervised
import json
import sys

data = json.load(open("data.json"))
out = json.load(open("output.json"))
total = sum(c * a for c, a in zip(data["cost"], out["amount"]))
if abs(total - out["cost"]) > 1e-6 * max(1.0, abs(total)):
    sys.exit(f"reported cost {out['cost']} does not equal the cost of the ration {total}")
