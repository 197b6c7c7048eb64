import itertools
import json

data = json.load(open("data.json"))
value = data["value"]
weight = data["weight"]
capacity = data["capacity"]
n = len(value)

# --- constraints ---
candidates = [
    take
    for take in itertools.product((0, 1), repeat=n)
    if sum(w * t for w, t in zip(weight, take)) <= capacity
]

# --- objective ---
best = max(candidates, key=lambda take: sum(v * t for v, t in zip(value, take)))
objective = sum(v * t for v, t in zip(value, best))
with open("output.json", "w") as f:
    json.dump({"take": list(best), "objective": objective}, f)
