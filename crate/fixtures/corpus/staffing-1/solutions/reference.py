import itertools
import json
import math

data = json.load(open("data.json"))
wage = data["wage"]
coverage = data["coverage"]
demand = data["demand"]

# --- constraints ---
limits = [math.ceil(demand / c) for c in coverage]
teams = [
    team
    for team in itertools.product(*(range(m + 1) for m in limits))
    if sum(c * w for c, w in zip(coverage, team)) >= demand
]

# --- objective ---
best = min(teams, key=lambda team: sum(p * w for p, w in zip(wage, team)))
bill = sum(p * w for p, w in zip(wage, best))
with open("output.json", "w") as f:
    json.dump({"workers": list(best), "total_cost": bill}, f)
