import json

data = json.load(open("data.json"))
wage = data["wage"]
coverage = data["coverage"]
demand = data["demand"]

# --- constraints ---
# Continuous relaxation: hire only the kind with the cheapest coverage per hour.
best_kind = min(range(len(wage)), key=lambda i: wage[i] / coverage[i])

# --- objective ---
workers = [0.0] * len(wage)
workers[best_kind] = demand / coverage[best_kind]
bill = sum(p * w for p, w in zip(wage, workers))
with open("output.json", "w") as f:
    json.dump({"workers": workers, "total_cost": bill}, f)
