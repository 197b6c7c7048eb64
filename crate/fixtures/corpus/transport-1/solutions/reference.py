import itertools
import json

data = json.load(open("data.json"))
supply = data["supply"]
demand = data["demand"]
cost = data["cost"]
S, D = len(supply), len(demand)

# --- constraints ---
# Transportation polytopes have integral vertices, so integer enumeration is exact.
ranges = [range(min(supply[i], demand[j]) + 1) for i in range(S) for j in range(D)]
plans = []
for flat in itertools.product(*ranges):
    flow = [list(flat[i * D:(i + 1) * D]) for i in range(S)]
    if any(sum(flow[i]) > supply[i] for i in range(S)):
        continue
    if any(sum(flow[i][j] for i in range(S)) != demand[j] for j in range(D)):
        continue
    plans.append(flow)

# --- objective ---
def total(flow):
    return sum(cost[i][j] * flow[i][j] for i in range(S) for j in range(D))


best = min(plans, key=total)
with open("output.json", "w") as f:
    json.dump({"flow": [[float(x) for x in row] for row in best], "total_cost": float(total(best))}, f)
