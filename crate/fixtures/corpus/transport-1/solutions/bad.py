import json

data = json.load(open("data.json"))
supply = data["supply"]
demand = data["demand"]
cost = data["cost"]
S, D = len(supply), len(demand)

# --- constraints ---
# Serve each store from its cheapest depot, capped by that depot's stock.
remaining = list(supply)
flow = [[0.0] * D for _ in range(S)]
for j in range(D):
    i = min(range(S), key=lambda i: cost[i][j])
    ship = min(remaining[i], demand[j])
    flow[i][j] = float(ship)
    remaining[i] -= ship

# --- objective ---
total = sum(cost[i][j] * flow[i][j] for i in range(S) for j in range(D))
with open("output.json", "w") as f:
    json.dump({"flow": flow, "total_cost": float(total)}, f)
