import json

data = json.load(open("data.json"))
profit = data["profit"]
usage = data["usage"]
limit = data["limit"]

# --- constraints ---
# a*x + b*y <= c
rows = [(row[0], row[1], lim) for row, lim in zip(usage, limit)]
rows += [(-1.0, 0.0, 0.0), (0.0, -1.0, 0.0)]


def feasible(x, y):
    return all(a * x + b * y <= c + 1e-9 for a, b, c in rows)


vertices = []
for i in range(len(rows)):
    for j in range(i + 1, len(rows)):
        a1, b1, c1 = rows[i]
        a2, b2, c2 = rows[j]
        det = a1 * b2 - a2 * b1
        if det == 0:
            continue
        x = (c1 * b2 - c2 * b1) / det + 0.0
        y = (a1 * c2 - a2 * c1) / det + 0.0
        if feasible(x, y):
            vertices.append((x, y))

# --- objective ---
best = max(vertices, key=lambda v: profit[0] * v[0] + profit[1] * v[1])
objective = profit[0] * best[0] + profit[1] * best[1]
with open("output.json", "w") as f:
    json.dump({"production": [best[0], best[1]], "objective": float(objective)}, f)
