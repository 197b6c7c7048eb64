import json

data = json.load(open("data.json"))
cost = data["cost"]
requirement = data["requirement"]
content = data["content"]

# --- constraints ---
# a*x + b*y <= c; coverage rows are negated into <= form
rows = [(-row[0], -row[1], -req) for row, req in zip(content, requirment)]
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
best = min(vertices, key=lambda v: cost[0] * v[0] + cost[1] * v[1])
total = cost[0] * best[0] + cost[1] * best[1]
with open("output.json", "w") as f:
    json.dump({"amount": [best[0], best[1]], "cost": float(total)}, f)
