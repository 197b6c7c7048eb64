import json

data = json.load(open("data.json"))

# --- constraints ---
limits = data["capacity_hours"]

# --- objective ---
with open("output.json", "w") as f:
    json.dump({"x": 0.0, "y": 0.0, "objective": 0.0}, f)
