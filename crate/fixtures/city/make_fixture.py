"""Writes the synthetic city fixture: a 3x3 street grid, three towers and
low blocks around them. Re-running reproduces the committed files."""
import json

W, H = 1024, 512

landmarks = [
    {"landmark_id": "L1", "name": "north tower", "x": 50.0, "y": 50.0, "height": 60.0, "query_image_ref": "q/L1.png"},
    {"landmark_id": "L2", "name": "hall", "x": 150.0, "y": 150.0, "height": 45.0, "query_image_ref": "q/L2.png"},
    {"landmark_id": "L3", "name": "needle", "x": 120.0, "y": 50.0, "height": 120.0, "query_image_ref": "q/L3.png"},
]
with open("landmarks.json", "w") as f:
    json.dump({"landmarks": landmarks}, f, indent=2)
    f.write("\n")

panos = []
i = 0
for line in (0.0, 100.0, 200.0):
    for t in range(10, 200, 20):
        for vertical in (True, False):
            x, y = (line, float(t)) if vertical else (float(t), line)
            street = 0.0 if vertical else 90.0
            heading = (street + 97.0 * i + 3.25) % 360.0
            pid = f"p{i:03d}"
            if (x, y) == (0.0, 50.0):
                heading = 270.0  # faces away from L1: box straddles the seam
            panos.append({"pano_id": pid, "x": x, "y": y, "heading": heading, "width": W, "height": H})
            i += 1
with open("panos.jsonl", "w") as f:
    for p in panos:
        f.write(json.dumps(p) + "\n")
    f.write(json.dumps({"pano_id": "p_noheading", "x": 100.0, "y": 110.0, "width": W, "height": H}) + "\n")

nodes = {f"n{a}{b}": (100.0 * a, 100.0 * b) for a in range(3) for b in range(3)}
with open("roads_nodes.csv", "w") as f:
    f.write("node_id,x,y\n")
    for k, (x, y) in nodes.items():
        f.write(f"{k},{x},{y}\n")
with open("roads_edges.csv", "w") as f:
    f.write("edge_id,from,to\n")
    for a in range(3):
        for b in range(3):
            if a < 2:
                f.write(f"h{a}{b},n{a}{b},n{a+1}{b}\n")
            if b < 2:
                f.write(f"v{a}{b},n{a}{b},n{a}{b+1}\n")

def rect(x0, y0, x1, y1, h):
    ring = [[x0, y0], [x1, y0], [x1, y1], [x0, y1], [x0, y0]]
    return {"type": "Feature", "properties": {"height": h}, "geometry": {"type": "Polygon", "coordinates": [ring]}}

buildings = [
    rect(10, 110, 90, 190, 15.0),
    rect(110, 110, 140, 190, 20.0),
    rect(10, 10, 30, 90, 25.0),
    rect(140, 10, 190, 90, 18.0),
]
with open("buildings.geojson", "w") as f:
    json.dump({"type": "FeatureCollection", "features": buildings}, f)
    f.write("\n")

with open("interest.csv", "w") as f:
    f.write("x,y,landmark_id\n")
    for k in range(12):
        f.write(f"{45 + 2 * k},{-5 - 3 * k},L1\n")
        f.write(f"{205 + k},{150 - 4 * k},L2\n")

with open("tags.csv", "w") as f:
    f.write("edge_id,tag\nv10,spine\nv11,spine\n")
