"""Independent computation of the expected crop specs for the fixture."""
import json
import math

PADDING = 0.2
FOV = 180.0

def spec(p, lm):
    dx, dy = lm["x"] - p["x"], lm["y"] - p["y"]
    d = math.hypot(dx, dy)
    az = math.degrees(math.atan2(dx, dy)) % 360.0
    rel = (az - p["heading"]) % 360.0
    w, h = p["width"], p["height"]
    x_pix = (w / 2 + rel / 360.0 * w) % w
    eps = math.degrees(math.atan(lm["height"] / d))
    h_pix = eps * h / FOV
    y_bottom = h / 2 - 0.5 * h_pix
    y_top = h / 2 - (1 + PADDING) * h_pix
    half = (y_bottom - y_top) / 2
    left, right = x_pix - half, x_pix + half
    wrapped = left < 0 or right >= w
    box = {
        "x_left": left % w,
        "x_right": right % w,
        "y_top": max(y_top, 0.0),
        "y_bottom": max(y_bottom, 0.0),
        "wrapped": wrapped,
        "clamped": y_top < 0,
    }
    return {
        "pano_id": p["pano_id"], "landmark_id": lm["landmark_id"], "query_image_ref": lm["query_image_ref"],
        "width": w, "height": h, "d_m": d, "azimuth_deg": az, "delta_alpha_deg": rel, "x_pix": x_pix,
        "elevation_deg": eps, "h_pix": h_pix, "box": box,
    }

lms = json.load(open("landmarks.json"))["landmarks"]
panos = [json.loads(l) for l in open("panos.jsonl") if l.strip()]
rows = [spec(p, lm) for p in panos if "heading" in p for lm in lms]
rows.sort(key=lambda r: (r["pano_id"], r["landmark_id"]))
with open("crops.golden.jsonl", "w") as f:
    for r in rows:
        f.write(json.dumps(r) + "\n")
print(len(rows), "specs,", sum(r["box"]["wrapped"] for r in rows), "wrapped,", sum(r["box"]["clamped"] for r in rows), "clamped")
