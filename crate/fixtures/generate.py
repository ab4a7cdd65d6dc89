"""Regenerates the fixture corpus and the expected constants in manifest.json.

Expected values are computed here with scikit-image and brute force so the
Rust implementation is checked against an independent computation.
"""

import csv
import itertools
import json
import math
import random
from pathlib import Path

import numpy as np
from skimage.color import rgb2lab

ROOT = Path(__file__).parent
FIXED = "#123456"
GRAYS = ["#000000", "#404040", "#808080", "#c0c0c0", "#ffffff"]

rng = random.Random(20240501)


def hexcode(rgb):
    return "#%02x%02x%02x" % rgb


def in_fixed_bin(rgb):
    return (rgb[0] // 16, rgb[1] // 16, rgb[2] // 16) == (1, 3, 5)


def random_color(inside):
    if inside:
        return (rng.randint(16, 31), rng.randint(48, 63), rng.randint(80, 95))
    while True:
        c = tuple(rng.randint(0, 255) for _ in range(3))
        if not in_fixed_bin(c):
            return c


THEMES = [
    ("Summer Sale", "marketing", ["summer", "sale", "beach"]),
    ("Coffee Shop Menu", "menu", ["coffee", "cafe", "breakfast"]),
    ("Wedding Invitation", "invitation", ["wedding", "love", "elegant"]),
    ("Tech Conference", "poster", ["technology", "conference", "future"]),
    ("Yoga Retreat", "flyer", ["yoga", "calm", "nature"]),
    ("Halloween Party", "invitation", ["halloween", "spooky", "night"]),
    ("Bakery Opening", "announcement", ["bakery", "bread", "opening"]),
    ("Ocean Cleanup", "poster", ["ocean", "environment", "volunteer"]),
    ("Winter Collection", "marketing", ["winter", "fashion", "snow"]),
    ("Jazz Night", "event", ["jazz", "music", "evening"]),
]


def document(i, inside):
    title, category, keywords = THEMES[i % len(THEMES)]
    title = f"{title} {i}"
    width, height = (1.0, 0.5625) if i % 2 else (0.75, 1.0)
    elements = [
        {
            "id": "bg",
            "type": "colored_background",
            "layout": {"left": 0.0, "top": 0.0, "width": width, "height": height},
            "color_palette": [hexcode(random_color(inside))],
        },
        {
            "id": "headline",
            "type": "text",
            "layout": {"left": 0.1, "top": 0.1, "width": 0.5, "height": 0.1},
            "text": title.upper(),
            "color_palette": [hexcode(random_color(inside))],
        },
        {
            "id": "shape",
            "type": "svg",
            "layout": {"left": 0.2, "top": 0.3, "width": 0.3, "height": 0.3},
            "opacity": 0.9,
            "color_palette": [hexcode(random_color(inside)) for _ in range(1 + i % 3)],
        },
    ]
    if i % 2 == 0:
        elements.append(
            {
                "id": "photo",
                "type": "raster",
                "layout": {"left": 0.55, "top": 0.35, "width": 0.4, "height": 0.4},
                "color_palette": [hexcode(random_color(inside)) for _ in range(3 + i % 3)],
            }
        )
    if i % 3 == 0:
        elements.append(
            {
                "id": "caption",
                "type": "text",
                "layout": {"left": 0.1, "top": 0.8, "width": 0.6, "height": 0.05},
                "text": " ".join(keywords),
                "color_palette": [hexcode(random_color(inside))],
            }
        )
    return {
        "id": f"doc-{i:02d}",
        "title": title,
        "category": category,
        "keywords": keywords,
        "layout": {"width": width, "height": height},
        "elements": elements,
    }


DESCRIPTIONS = [
    "green grass",
    "sunset over the sea",
    "a foggy morning in the forest",
    "neon city lights at night",
    "autumn leaves",
    "fresh mint ice cream",
    "desert sand dunes",
    "cherry blossom spring",
    "deep ocean blue",
    "warm fireplace",
    "lavender field",
    "stormy sky",
    "tropical fruit salad",
    "vintage paper",
    "arctic glacier",
    "chocolate and caramel",
    "rainbow candy",
    "rusty metal",
    "royal purple velvet",
    "early morning coffee",
    "snowy mountain peak",
    "lemonade stand",
    "midnight galaxy",
    "rose garden",
    "olive grove",
    "pastel nursery",
    "tomato soup",
    "volcanic rock",
    "peacock feathers",
    "sea glass",
]


def lab(hexes):
    rgb = np.array([[int(h[i : i + 2], 16) for i in (1, 3, 5)] for h in hexes], dtype=float) / 255.0
    return rgb2lab(rgb.reshape(1, -1, 3)).reshape(-1, 3)


def delta_e(a, b):
    return float(np.linalg.norm(a - b))


def min_assignment(p, q):
    lp, lq = lab(p), lab(q)
    best = min(sum(delta_e(lp[i], lq[j]) for i, j in enumerate(perm)) for perm in itertools.permutations(range(len(q))))
    return best / len(p)


def diversity(p):
    lp = lab(p)
    pairs = list(itertools.combinations(range(len(p)), 2))
    return sum(delta_e(lp[i], lp[j]) for i, j in pairs) / len(pairs)


def stat(values):
    mean = sum(values) / len(values)
    std = math.sqrt(sum((v - mean) ** 2 for v in values) / len(values))
    return {"mean": round(mean, 2), "std": round(std, 2)}


def main():
    docs = [document(i, inside=10 <= i < 15) for i in range(30)]
    (ROOT / "completion").mkdir(exist_ok=True)
    with open(ROOT / "completion" / "corpus.jsonl", "w") as f:
        for d in docs:
            f.write(json.dumps(d, separators=(",", ":")) + "\n")
    splits = {"train": [d["id"] for d in docs[:10]], "validation": [], "test": [d["id"] for d in docs[10:]]}
    with open(ROOT / "completion" / "splits.json", "w") as f:
        json.dump(splits, f, indent=2)
        f.write("\n")

    pairs = []
    for i, text in enumerate(DESCRIPTIONS):
        palette = [hexcode(random_color(False)) for _ in range(5)]
        pairs.append({"id": f"pat-{i:02d}", "text": text, "palette": palette, "split": "train" if i >= 10 else "test"})
    (ROOT / "pat").mkdir(exist_ok=True)
    with open(ROOT / "pat" / "pat.csv", "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["id", "text", "palette", "split"])
        for p in pairs:
            w.writerow([p["id"], p["text"], " ".join(p["palette"]), p["split"]])

    test_docs = docs[10:]
    fixed_correct = sum(
        all(in_fixed_bin(tuple(int(h[i : i + 2], 16) for i in (1, 3, 5))) for e in d["elements"] for h in e["color_palette"])
        for d in test_docs
    )
    test_pairs = [p for p in pairs if p["split"] == "test"]
    manifest = {
        "completion": {
            "test_documents": len(test_docs),
            "fixed_color": FIXED,
            "fixed_color_accuracy": round(100.0 * fixed_correct / len(test_docs), 2),
            "fixed_color_distribution": 0.0,
            "echo_accuracy": 100.0,
        },
        "generation": {
            "test_pairs": len(test_pairs),
            "fixed_palette": GRAYS,
            "fixed_palette_similarity": stat([min_assignment(GRAYS, p["palette"]) for p in test_pairs]),
            "fixed_palette_diversity": stat([diversity(GRAYS)] * len(test_pairs)),
            "ground_truth_diversity": stat([diversity(p["palette"]) for p in test_pairs]),
            "echo_similarity": {"mean": 0.0, "std": 0.0},
        },
    }
    with open(ROOT / "manifest.json", "w") as f:
        json.dump(manifest, f, indent=2)
        f.write("\n")


if __name__ == "__main__":
    main()
