"""Expected colors for out-of-dictionary words under the hashed-trigram embedder.

Reimplements the embedder (FNV-1a 64 over each character trigram, 256 buckets,
float32 unit vectors), the five nearest neighbours by Euclidean distance and
the reciprocal-distance blend.
"""

import json
from pathlib import Path

import numpy as np

ROOT = Path(__file__).resolve().parents[2]
QUERIES = [
    "sunset orange", "ocean foam", "mossy stone", "bubblegum pinkish", "stormy grey sea",
    "burnt toast", "electric grape", "faded denim", "rusty nail", "lemon chiffon cake",
    "midnight ink", "pistachio cream", "coral reef glow", "smoky quartz", "wet sand",
    "cherry cola", "glacier mint", "old parchment", "volcanic ash", "peacock teal",
]


def fnv1a(data):
    h = 0xCBF29CE484222325
    for b in data:
        h ^= b
        h = (h * 0x100000001B3) & 0xFFFFFFFFFFFFFFFF
    return h


def normalize(v):
    norm = np.sqrt(np.sum(v.astype(np.float64) ** 2))
    if norm == 0:
        return v
    return (v.astype(np.float64) / norm).astype(np.float32)


def embed(text):
    text = " ".join(text.split()).lower()
    chars = f" {text} "
    v = np.zeros(256, dtype=np.float32)
    for i in range(len(chars) - 2):
        v[fnv1a(chars[i : i + 3].encode("utf-8")) % 256] += 1
    return normalize(v)


def load():
    words, colors, seen = [], [], set()
    for line in open(ROOT / "data" / "xkcd_rgb.txt", encoding="utf-8"):
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        word, hexcode = line.rstrip("\n").split("\t")
        word = " ".join(word.split()).lower()
        if word in seen:
            continue
        seen.add(word)
        words.append(word)
        colors.append([int(hexcode.strip()[i : i + 2], 16) for i in (1, 3, 5)])
    return words, np.array(colors, dtype=np.float64)


def main():
    words, colors = load()
    table = np.stack([normalize(embed(w)) for w in words]).astype(np.float64)
    out = {}
    for q in QUERIES:
        assert q not in words, q
        query = normalize(embed(q)).astype(np.float64)
        dist = np.sqrt(np.sum((table - query) ** 2, axis=1))
        order = sorted(range(len(words)), key=lambda i: (dist[i], i))[:5]
        weights = np.array([1.0 / dist[i] for i in order])
        weights /= weights.sum()
        rgb = np.clip(np.round(weights @ colors[order]), 0, 255).astype(int)
        out[q] = "#%02x%02x%02x" % tuple(rgb)
    path = Path(__file__).with_suffix(".json")
    path.write_text(json.dumps(out, indent=2) + "\n")


if __name__ == "__main__":
    main()
