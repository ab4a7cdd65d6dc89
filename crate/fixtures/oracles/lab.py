"""CIELAB (D65) values for a fixed set of colors, computed with scikit-image."""

import json
import random
from pathlib import Path

import numpy as np
from skimage.color import rgb2lab

rng = random.Random(7)
colors = [(r, g, b) for r in (0, 255) for g in (0, 255) for b in (0, 255)]
colors += [(128, 128, 128), (18, 52, 86)]
colors += [tuple(rng.randint(0, 255) for _ in range(3)) for _ in range(40)]
lab = rgb2lab(np.array(colors, dtype=float).reshape(1, -1, 3) / 255.0).reshape(-1, 3)
out = [{"hex": "#%02x%02x%02x" % c, "lab": [round(float(x), 6) for x in v]} for c, v in zip(colors, lab)]
Path(__file__).with_suffix(".json").write_text(json.dumps(out, indent=1) + "\n")
