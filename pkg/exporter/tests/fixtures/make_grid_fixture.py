"""Regenerate the grid-coordinate fixture from the downstream toolkit.

The exporter must emit exactly the grid the toolkit's inference pipeline
assumes; this fixture freezes the toolkit's own output for a spread of
image sizes so the two implementations are compared file-to-file rather
than by importing each other.
"""

import json
import os

from sifkit.maskops import grid_points

CASES = [
    (100, 100, 1),
    (4, 4, 2),
    (64, 64, 8),
    (480, 640, 32),
    (1024, 768, 32),
    (37, 53, 7),
    (3, 3, 5),
    (720, 1280, 16),
]

HERE = os.path.dirname(os.path.abspath(__file__))


def main():
    cases = []
    for h, w, n in CASES:
        pts = grid_points(h, w, n)
        cases.append({"h": h, "w": w, "n": n, "points": [[p.x, p.y] for p in pts]})
    with open(os.path.join(HERE, "grid_points_cases.json"), "w") as fh:
        json.dump(cases, fh, indent=1)
    print(f"wrote {len(cases)} cases")


if __name__ == "__main__":
    main()
