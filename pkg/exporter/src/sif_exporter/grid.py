"""Uniform prompt grid.

Must produce exactly the same pixel coordinates as the downstream
toolkit's grid (verified against a checked-in fixture): points at
((i + 0.5) * w / n, (j + 0.5) * h / n), rounded half-up to the nearest
pixel, clamped in-bounds, row-major with x varying fastest.
"""

from __future__ import annotations

import math


def grid_points(h: int, w: int, points_per_side: int) -> list[tuple[int, int]]:
    n = points_per_side
    if n < 1:
        raise ValueError("points_per_side must be >= 1")
    out = []
    for j in range(n):
        y = min(max(math.floor((j + 0.5) * h / n + 0.5), 0), h - 1)
        for i in range(n):
            x = min(max(math.floor((i + 0.5) * w / n + 0.5), 0), w - 1)
            out.append((x, y))
    return out
