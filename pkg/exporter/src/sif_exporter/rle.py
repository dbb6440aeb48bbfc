"""COCO uncompressed RLE: column-major pixel order, alternating run
counts starting with the zero run (first count may be 0)."""

from __future__ import annotations

import numpy as np


def encode(mask: np.ndarray) -> list[int]:
    flat = np.asarray(mask, dtype=bool).flatten(order="F")
    if flat.size == 0:
        return []
    changes = np.nonzero(flat[1:] != flat[:-1])[0] + 1
    bounds = np.concatenate(([0], changes, [flat.size]))
    counts = np.diff(bounds).tolist()
    if flat[0]:
        counts.insert(0, 0)
    return [int(c) for c in counts]


def decode(counts: list[int], h: int, w: int) -> np.ndarray:
    if any(c < 0 for c in counts) or sum(counts) != h * w:
        raise ValueError("corrupt RLE: counts do not cover the mask")
    flat = np.zeros(h * w, dtype=bool)
    pos, value = 0, False
    for c in counts:
        flat[pos : pos + c] = value
        pos += c
        value = not value
    return flat.reshape((h, w), order="F")


def foreground_count(counts: list[int]) -> int:
    return sum(counts[1::2])
