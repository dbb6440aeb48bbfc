"""Binary mask machinery for the inference pipeline.

Masks are 2-D boolean numpy arrays, logit grids are 2-D float64 arrays.
RLE follows the COCO uncompressed convention: column-major pixel order,
alternating run counts starting with the zero run (which may be 0).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .numcore import Rng


@dataclass(frozen=True)
class StructuringElement:
    """Rectangular erosion kernel anchored at its center; extents must be odd."""

    kh: int = 3
    kw: int = 3

    def __post_init__(self):
        if self.kh < 1 or self.kw < 1 or self.kh % 2 == 0 or self.kw % 2 == 0:
            raise ValueError("kernel extents must be odd and >= 1")


@dataclass(frozen=True)
class PromptPoint:
    x: int
    y: int
    label: int = 1  # foreground flag; always 1 in this toolkit


@dataclass
class Instance:
    """One predicted instance: mask, category, classifier score, stability."""

    mask: np.ndarray
    class_id: int
    score: float
    stability: float = 1.0


def as_mask(values) -> np.ndarray:
    m = np.asarray(values)
    if m.ndim != 2:
        raise ValueError("mask must be 2-D")
    return m.astype(bool)


def erode(mask: np.ndarray, k: StructuringElement = StructuringElement()) -> np.ndarray:
    """Binary erosion: keep a pixel only if the whole kernel fits inside
    the foreground, with out-of-bounds treated as background."""
    mask = as_mask(mask)
    if k.kh == 1 and k.kw == 1:
        return mask.copy()
    ph, pw = k.kh // 2, k.kw // 2
    padded = np.pad(mask, ((ph, ph), (pw, pw)), constant_values=False)
    windows = np.lib.stride_tricks.sliding_window_view(padded, (k.kh, k.kw))
    return windows.all(axis=(2, 3))


def rle_encode(mask: np.ndarray) -> list[int]:
    """COCO uncompressed counts: column-major, zero-run first."""
    mask = as_mask(mask)
    flat = mask.flatten(order="F")
    if flat.size == 0:
        return []
    changes = np.nonzero(flat[1:] != flat[:-1])[0] + 1
    bounds = np.concatenate(([0], changes, [flat.size]))
    counts = np.diff(bounds).tolist()
    if flat[0]:
        counts.insert(0, 0)
    return [int(c) for c in counts]


def rle_decode(counts: list[int], h: int, w: int) -> np.ndarray:
    """Inverse of rle_encode; counts must tile the h*w pixels exactly."""
    counts = list(counts)
    if any(c < 0 for c in counts) or sum(counts) != h * w:
        raise ValueError("corrupt RLE: counts do not cover the mask")
    flat = np.zeros(h * w, dtype=bool)
    pos = 0
    value = False
    for c in counts:
        flat[pos : pos + c] = value
        pos += c
        value = not value
    return flat.reshape((h, w), order="F")


def mask_iou(a: np.ndarray, b: np.ndarray) -> float:
    a, b = as_mask(a), as_mask(b)
    if a.shape != b.shape:
        raise ValueError("dimension mismatch")
    union = int(np.logical_or(a, b).sum())
    if union == 0:
        raise ValueError("undefined IoU: both masks empty")
    inter = int(np.logical_and(a, b).sum())
    return inter / union


def stability_score(logits: np.ndarray, tau: float = 0.0, delta: float = 1.0) -> float:
    """IoU between the strict (> tau + delta) and loose (> tau - delta)
    binarizations; 0 when even the loose mask is empty.

    High values mean the mask barely changes as the threshold moves, i.e.
    the prediction is reliable.
    """
    if delta <= 0:
        raise ValueError("delta must be positive")
    logits = np.asarray(logits, dtype=np.float64)
    loose = int((logits > tau - delta).sum())
    if loose == 0:
        return 0.0
    strict = int((logits > tau + delta).sum())
    return strict / loose  # strict set is a subset of loose, so IoU = ratio


def nms(instances: list[Instance], iou_thresh: float = 0.7) -> list[Instance]:
    """Greedy class-agnostic suppression.

    Instances are visited by descending score (ties keep input order) and
    kept only if their IoU with every already-kept mask is <= iou_thresh.
    """
    if not 0 < iou_thresh <= 1:
        raise ValueError("iou_thresh must be in (0, 1]")
    order = sorted(range(len(instances)), key=lambda i: -instances[i].score)
    kept: list[Instance] = []
    for i in order:
        cand = instances[i]
        if all(mask_iou(cand.mask, k.mask) <= iou_thresh for k in kept):
            kept.append(cand)
    return kept


def grid_points(h: int, w: int, points_per_side: int) -> list[PromptPoint]:
    """Uniform point grid: ((i+0.5)*w/n, (j+0.5)*h/n), rounded to the
    nearest pixel, clamped in-bounds, row-major (x varies fastest)."""
    n = points_per_side
    if n < 1:
        raise ValueError("points_per_side must be >= 1")
    points = []
    for j in range(n):
        y = min(max(int(np.floor((j + 0.5) * h / n + 0.5)), 0), h - 1)
        for i in range(n):
            x = min(max(int(np.floor((i + 0.5) * w / n + 0.5)), 0), w - 1)
            points.append(PromptPoint(x=x, y=y))
    return points


BACKGROUND_TARGET = -1


def sample_training_points(
    instance_masks: list[np.ndarray],
    image_h: int,
    image_w: int,
    n_points: int,
    k: StructuringElement,
    rng: Rng,
) -> list[tuple[PromptPoint, int]]:
    """Instance-balanced point sampling for training prompts.

    Every instance, and the background (complement of all instances), is
    first eroded by `k`; each draw then picks one target uniformly among
    those with a nonempty eroded region (equal weight per target, no area
    bias, so small objects are sampled as often as large ones) and a pixel
    uniformly inside it. Returns (point, target) pairs where target is the
    instance index or BACKGROUND_TARGET.
    """
    if n_points < 1:
        raise ValueError("n_points must be >= 1")
    masks = [as_mask(m) for m in instance_masks]
    for m in masks:
        if m.shape != (image_h, image_w):
            raise ValueError("instance mask does not match image size")
    background = np.ones((image_h, image_w), dtype=bool)
    for m in masks:
        background &= ~m

    regions: list[tuple[int, np.ndarray]] = []
    for idx, m in enumerate(masks):
        eroded = erode(m, k)
        if eroded.any():
            regions.append((idx, eroded))
    eroded_bg = erode(background, k)
    if eroded_bg.any():
        regions.append((BACKGROUND_TARGET, eroded_bg))
    if not regions:
        raise ValueError("no sampleable region after erosion")

    coords = [np.argwhere(region) for _, region in regions]
    out = []
    for _ in range(n_points):
        which = rng.choose_weighted([1.0] * len(regions))
        target, _ = regions[which]
        ys_xs = coords[which]
        row = ys_xs[rng.next_below(len(ys_xs))]
        out.append((PromptPoint(x=int(row[1]), y=int(row[0])), target))
    return out
