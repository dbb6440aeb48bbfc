"""Grid-point inference: logits to masks, stability filtering, embedding
classification, background suppression, and final NMS.

Masks and embeddings come precomputed from the bundle; nothing here runs
a segmentation model, which keeps inference deterministic and dependency
free. Everything downstream of mask generation lives here.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bundleio import EmbeddingBundle
from .classifier import ClassifierModel, classifier_forward
from .maskops import Instance, nms, stability_score


@dataclass
class InferenceConfig:
    stability_thresh: float = 0.95
    tau: float = 0.0
    delta: float = 1.0
    nms_iou: float = 0.7
    points_per_side: int = 32

    def __post_init__(self):
        if not 0.0 <= self.stability_thresh <= 1.0:
            raise ValueError("stability_thresh must be in [0, 1]")
        if self.delta <= 0:
            raise ValueError("delta must be positive")
        if not 0.0 < self.nms_iou <= 1.0:
            raise ValueError("nms_iou must be in (0, 1]")
        if self.points_per_side < 1:
            raise ValueError("points_per_side must be >= 1")

    def to_dict(self) -> dict:
        return {
            "stability_thresh": self.stability_thresh,
            "tau": self.tau,
            "delta": self.delta,
            "nms_iou": self.nms_iou,
            "points_per_side": self.points_per_side,
        }


def upsample_nearest(grid: np.ndarray, h: int, w: int) -> np.ndarray:
    """Nearest-neighbor upsampling of a 2-D grid to (h, w)."""
    gh, gw = grid.shape
    if (gh, gw) == (h, w):
        return grid
    ys = np.minimum((np.arange(h) * gh) // h, gh - 1)
    xs = np.minimum((np.arange(w) * gw) // w, gw - 1)
    return grid[np.ix_(ys, xs)]


def run_inference(
    bundle: EmbeddingBundle, model: ClassifierModel, cfg: InferenceConfig = InferenceConfig()
) -> list[Instance]:
    """Turn one bundle into final instances.

    Per record: binarize logits at tau, drop empty masks, drop unstable
    masks, classify the embedding, drop background predictions, then
    suppress overlaps. An empty list is a legal result.
    """
    if bundle.c_in != model.c_in:
        raise ValueError(
            f"shape mismatch: bundle embeddings have {bundle.c_in} channels, model wants {model.c_in}"
        )
    candidates: list[Instance] = []
    for logits, embedding in zip(bundle.logits, bundle.embeddings):
        logits = upsample_nearest(logits, bundle.height, bundle.width)
        mask = logits > cfg.tau
        if not mask.any():
            continue
        stability = stability_score(logits, tau=cfg.tau, delta=cfg.delta)
        if stability < cfg.stability_thresh:
            continue
        scores, _ = classifier_forward(model, embedding)
        row = int(np.argmax(scores))
        if row == model.layout.background_index:
            continue
        candidates.append(
            Instance(
                mask=mask,
                class_id=model.layout.category_for_row(row),
                score=float(scores[row]),
                stability=stability,
            )
        )
    return nms(candidates, cfg.nms_iou)
