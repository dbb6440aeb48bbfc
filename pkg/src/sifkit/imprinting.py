"""Novel-class weight imprinting.

A novel class's cosine row is written directly from its shots: each shot
embedding runs through the frozen feature extractor, the features are
unit-normalized and averaged, and the average replaces the reserved row.
No other parameter changes, so base-class behavior is untouched. The
averaged row is stored without re-normalization; the forward pass
normalizes rows, so any positive rescaling of the stored row is
prediction-neutral.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .classifier import ClassifierModel, feature_extract
from .numcore import ZERO_NORM_EPS


@dataclass
class ShotSet:
    """Few-shot embeddings for one novel class."""

    class_id: int
    embeddings: list  # each (c_in, h, w)

    @property
    def n_shots(self) -> int:
        return len(self.embeddings)

    def validate(self) -> "ShotSet":
        if self.n_shots < 1:
            raise ValueError("a shot set needs at least one embedding")
        return self


def imprint_novel_class(model: ClassifierModel, shots: ShotSet) -> ClassifierModel:
    """Return a copy of the model with the shot class's row imprinted.

    The row becomes the mean of the unit-normalized shot features and is
    flagged active. Everything else is copied bit-identically.
    """
    shots.validate()
    if shots.class_id not in model.layout.novel_class_ids:
        raise ValueError(f"category {shots.class_id} is not a novel slot")
    row = model.layout.row_for_category(shots.class_id)

    acc = np.zeros(model.d)
    for emb in shots.embeddings:
        w = feature_extract(model, emb)
        norm = float(np.linalg.norm(w))
        if norm <= ZERO_NORM_EPS:
            raise ValueError("degenerate shot: zero-norm feature")
        acc += w / norm

    out = model.copy()
    out.weights[row] = acc / shots.n_shots
    out.layout.active_novel[row - 1 - model.layout.n_base] = True
    return out


def remove_novel_class(model: ClassifierModel, class_id: int) -> ClassifierModel:
    """Zero an imprinted row and flag it inactive; inverse of imprinting."""
    if class_id not in model.layout.novel_class_ids:
        raise ValueError(f"category {class_id} is not a novel slot")
    row = model.layout.row_for_category(class_id)
    slot = row - 1 - model.layout.n_base
    if not model.layout.active_novel[slot]:
        raise ValueError(f"novel category {class_id} was never imprinted")
    out = model.copy()
    out.weights[row] = 0.0
    out.layout.active_novel[slot] = False
    return out
