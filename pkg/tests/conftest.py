import numpy as np
import pytest

from sifkit.classifier import ClassLayout, TrainConfig, train_classifier
from sifkit.numcore import Rng


def broadcast_embedding(vector, h=8, w=8):
    """Tile a channel vector over an h x w spatial grid."""
    v = np.asarray(vector, dtype=np.float64)
    return np.repeat(np.repeat(v[:, None, None], h, axis=1), w, axis=2)


def make_prototypes(n, c_in, seed=3000, max_cos=0.3):
    """Unit vectors with pairwise cosine below max_cos (index 0 = background)."""
    rng = Rng(seed)
    protos = []
    while len(protos) < n:
        v = rng.normal_vector(c_in)
        v /= np.linalg.norm(v)
        if all(float(v @ p) < max_cos for p in protos):
            protos.append(v)
    return protos


@pytest.fixture(scope="session")
def tiny_world():
    """A trained 2-base/1-novel classifier plus its prototype table.

    Category ids: 0 background, 1-2 base, 3 novel. Embeddings are
    prototype directions plus noise, broadcast over 8x8.
    """
    layout = ClassLayout(base_class_ids=[1, 2], novel_class_ids=[3])
    c_in = 8
    protos = make_prototypes(4, c_in)  # bg, base1, base2, novel3
    rng = Rng(77)
    samples = []
    for cat, proto in zip([0, 1, 2], protos[:3]):
        for _ in range(30):
            v = proto + 0.05 * rng.normal_vector(c_in)
            samples.append((broadcast_embedding(v), cat))
    # Long enough that base rows align tightly with their feature clusters;
    # weakly trained rows lose base queries to freshly imprinted novel rows.
    cfg = TrainConfig(epochs=60, learning_rate=0.02, seed=5)
    model = train_classifier(samples, layout, cfg, c_mid=8, d=16)
    return {
        "model": model,
        "layout": layout,
        "protos": {0: protos[0], 1: protos[1], 2: protos[2], 3: protos[3]},
        "c_in": c_in,
    }
