"""Regenerate the golden format fixtures (deterministic; run from repo root).

The checked-in files pin the on-disk layout: if serialization changes in
any byte, test_bundleio's golden tests fail.
"""

import os

import numpy as np

from sifkit.bundleio import AnnotationSet, EmbeddingBundle, write_annotations, write_bundle, write_model
from sifkit.classifier import ClassLayout, init_model
from sifkit.maskops import PromptPoint, rle_encode
from sifkit.numcore import Rng

HERE = os.path.dirname(os.path.abspath(__file__))


def main():
    rng = Rng(20240801)

    points = [PromptPoint(x=2, y=2), PromptPoint(x=6, y=2)]
    bundle = EmbeddingBundle(
        image_id=7,
        height=8,
        width=8,
        points=points,
        logits=[rng.uniform_array((4, 4), -2.0, 2.0) for _ in points],
        embeddings=[rng.uniform_array((3, 2, 2), -1.0, 1.0) for _ in points],
        provenance="synthetic",
    )
    write_bundle(bundle, os.path.join(HERE, "golden.sifb"))

    layout = ClassLayout(base_class_ids=[1, 2], novel_class_ids=[3])
    model = init_model(layout, c_in=3, c_mid=4, d=5, gamma=7.0, seed=99)
    write_model(model, os.path.join(HERE, "golden.sifm"))

    mask = np.zeros((8, 8), dtype=bool)
    mask[2:5, 3:6] = True
    aset = AnnotationSet(
        images=[{"id": 7, "height": 8, "width": 8}],
        annotations=[
            {
                "id": 1,
                "image_id": 7,
                "category_id": 1,
                "segmentation": {"size": [8, 8], "counts": rle_encode(mask)},
            }
        ],
        categories=[
            {"id": 1, "name": "class-a", "split": "base"},
            {"id": 3, "name": "class-c", "split": "novel"},
        ],
    )
    write_annotations(aset, os.path.join(HERE, "golden_annotations.json"))
    print("golden fixtures written to", HERE)


if __name__ == "__main__":
    main()
