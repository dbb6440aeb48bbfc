import json
import os
import sys

import numpy as np
import pytest
from PIL import Image

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from sif_exporter import rle  # noqa: E402


def checkerboard(h, w, tile=8):
    ys = np.arange(h)[:, None] // tile
    xs = np.arange(w)[None, :] // tile
    board = ((ys + xs) % 2 * 200 + 30).astype(np.uint8)
    return np.stack([board, board // 2, 255 - board], axis=2)


@pytest.fixture(scope="session")
def coco_world(tmp_path_factory):
    """Tiny image directory + COCO file with uncompressed-RLE annotations."""
    root = tmp_path_factory.mktemp("cocoworld")
    img_dir = root / "images"
    img_dir.mkdir()
    images, annotations = [], []
    masks = {}
    ann_id = 0
    for image_id, (h, w) in enumerate([(64, 64), (48, 80), (64, 64)], start=1):
        name = f"img_{image_id}.png"
        Image.fromarray(checkerboard(h, w)).save(img_dir / name)
        images.append({"id": image_id, "height": h, "width": w, "file_name": name})
        if image_id == 3:
            continue  # one image deliberately has no annotations
        for k in range(2):
            mask = np.zeros((h, w), dtype=bool)
            y0, x0 = 5 + 20 * k, 8 + 25 * k
            mask[y0 : y0 + 12, x0 : x0 + 14] = True
            ann_id += 1
            masks[ann_id] = mask
            annotations.append(
                {
                    "id": ann_id,
                    "image_id": image_id,
                    "category_id": 1 + k,
                    "segmentation": {"size": [h, w], "counts": rle.encode(mask)},
                    "area": int(mask.sum()),
                    "iscrowd": 0,
                }
            )
    coco = {
        "images": images,
        "annotations": annotations,
        "categories": [{"id": 1, "name": "widget"}, {"id": 2, "name": "gadget"}],
    }
    coco_path = root / "coco.json"
    coco_path.write_text(json.dumps(coco))
    return {"root": root, "images": img_dir, "coco": coco_path, "masks": masks, "doc": coco}
