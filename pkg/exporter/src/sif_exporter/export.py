"""Export orchestration: one SIFB bundle per annotated image plus the
reduced annotation JSON."""

from __future__ import annotations

import json
import os

import numpy as np
from PIL import Image

from . import annotations as ann_mod
from . import sifb
from .grid import grid_points


def load_image(path: str) -> np.ndarray:
    with Image.open(path) as img:
        return np.asarray(img.convert("RGB"))


def export(
    image_dir: str,
    coco_path: str,
    out_dir: str,
    backend,
    points_per_side: int = 32,
    novel_category_ids: set | None = None,
) -> dict:
    """Run the backend over every image listed in the COCO file.

    Images carrying no annotations still get bundles; their annotation
    list in the reduced JSON is simply empty. Returns a summary dict.
    """
    with open(coco_path, "rb") as fh:
        coco = json.loads(fh.read().decode("utf-8"))
    file_names = {im["id"]: im.get("file_name") for im in coco.get("images", [])}
    reduced = ann_mod.reduce_coco(coco, novel_category_ids=novel_category_ids or set())
    os.makedirs(out_dir, exist_ok=True)

    written = []
    for im in reduced["images"]:
        name = file_names.get(im["id"])
        if not name:
            raise ValueError(f"image {im['id']} has no file_name in the source annotations")
        image = load_image(os.path.join(image_dir, name))
        if image.shape[:2] != (im["height"], im["width"]):
            raise ValueError(
                f"image {im['id']} is {image.shape[:2]}, annotations say "
                f"({im['height']}, {im['width']})"
            )
        points = grid_points(im["height"], im["width"], points_per_side)
        records = backend.capture(image, points)
        path = os.path.join(out_dir, f"bundle_{im['id']:06d}.sifb")
        sifb.write_bundle(
            path,
            image_id=im["id"],
            height=im["height"],
            width=im["width"],
            points=points,
            logits=[r[0] for r in records],
            embeddings=[r[1] for r in records],
            provenance=backend.provenance,
            provenance_detail=backend.provenance_detail,
        )
        written.append(path)
    ann_mod.write_reduced(reduced, os.path.join(out_dir, "annotations.json"))
    return {
        "bundles": written,
        "annotations": os.path.join(out_dir, "annotations.json"),
        "images": len(reduced["images"]),
        "points_per_image": points_per_side**2,
    }
