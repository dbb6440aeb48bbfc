"""COCO annotation reduction.

Keeps only the fields the downstream toolkit reads (images: id/height/
width; annotations: id/image_id/category_id/segmentation; categories:
id/name plus a base|novel split tag) and converts every segmentation to
uncompressed column-major RLE. Polygon and compressed-RLE sources need
pycocotools; uncompressed RLE dicts convert natively.
"""

from __future__ import annotations

import json

import numpy as np

from . import rle


def _to_uncompressed_counts(segmentation, height: int, width: int, ann_id) -> list[int]:
    if isinstance(segmentation, dict) and isinstance(segmentation.get("counts"), list):
        counts = [int(c) for c in segmentation["counts"]]
        if sum(counts) != height * width:
            raise ValueError(f"annotation {ann_id}: RLE counts do not cover the image")
        return counts
    try:
        from pycocotools import mask as mask_utils
    except ImportError as exc:
        raise ValueError(
            f"annotation {ann_id}: segmentation is not uncompressed RLE and "
            "pycocotools is not installed to convert it"
        ) from exc
    if isinstance(segmentation, list):  # polygons
        rles = mask_utils.frPyObjects(segmentation, height, width)
        dense = mask_utils.decode(mask_utils.merge(rles))
    else:  # compressed RLE
        dense = mask_utils.decode(segmentation)
    return rle.encode(np.asarray(dense, dtype=bool))


def reduce_coco(doc: dict, novel_category_ids: set) -> dict:
    """Reduce a COCO dict to the supported subset with uncompressed RLE."""
    images = [
        {"id": im["id"], "height": im["height"], "width": im["width"]}
        for im in doc.get("images", [])
    ]
    sizes = {im["id"]: (im["height"], im["width"]) for im in images}
    annotations = []
    for a in doc.get("annotations", []):
        if a["image_id"] not in sizes:
            raise ValueError(f"annotation {a['id']} references unknown image {a['image_id']}")
        h, w = sizes[a["image_id"]]
        annotations.append(
            {
                "id": a["id"],
                "image_id": a["image_id"],
                "category_id": a["category_id"],
                "segmentation": {
                    "counts": _to_uncompressed_counts(a["segmentation"], h, w, a["id"]),
                    "size": [h, w],
                },
            }
        )
    categories = [
        {
            "id": c["id"],
            "name": c.get("name", f"class-{c['id']}"),
            "split": "novel" if c["id"] in novel_category_ids else "base",
        }
        for c in doc.get("categories", [])
    ]
    return {"images": images, "annotations": annotations, "categories": categories}


def write_reduced(doc: dict, path: str) -> None:
    with open(path, "wb") as fh:
        fh.write(json.dumps(doc, sort_keys=True, separators=(",", ":")).encode("utf-8"))
        fh.write(b"\n")
