import json

import numpy as np
import pytest

from sif_exporter import rle
from sif_exporter.annotations import reduce_coco


class TestReduceCoco:
    def test_rle_foreground_counts_match_source_areas(self, coco_world):
        reduced = reduce_coco(coco_world["doc"], novel_category_ids=set())
        by_id = {a["id"]: a for a in coco_world["doc"]["annotations"]}
        for ann in reduced["annotations"]:
            src = by_id[ann["id"]]
            assert rle.foreground_count(ann["segmentation"]["counts"]) == src["area"]

    def test_decoded_masks_match_source_masks(self, coco_world):
        reduced = reduce_coco(coco_world["doc"], novel_category_ids=set())
        sizes = {im["id"]: (im["height"], im["width"]) for im in reduced["images"]}
        for ann in reduced["annotations"]:
            h, w = sizes[ann["image_id"]]
            decoded = rle.decode(ann["segmentation"]["counts"], h, w)
            np.testing.assert_array_equal(decoded, coco_world["masks"][ann["id"]])

    def test_extraneous_fields_dropped(self, coco_world):
        reduced = reduce_coco(coco_world["doc"], novel_category_ids=set())
        for ann in reduced["annotations"]:
            assert set(ann) == {"id", "image_id", "category_id", "segmentation"}
        for im in reduced["images"]:
            assert set(im) == {"id", "height", "width"}

    def test_split_tags(self, coco_world):
        reduced = reduce_coco(coco_world["doc"], novel_category_ids={2})
        assert {c["id"]: c["split"] for c in reduced["categories"]} == {1: "base", 2: "novel"}

    def test_bad_counts_rejected(self, coco_world):
        doc = json.loads(json.dumps(coco_world["doc"]))
        doc["annotations"][0]["segmentation"]["counts"][0] += 1
        with pytest.raises(ValueError, match="RLE counts"):
            reduce_coco(doc, novel_category_ids=set())

    def test_polygon_without_pycocotools_is_explicit(self, coco_world):
        try:
            import pycocotools  # noqa: F401

            pytest.skip("pycocotools installed; conversion path exercised elsewhere")
        except ImportError:
            pass
        doc = json.loads(json.dumps(coco_world["doc"]))
        doc["annotations"][0]["segmentation"] = [[1.0, 1.0, 10.0, 1.0, 10.0, 10.0]]
        with pytest.raises(ValueError, match="pycocotools"):
            reduce_coco(doc, novel_category_ids=set())


class TestRleRoundTrip:
    def test_round_trip(self):
        rng = np.random.RandomState(7)
        for _ in range(50):
            h, w = rng.randint(1, 20), rng.randint(1, 20)
            mask = rng.rand(h, w) > 0.5
            np.testing.assert_array_equal(rle.decode(rle.encode(mask), h, w), mask)

    def test_column_major_convention(self):
        mask = np.zeros((2, 2), dtype=bool)
        mask[0, 1] = True
        assert rle.encode(mask) == [2, 1, 1]
