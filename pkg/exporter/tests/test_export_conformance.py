import json
import os
import subprocess
import sys

import numpy as np

from sif_exporter.backends import SyntheticBackend
from sif_exporter.cli import main
from sif_exporter.export import export


def validate_with_toolkit(path):
    """The downstream toolkit's `validate` command is the format contract."""
    return subprocess.run(
        [sys.executable, "-m", "sifkit.cli", "validate", "--file", str(path)],
        capture_output=True,
        text=True,
    )


class TestExportConformance:
    def test_bundles_pass_toolkit_validate(self, coco_world, tmp_path):
        out = tmp_path / "export"
        summary = export(
            str(coco_world["images"]),
            str(coco_world["coco"]),
            str(out),
            SyntheticBackend(c_in=8, embed_h=4, embed_w=4),
            points_per_side=4,
        )
        assert summary["images"] == 3
        for bundle in summary["bundles"]:
            result = validate_with_toolkit(bundle)
            assert result.returncode == 0, result.stderr
        result = validate_with_toolkit(summary["annotations"])
        assert result.returncode == 0, result.stderr

    def test_image_without_annotations_still_exported(self, coco_world, tmp_path):
        out = tmp_path / "export"
        summary = export(
            str(coco_world["images"]),
            str(coco_world["coco"]),
            str(out),
            SyntheticBackend(c_in=8, embed_h=4, embed_w=4),
            points_per_side=4,
        )
        assert any(p.endswith("bundle_000003.sifb") for p in summary["bundles"])
        doc = json.loads((out / "annotations.json").read_text())
        assert not [a for a in doc["annotations"] if a["image_id"] == 3]

    def test_bundle_headers_carry_grid_and_provenance(self, coco_world, tmp_path):
        import struct

        out = tmp_path / "export"
        export(
            str(coco_world["images"]),
            str(coco_world["coco"]),
            str(out),
            SyntheticBackend(c_in=8, embed_h=4, embed_w=4),
            points_per_side=4,
        )
        data = (out / "bundle_000001.sifb").read_bytes()
        assert data[:4] == b"SIFB"
        _, hl = struct.unpack("<IQ", data[4:16])
        header = json.loads(data[16 : 16 + hl])
        assert header["provenance"] == "synthetic"
        assert "provenance_detail" in header
        assert len(header["points"]) == 16

    def test_size_mismatch_aborts(self, coco_world, tmp_path):
        doc = json.loads(coco_world["coco"].read_text())
        doc["images"][0]["height"] += 1
        for ann in doc["annotations"]:
            ann["segmentation"]["size"] = ann["segmentation"]["size"]  # untouched
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps(doc))
        try:
            export(
                str(coco_world["images"]),
                str(bad),
                str(tmp_path / "out"),
                SyntheticBackend(c_in=8, embed_h=4, embed_w=4),
                points_per_side=4,
            )
        except ValueError as exc:
            assert "RLE" in str(exc) or "annotations say" in str(exc)
        else:
            raise AssertionError("size mismatch should abort")


class TestCli:
    def test_cli_synthetic_roundtrip(self, coco_world, tmp_path, capsys):
        out = tmp_path / "cliout"
        code = main(
            [
                "--images", str(coco_world["images"]),
                "--ann", str(coco_world["coco"]),
                "--out", str(out),
                "--backend", "synthetic",
                "--points-per-side", "4",
                "--c-in", "8", "--embed-h", "4", "--embed-w", "4",
                "--novel-ids", "2",
            ]
        )
        assert code == 0
        doc = json.loads((out / "annotations.json").read_text())
        splits = {c["id"]: c["split"] for c in doc["categories"]}
        assert splits == {1: "base", 2: "novel"}

    def test_sam2_backend_requires_checkpoint_flags(self, capsys):
        assert main(["--images", "x", "--ann", "y", "--out", "z"]) == 1
        assert "checkpoint" in capsys.readouterr().err

    def test_missing_ann_file_is_data_error(self, coco_world, tmp_path, capsys):
        code = main(
            [
                "--images", str(coco_world["images"]),
                "--ann", str(tmp_path / "nope.json"),
                "--out", str(tmp_path / "o"),
                "--backend", "synthetic",
            ]
        )
        assert code == 2
