"""Bit-exact file formats: SIFB embedding bundles, SIFM model files, and
the COCO-subset annotation JSON.

Both binary formats share one layout: magic bytes, a little-endian u32
version, a little-endian u64 header length, a canonical UTF-8 JSON header
(sorted keys, compact separators) describing every tensor's name, shape,
dtype and byte offset, then the raw little-endian payloads concatenated
in header order. Offsets are relative to the end of the header, and the
payload must tile the remainder of the file exactly. Bundles hold 32-bit
floats (values are promoted to float64 on read); model files hold 64-bit
floats so training state round-trips exactly.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field

import numpy as np

from .classifier import ClassifierModel, ClassLayout
from .maskops import PromptPoint

BUNDLE_MAGIC = b"SIFB"
MODEL_MAGIC = b"SIFM"
FORMAT_VERSION = 1

PROVENANCE_TAGS = ("synthetic", "sam2-export")


def canonical_json_bytes(obj) -> bytes:
    """The one JSON encoding both formats use; stable across writers."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":")).encode("utf-8")


@dataclass
class EmbeddingBundle:
    """One image's grid records: a logit grid and a mask embedding per point.

    Logit grids may be stored below image resolution; consumers upsample
    nearest-neighbor. Unknown header fields read from disk are kept in
    `extra` and written back verbatim, so re-serialization is lossless
    for files from other conforming writers too.
    """

    image_id: int
    height: int
    width: int
    points: list  # PromptPoint, grid order
    logits: list  # (logit_h, logit_w) float64 per point
    embeddings: list  # (c_in, embed_h, embed_w) float64 per point
    provenance: str = "synthetic"
    extra: dict = field(default_factory=dict)

    @property
    def c_in(self) -> int:
        return self.embeddings[0].shape[0]

    def validate(self) -> "EmbeddingBundle":
        if self.height <= 0 or self.width <= 0:
            raise ValueError("image extents must be positive")
        if self.provenance not in PROVENANCE_TAGS:
            raise ValueError(f"unknown provenance tag {self.provenance!r}")
        if not (len(self.points) == len(self.logits) == len(self.embeddings)):
            raise ValueError("bundle must hold one logit grid and one embedding per point")
        if not self.points:
            raise ValueError("bundle has no point records")
        lshape = self.logits[0].shape
        eshape = self.embeddings[0].shape
        if len(lshape) != 2 or len(eshape) != 3 or min(lshape) < 1 or min(eshape) < 1:
            raise ValueError("bad tensor ranks in bundle")
        for lg, em in zip(self.logits, self.embeddings):
            if lg.shape != lshape or em.shape != eshape:
                raise ValueError("inconsistent tensor shapes across records")
        for p in self.points:
            if not (0 <= p.x < self.width and 0 <= p.y < self.height):
                raise ValueError("grid point outside image bounds")
        return self


def _read_preamble(data: bytes, magic: bytes, path: str) -> tuple[dict, bytes]:
    if len(data) < 16:
        raise ValueError(f"truncated payload: {path} shorter than preamble")
    if data[:4] != magic:
        raise ValueError(f"bad magic: expected {magic.decode()} in {path}")
    version, header_len = struct.unpack("<IQ", data[4:16])
    if version != FORMAT_VERSION:
        raise ValueError(f"unsupported version {version} in {path}")
    if len(data) < 16 + header_len:
        raise ValueError(f"truncated payload: header extends past end of {path}")
    header = json.loads(data[16 : 16 + header_len].decode("utf-8"))
    return header, data[16 + header_len :]


def _check_tensor_table(tensors: list, payload_len: int, itemsize: int, path: str):
    expect = 0
    for t in tensors:
        size = int(np.prod(t["shape"])) * itemsize
        if t["offset"] != expect:
            raise ValueError(f"shape/offset inconsistency in {path}: tensor {t['name']}")
        expect += size
    if payload_len < expect:
        raise ValueError(f"truncated payload in {path}")
    if payload_len > expect:
        raise ValueError(f"shape/offset inconsistency in {path}: trailing bytes")


def _take(payload: bytes, t: dict, np_dtype: str) -> np.ndarray:
    size = int(np.prod(t["shape"])) * np.dtype(np_dtype).itemsize
    raw = payload[t["offset"] : t["offset"] + size]
    return np.frombuffer(raw, dtype=np_dtype).reshape(t["shape"]).astype(np.float64)


def write_bundle(bundle: EmbeddingBundle, path: str) -> None:
    bundle.validate()
    tensors = []
    blobs = []
    offset = 0
    for i, (lg, em) in enumerate(zip(bundle.logits, bundle.embeddings)):
        for name, arr in ((f"logits/{i}", lg), (f"embedding/{i}", em)):
            blob = np.ascontiguousarray(arr, dtype="<f4").tobytes()
            tensors.append(
                {"dtype": "<f4", "name": name, "offset": offset, "shape": list(arr.shape)}
            )
            blobs.append(blob)
            offset += len(blob)
    header = dict(bundle.extra)
    header.update(
        {
            "image_id": int(bundle.image_id),
            "height": int(bundle.height),
            "width": int(bundle.width),
            "provenance": bundle.provenance,
            "c_in": int(bundle.embeddings[0].shape[0]),
            "embed_h": int(bundle.embeddings[0].shape[1]),
            "embed_w": int(bundle.embeddings[0].shape[2]),
            "logit_h": int(bundle.logits[0].shape[0]),
            "logit_w": int(bundle.logits[0].shape[1]),
            "points": [{"label": int(p.label), "x": int(p.x), "y": int(p.y)} for p in bundle.points],
            "tensors": tensors,
        }
    )
    hbytes = canonical_json_bytes(header)
    with open(path, "wb") as fh:
        fh.write(BUNDLE_MAGIC)
        fh.write(struct.pack("<IQ", FORMAT_VERSION, len(hbytes)))
        fh.write(hbytes)
        for blob in blobs:
            fh.write(blob)


_BUNDLE_KEYS = {
    "image_id", "height", "width", "provenance",
    "c_in", "embed_h", "embed_w", "logit_h", "logit_w",
    "points", "tensors",
}


def read_bundle(path: str) -> EmbeddingBundle:
    with open(path, "rb") as fh:
        data = fh.read()
    header, payload = _read_preamble(data, BUNDLE_MAGIC, path)
    missing = _BUNDLE_KEYS - header.keys()
    if missing:
        raise ValueError(f"shape/offset inconsistency in {path}: missing keys {sorted(missing)}")
    tensors = header["tensors"]
    n_points = len(header["points"])
    if len(tensors) != 2 * n_points:
        raise ValueError(f"shape/offset inconsistency in {path}: want two tensors per point")
    _check_tensor_table(tensors, len(payload), 4, path)
    by_name = {t["name"]: t for t in tensors}
    logits, embeddings = [], []
    for i in range(n_points):
        for name, sink, want_shape in (
            (f"logits/{i}", logits, [header["logit_h"], header["logit_w"]]),
            (f"embedding/{i}", embeddings, [header["c_in"], header["embed_h"], header["embed_w"]]),
        ):
            t = by_name.get(name)
            if t is None or list(t["shape"]) != want_shape or t["dtype"] != "<f4":
                raise ValueError(f"shape/offset inconsistency in {path}: tensor {name}")
            sink.append(_take(payload, t, "<f4"))
    points = [PromptPoint(x=p["x"], y=p["y"], label=p.get("label", 1)) for p in header["points"]]
    extra = {k: v for k, v in header.items() if k not in _BUNDLE_KEYS}
    return EmbeddingBundle(
        image_id=header["image_id"],
        height=header["height"],
        width=header["width"],
        points=points,
        logits=logits,
        embeddings=embeddings,
        provenance=header["provenance"],
        extra=extra,
    ).validate()


_MODEL_PARAM_ORDER = ("conv1_w", "conv1_b", "conv2_w", "conv2_b", "fc_w", "fc_b", "weights")


def write_model(model: ClassifierModel, path: str) -> None:
    model.validate()
    params = dict(model.param_items())
    tensors = []
    blobs = []
    offset = 0
    for name in _MODEL_PARAM_ORDER:
        arr = params[name]
        blob = np.ascontiguousarray(arr, dtype="<f8").tobytes()
        tensors.append({"dtype": "<f8", "name": name, "offset": offset, "shape": list(arr.shape)})
        blobs.append(blob)
        offset += len(blob)
    header = {
        "c_in": model.c_in,
        "c_mid": model.c_mid,
        "d": model.d,
        "gamma": model.gamma,
        "layout": {
            "background_index": model.layout.background_index,
            "base_class_ids": list(model.layout.base_class_ids),
            "novel_class_ids": list(model.layout.novel_class_ids),
            "active_novel": list(model.layout.active_novel),
        },
        "tensors": tensors,
    }
    hbytes = canonical_json_bytes(header)
    with open(path, "wb") as fh:
        fh.write(MODEL_MAGIC)
        fh.write(struct.pack("<IQ", FORMAT_VERSION, len(hbytes)))
        fh.write(hbytes)
        for blob in blobs:
            fh.write(blob)


def read_model(path: str) -> ClassifierModel:
    with open(path, "rb") as fh:
        data = fh.read()
    header, payload = _read_preamble(data, MODEL_MAGIC, path)
    tensors = header["tensors"]
    if [t["name"] for t in tensors] != list(_MODEL_PARAM_ORDER):
        raise ValueError(f"shape/offset inconsistency in {path}: bad parameter table")
    _check_tensor_table(tensors, len(payload), 8, path)
    arrays = {t["name"]: _take(payload, t, "<f8") for t in tensors}
    lay = header["layout"]
    layout = ClassLayout(
        base_class_ids=list(lay["base_class_ids"]),
        novel_class_ids=list(lay["novel_class_ids"]),
        background_index=lay["background_index"],
        active_novel=list(lay["active_novel"]) if lay["novel_class_ids"] else [],
    )
    return ClassifierModel(
        conv1_w=arrays["conv1_w"],
        conv1_b=arrays["conv1_b"],
        conv2_w=arrays["conv2_w"],
        conv2_b=arrays["conv2_b"],
        fc_w=arrays["fc_w"],
        fc_b=arrays["fc_b"],
        weights=arrays["weights"],
        gamma=header["gamma"],
        layout=layout,
    ).validate()


@dataclass
class AnnotationSet:
    """COCO-subset ground truth / prediction container.

    images: {id, height, width}; annotations: {id, image_id, category_id,
    segmentation: {size, counts}} plus optional score/stability on
    predictions; categories: {id, name, split base|novel}.
    """

    images: list
    annotations: list
    categories: list

    def image_by_id(self, image_id: int) -> dict:
        for im in self.images:
            if im["id"] == image_id:
                return im
        raise KeyError(image_id)

    def validate(self) -> "AnnotationSet":
        image_ids = [im["id"] for im in self.images]
        cat_ids = [c["id"] for c in self.categories]
        if len(set(image_ids)) != len(image_ids):
            raise ValueError("duplicate image ids")
        if len(set(cat_ids)) != len(cat_ids):
            raise ValueError("duplicate category ids")
        for c in self.categories:
            if c.get("split") not in ("base", "novel"):
                raise ValueError(f"category {c['id']} has no base/novel split tag")
        sizes = {im["id"]: (im["height"], im["width"]) for im in self.images}
        dangling = []
        for ann in self.annotations:
            if ann["image_id"] not in sizes:
                dangling.append(f"annotation {ann['id']} -> image {ann['image_id']}")
            if ann["category_id"] not in set(cat_ids):
                dangling.append(f"annotation {ann['id']} -> category {ann['category_id']}")
        if dangling:
            raise ValueError("referential integrity: " + "; ".join(dangling))
        for ann in self.annotations:
            seg = ann["segmentation"]
            h, w = sizes[ann["image_id"]]
            if list(seg["size"]) != [h, w] or sum(seg["counts"]) != h * w:
                raise ValueError(f"corrupt RLE in annotation {ann['id']}")
        return self

    def to_dict(self) -> dict:
        def ann_fields(a):
            out = {
                "id": a["id"],
                "image_id": a["image_id"],
                "category_id": a["category_id"],
                "segmentation": {
                    "counts": list(a["segmentation"]["counts"]),
                    "size": list(a["segmentation"]["size"]),
                },
            }
            for opt in ("score", "stability"):
                if opt in a:
                    out[opt] = a[opt]
            return out

        return {
            "images": [
                {"id": im["id"], "height": im["height"], "width": im["width"]}
                for im in self.images
            ],
            "annotations": [ann_fields(a) for a in self.annotations],
            "categories": [
                {"id": c["id"], "name": c["name"], "split": c["split"]} for c in self.categories
            ],
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "AnnotationSet":
        # Unknown fields at any level are ignored.
        images = [
            {"id": im["id"], "height": im["height"], "width": im["width"]}
            for im in obj.get("images", [])
        ]
        annotations = []
        for a in obj.get("annotations", []):
            ann = {
                "id": a["id"],
                "image_id": a["image_id"],
                "category_id": a["category_id"],
                "segmentation": {
                    "counts": list(a["segmentation"]["counts"]),
                    "size": list(a["segmentation"]["size"]),
                },
            }
            for opt in ("score", "stability"):
                if opt in a:
                    ann[opt] = a[opt]
            annotations.append(ann)
        categories = [
            {"id": c["id"], "name": c["name"], "split": c.get("split", "base")}
            for c in obj.get("categories", [])
        ]
        return cls(images=images, annotations=annotations, categories=categories)


def write_annotations(aset: AnnotationSet, path: str) -> None:
    aset.validate()
    with open(path, "wb") as fh:
        fh.write(canonical_json_bytes(aset.to_dict()))
        fh.write(b"\n")


def read_annotations(path: str) -> AnnotationSet:
    with open(path, "rb") as fh:
        obj = json.loads(fh.read().decode("utf-8"))
    if not isinstance(obj, dict):
        raise ValueError(f"not an annotation file: {path}")
    missing = {"images", "annotations", "categories"} - obj.keys()
    if missing:
        raise ValueError(f"not an annotation file: {path} lacks {sorted(missing)}")
    return AnnotationSet.from_dict(obj).validate()
