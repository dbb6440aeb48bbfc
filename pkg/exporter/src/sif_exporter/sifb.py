"""SIFB bundle writer.

Byte layout (little-endian throughout): magic "SIFB", u32 version 1, u64
header length, canonical JSON header (sorted keys, compact separators),
then raw float32 payloads concatenated in header order. Tensor offsets
are relative to the end of the header. One logit grid and one embedding
per grid point, in point order.
"""

from __future__ import annotations

import json
import struct

import numpy as np

MAGIC = b"SIFB"
VERSION = 1


def write_bundle(
    path: str,
    image_id: int,
    height: int,
    width: int,
    points: list,  # (x, y) pixel coordinates, grid order
    logits: list,  # (logit_h, logit_w) arrays, one per point
    embeddings: list,  # (c_in, embed_h, embed_w) arrays, one per point
    provenance: str,
    provenance_detail: str | None = None,
) -> None:
    if not (len(points) == len(logits) == len(embeddings)) or not points:
        raise ValueError("need one logit grid and one embedding per point")
    tensors, blobs = [], []
    offset = 0
    for i, (lg, em) in enumerate(zip(logits, embeddings)):
        for name, arr in ((f"logits/{i}", lg), (f"embedding/{i}", em)):
            blob = np.ascontiguousarray(arr, dtype="<f4").tobytes()
            tensors.append(
                {"dtype": "<f4", "name": name, "offset": offset, "shape": list(np.shape(arr))}
            )
            blobs.append(blob)
            offset += len(blob)
    header = {
        "image_id": int(image_id),
        "height": int(height),
        "width": int(width),
        "provenance": provenance,
        "c_in": int(np.shape(embeddings[0])[0]),
        "embed_h": int(np.shape(embeddings[0])[1]),
        "embed_w": int(np.shape(embeddings[0])[2]),
        "logit_h": int(np.shape(logits[0])[0]),
        "logit_w": int(np.shape(logits[0])[1]),
        "points": [{"label": 1, "x": int(x), "y": int(y)} for x, y in points],
        "tensors": tensors,
    }
    if provenance_detail is not None:
        header["provenance_detail"] = provenance_detail
    hbytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<IQ", VERSION, len(hbytes)))
        fh.write(hbytes)
        for blob in blobs:
            fh.write(blob)
