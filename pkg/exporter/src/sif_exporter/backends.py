"""Mask backends: given an image and prompt points, produce per-point
low-resolution mask logits and a mask embedding.

The SAM2 backend wraps a locally available checkpoint (imported lazily,
so the exporter works without torch/sam2 installed until you actually
select it). The synthetic backend produces deterministic content-derived
tensors so the full export path can run, and be tested, on any machine.
"""

from __future__ import annotations

import math

import numpy as np


class SyntheticBackend:
    """Deterministic stand-in: a disk mask around each point, an embedding
    derived from local image statistics. No learned model involved."""

    provenance = "synthetic"
    provenance_detail = "synthetic backend: disk logits, patch-statistics embeddings"

    def __init__(self, c_in: int = 16, embed_h: int = 8, embed_w: int = 8, logit_res: int = 64):
        self.c_in = c_in
        self.embed_h = embed_h
        self.embed_w = embed_w
        self.logit_res = logit_res

    def capture(self, image: np.ndarray, points: list) -> list:
        h, w = image.shape[:2]
        gray = image.astype(np.float64).mean(axis=2) if image.ndim == 3 else image.astype(np.float64)
        out = []
        ys = np.arange(self.logit_res)[:, None]
        xs = np.arange(self.logit_res)[None, :]
        for x, y in points:
            # Disk of ~1/8 image extent around the point, in logit-grid coords.
            cy, cx = y * self.logit_res / h, x * self.logit_res / w
            radius = self.logit_res / 8.0
            dist = np.sqrt((ys - cy) ** 2 + (xs - cx) ** 2)
            logits = np.where(dist <= radius, 2.0, -2.0)

            y0, y1 = max(y - 4, 0), min(y + 4, h)
            x0, x1 = max(x - 4, 0), min(x + 4, w)
            patch_mean = float(gray[y0:y1, x0:x1].mean())
            phase = patch_mean / 255.0 + 0.01 * x + 0.02 * y
            vec = np.array(
                [math.sin((k + 1) * (1.0 + phase)) for k in range(self.c_in)], dtype=np.float64
            )
            vec /= np.linalg.norm(vec)
            embedding = np.repeat(
                np.repeat(vec[:, None, None], self.embed_h, axis=1), self.embed_w, axis=2
            )
            out.append((logits, embedding))
        return out


class Sam2Backend:
    """Capture from a SAM2 checkpoint.

    Per point: the decoder's low-resolution mask logits, and as the mask
    embedding the image-encoder feature map cropped to the predicted
    mask's bounding box and nearest-resampled to (embed_h, embed_w);
    that choice is recorded in each bundle's provenance_detail header
    field. The exporter does no filtering or suppression.
    """

    provenance = "sam2-export"
    provenance_detail = (
        "sam2 backend: low-res decoder mask logits; embedding = image-encoder "
        "feature map cropped to the predicted mask bbox, nearest-resampled"
    )

    def __init__(
        self,
        checkpoint: str,
        model_cfg: str,
        device: str = "cpu",
        embed_h: int = 8,
        embed_w: int = 8,
    ):
        try:
            import torch  # noqa: F401
            from sam2.build_sam import build_sam2
            from sam2.sam2_image_predictor import SAM2ImagePredictor
        except ImportError as exc:
            raise RuntimeError(
                "the sam2 backend needs the 'torch' and 'sam2' packages installed"
            ) from exc
        try:
            model = build_sam2(model_cfg, checkpoint, device=device)
        except Exception as exc:
            raise RuntimeError(f"checkpoint mismatch: could not load {checkpoint}: {exc}") from exc
        self._predictor = SAM2ImagePredictor(model)
        self.embed_h = embed_h
        self.embed_w = embed_w
        self.c_in = 256

    def capture(self, image: np.ndarray, points: list) -> list:
        import torch

        self._predictor.set_image(image)
        feats = self._predictor._features["image_embed"][0]  # (256, fh, fw)
        fh, fw = feats.shape[1], feats.shape[2]
        h, w = image.shape[:2]
        out = []
        with torch.inference_mode():
            for x, y in points:
                _, _, low_res = self._predictor.predict(
                    point_coords=np.array([[x, y]], dtype=np.float32),
                    point_labels=np.array([1], dtype=np.int32),
                    multimask_output=False,
                    return_logits=True,
                )
                logits = np.asarray(low_res[0], dtype=np.float64)
                mask = logits > 0
                if mask.any():
                    rows = np.nonzero(mask.any(axis=1))[0]
                    cols = np.nonzero(mask.any(axis=0))[0]
                    # Map the bbox from logit-grid coords into feature coords.
                    fy0 = int(rows[0] * fh / mask.shape[0])
                    fy1 = max(int((rows[-1] + 1) * fh / mask.shape[0]), fy0 + 1)
                    fx0 = int(cols[0] * fw / mask.shape[1])
                    fx1 = max(int((cols[-1] + 1) * fw / mask.shape[1]), fx0 + 1)
                else:
                    fy0, fy1, fx0, fx1 = 0, fh, 0, fw
                crop = feats[:, fy0:fy1, fx0:fx1].float().cpu().numpy()
                embedding = _resample_nearest(crop, self.embed_h, self.embed_w)
                out.append((logits, embedding))
        return out


def _resample_nearest(feat: np.ndarray, h: int, w: int) -> np.ndarray:
    c, fh, fw = feat.shape
    ys = np.minimum((np.arange(h) * fh) // h, fh - 1)
    xs = np.minimum((np.arange(w) * fw) // w, fw - 1)
    return feat[:, ys[:, None], xs[None, :]]
