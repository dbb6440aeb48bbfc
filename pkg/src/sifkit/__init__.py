"""sifkit: incremental few-shot instance classification toolkit.

Trains a scaled cosine-similarity classifier on mask embeddings, imprints
novel classes from a handful of shots, and runs the grid-point inference
pipeline (stability filter, background suppression, NMS) with COCO-style
AP evaluation. All data enters through SIFB embedding bundles, either
synthetic or exported offline from a segmentation model.
"""

__version__ = "0.1.0"
