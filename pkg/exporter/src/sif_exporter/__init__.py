"""sif-exporter: offline bridge from real images to SIFB embedding bundles.

Runs a mask backend (SAM2, or a synthetic stand-in) over a uniform point
grid per image and captures, per point, the low-resolution mask logits
and a mask embedding. Output bundles and the reduced annotation JSON are
written to the byte-level formats the downstream toolkit validates with
its `validate` command; this package deliberately performs no filtering,
classification, or NMS.
"""

__version__ = "0.1.0"
