"""Synthetic-scene generator with known class prototypes.

Stands in for a real dataset at desk scale: scenes are non-overlapping
axis-aligned rectangles and ellipses, so ground-truth masks are exact;
embeddings are class-prototype directions plus Gaussian noise, so the
classifier's behavior is analyzable. Prototypes are unit vectors with
pairwise cosine below a separation bound, which makes nearest-prototype
classification provably correct at low noise and gives every downstream
test an oracle to compare against.

Clean mode stores two-level logits (+2 inside the shape, -2 outside) so
every mask has stability 1.0 and classifier behavior is isolated from
mask quality; noisy mode replaces them with a smooth ramp through the
boundary to exercise the stability filter.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .bundleio import AnnotationSet, EmbeddingBundle
from .classifier import ClassLayout
from .maskops import grid_points, rle_encode
from .numcore import Rng


@dataclass
class SynthConfig:
    image_h: int = 64
    image_w: int = 64
    c_in: int = 16
    embed_h: int = 8
    embed_w: int = 8
    n_base: int = 6
    n_novel: int = 3
    n_train_images: int = 12
    n_test_images: int = 6
    points_per_side: int = 8
    min_objects: int = 1
    max_objects: int = 4
    prototype_max_cos: float = 0.3
    noise_sigma: float = 0.05
    noisy_logits: bool = False
    shots_per_novel: int = 10
    seed: int = 0

    def __post_init__(self):
        if self.n_base < 1 or self.n_novel < 0:
            raise ValueError("need at least one base class")
        if not 1 <= self.min_objects <= self.max_objects:
            raise ValueError("bad object count range")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be nonnegative")

    @property
    def base_ids(self) -> list[int]:
        return list(range(1, self.n_base + 1))

    @property
    def novel_ids(self) -> list[int]:
        return list(range(self.n_base + 1, self.n_base + self.n_novel + 1))


@dataclass
class Shape:
    kind: str  # "rect" | "ellipse"
    cy: float
    cx: float
    ry: float
    rx: float
    category_id: int
    mask: np.ndarray

    def interior_field(self, h: int, w: int) -> np.ndarray:
        """Normalized distance field g: < 1 inside, 1 on the boundary."""
        ys = (np.arange(h)[:, None] - self.cy) / self.ry
        xs = (np.arange(w)[None, :] - self.cx) / self.rx
        if self.kind == "rect":
            return np.maximum(np.abs(ys), np.abs(xs))
        return np.sqrt(ys**2 + xs**2)


@dataclass
class SynthDataset:
    config: SynthConfig
    layout: ClassLayout
    prototypes: dict  # category id (0 = background) -> unit vector
    train_bundles: list
    train_labels: dict  # image id -> per-point category ids (grid order)
    test_bundles: list
    test_annotations: AnnotationSet
    shot_pool: dict  # novel category id -> list of embeddings
    train_shapes: dict = field(default_factory=dict)  # image id -> list[Shape]
    test_shapes: dict = field(default_factory=dict)


def make_prototypes(n: int, c_in: int, max_cos: float, rng: Rng) -> list[np.ndarray]:
    """Unit vectors with pairwise cosine below max_cos (rejection sampled)."""
    protos: list[np.ndarray] = []
    attempts = 0
    while len(protos) < n:
        attempts += 1
        if attempts > 10_000:
            raise ValueError("could not separate prototypes; lower n or raise max_cos")
        v = rng.normal_vector(c_in)
        v /= np.linalg.norm(v)
        if all(float(v @ p) < max_cos for p in protos):
            protos.append(v)
    return protos


def sample_embedding(prototype: np.ndarray, sigma: float, embed_h: int, embed_w: int, rng: Rng) -> np.ndarray:
    """Prototype plus channel noise, broadcast over the spatial grid."""
    v = prototype + sigma * rng.normal_vector(prototype.size)
    return np.repeat(np.repeat(v[:, None, None], embed_h, axis=1), embed_w, axis=2)


def _rasterize(kind: str, cy: float, cx: float, ry: float, rx: float, h: int, w: int) -> np.ndarray:
    ys = np.arange(h)[:, None]
    xs = np.arange(w)[None, :]
    if kind == "rect":
        return (np.abs(ys - cy) <= ry) & (np.abs(xs - cx) <= rx)
    return ((ys - cy) / ry) ** 2 + ((xs - cx) / rx) ** 2 <= 1.0


def _extent_range(spacing: float, image_extent: int, inscribed_scale: float) -> tuple[int, int]:
    """Half-extent bounds guaranteeing the shape spans one grid step.

    The shape's inscribed box must be at least spacing+1 wide so a grid
    coordinate always falls inside; inscribed_scale is 1 for rectangles
    and 1/sqrt(2) for ellipses.
    """
    lo = int(np.ceil((spacing + 1.0) / (2.0 * inscribed_scale)))
    hi = min(lo + max(1, int(spacing) // 3), (image_extent - 1) // 2)
    return lo, max(hi, lo)


def _place_shapes(cfg: SynthConfig, categories: list[int], rng: Rng) -> list[Shape]:
    """Non-overlapping shapes, one per requested category, sized so the
    point grid cannot miss them."""
    sy = cfg.image_h / cfg.points_per_side
    sx = cfg.image_w / cfg.points_per_side
    shapes: list[Shape] = []
    occupied = np.zeros((cfg.image_h, cfg.image_w), dtype=bool)
    attempts = 0
    for cat in categories:
        while True:
            attempts += 1
            if attempts > 1000:
                raise ValueError("scene too crowded: could not place non-overlapping shapes")
            kind = "rect" if rng.next_below(2) == 0 else "ellipse"
            scale = 1.0 if kind == "rect" else 1.0 / np.sqrt(2.0)
            ry_lo, ry_hi = _extent_range(sy, cfg.image_h, scale)
            rx_lo, rx_hi = _extent_range(sx, cfg.image_w, scale)
            ry = ry_lo + rng.next_below(ry_hi - ry_lo + 1)
            rx = rx_lo + rng.next_below(rx_hi - rx_lo + 1)
            cy = ry + rng.next_below(max(cfg.image_h - 2 * int(ry), 1))
            cx = rx + rng.next_below(max(cfg.image_w - 2 * int(rx), 1))
            mask = _rasterize(kind, cy, cx, ry, rx, cfg.image_h, cfg.image_w)
            if not (mask & occupied).any():
                occupied |= mask
                shapes.append(Shape(kind, cy, cx, ry, rx, cat, mask))
                break
    return shapes


def _clean_logits(region: np.ndarray) -> np.ndarray:
    return np.where(region, 2.0, -2.0)


def _ramp_logits(shape: Shape, h: int, w: int) -> np.ndarray:
    # 2*(1-g): +2 at the shape center, ~0 at the boundary, negative outside;
    # boundary-adjacent values fall inside the stability band and lower the
    # score. The sign is pinned to the rasterized mask so binarizing at 0
    # still reproduces the annotated shape exactly.
    ramp = 2.0 * (1.0 - shape.interior_field(h, w))
    return np.where(shape.mask, np.maximum(ramp, 0.05), np.minimum(ramp, -0.05))


def _scene_bundle(
    cfg: SynthConfig, image_id: int, shapes: list[Shape], protos: dict, rng: Rng
) -> tuple[EmbeddingBundle, list[int]]:
    points = grid_points(cfg.image_h, cfg.image_w, cfg.points_per_side)
    background = np.ones((cfg.image_h, cfg.image_w), dtype=bool)
    for s in shapes:
        background &= ~s.mask
    logits, embeddings, labels = [], [], []
    for p in points:
        covering = next((s for s in shapes if s.mask[p.y, p.x]), None)
        if covering is None:
            cat = 0
            logits.append(_clean_logits(background))
        else:
            cat = covering.category_id
            if cfg.noisy_logits:
                logits.append(_ramp_logits(covering, cfg.image_h, cfg.image_w))
            else:
                logits.append(_clean_logits(covering.mask))
        embeddings.append(
            sample_embedding(protos[cat], cfg.noise_sigma, cfg.embed_h, cfg.embed_w, rng)
        )
        labels.append(cat)
    bundle = EmbeddingBundle(
        image_id=image_id,
        height=cfg.image_h,
        width=cfg.image_w,
        points=points,
        logits=logits,
        embeddings=embeddings,
        provenance="synthetic",
    ).validate()
    return bundle, labels


def generate_dataset(cfg: SynthConfig) -> SynthDataset:
    """Deterministic synthetic dataset: train bundles with per-point labels,
    test bundles with exact annotations, and a novel-class shot pool."""
    rng = Rng(cfg.seed)
    all_ids = cfg.base_ids + cfg.novel_ids
    protos_list = make_prototypes(1 + len(all_ids), cfg.c_in, cfg.prototype_max_cos, rng)
    protos = {0: protos_list[0]}
    for i, cat in enumerate(all_ids):
        protos[cat] = protos_list[1 + i]

    layout = ClassLayout(base_class_ids=cfg.base_ids, novel_class_ids=cfg.novel_ids)

    # Round-robin category cycles guarantee every class shows up.
    base_cycle = list(cfg.base_ids)
    rng.shuffle(base_cycle)
    all_cycle = list(all_ids)
    rng.shuffle(all_cycle)
    base_at = 0
    all_at = 0

    train_bundles, train_labels = [], {}
    train_shapes: dict = {}
    for image_id in range(cfg.n_train_images):
        n_obj = cfg.min_objects + rng.next_below(cfg.max_objects - cfg.min_objects + 1)
        cats = []
        for _ in range(n_obj):
            cats.append(base_cycle[base_at % len(base_cycle)])
            base_at += 1
        shapes = _place_shapes(cfg, cats, rng)
        train_shapes[image_id] = shapes
        bundle, labels = _scene_bundle(cfg, image_id, shapes, protos, rng)
        train_bundles.append(bundle)
        train_labels[image_id] = labels

    test_bundles = []
    test_shapes: dict = {}
    images, annotations = [], []
    ann_id = 0
    for image_id in range(1000, 1000 + cfg.n_test_images):
        n_obj = max(cfg.min_objects, 2) + rng.next_below(
            max(cfg.max_objects - max(cfg.min_objects, 2) + 1, 1)
        )
        cats = []
        for _ in range(n_obj):
            cats.append(all_cycle[all_at % len(all_cycle)])
            all_at += 1
        shapes = _place_shapes(cfg, cats, rng)
        test_shapes[image_id] = shapes
        bundle, _ = _scene_bundle(cfg, image_id, shapes, protos, rng)
        test_bundles.append(bundle)
        images.append({"id": image_id, "height": cfg.image_h, "width": cfg.image_w})
        for s in shapes:
            ann_id += 1
            annotations.append(
                {
                    "id": ann_id,
                    "image_id": image_id,
                    "category_id": s.category_id,
                    "segmentation": {
                        "size": [cfg.image_h, cfg.image_w],
                        "counts": rle_encode(s.mask),
                    },
                }
            )
    categories = [
        {"id": c, "name": f"class-{c}", "split": "base" if c in cfg.base_ids else "novel"}
        for c in all_ids
    ]
    test_annotations = AnnotationSet(
        images=images, annotations=annotations, categories=categories
    ).validate()

    shot_pool = {
        cat: [
            sample_embedding(protos[cat], cfg.noise_sigma, cfg.embed_h, cfg.embed_w, rng)
            for _ in range(cfg.shots_per_novel)
        ]
        for cat in cfg.novel_ids
    }

    return SynthDataset(
        config=cfg,
        layout=layout,
        prototypes=protos,
        train_bundles=train_bundles,
        train_labels=train_labels,
        test_bundles=test_bundles,
        test_annotations=test_annotations,
        shot_pool=shot_pool,
        train_shapes=train_shapes,
        test_shapes=test_shapes,
    )


def training_samples(ds: SynthDataset) -> list:
    """Flatten train bundles into (embedding, category) pairs."""
    out = []
    for bundle in ds.train_bundles:
        labels = ds.train_labels[bundle.image_id]
        out.extend(zip(bundle.embeddings, labels))
    return out
