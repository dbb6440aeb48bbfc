"""COCO-style AP evaluation with base/novel splits and the repeated
1-shot episode harness.

AP uses the standard convention: greedy per-image matching by descending
score, 101-point interpolated precision, averaged over IoU thresholds
0.50:0.05:0.95; AP50 is the 0.50 entry. Categories without ground truth
are excluded from averages rather than scored zero.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .bundleio import AnnotationSet
from .classifier import ClassifierModel, ClassLayout
from .imprinting import ShotSet, imprint_novel_class, remove_novel_class
from .maskops import rle_decode
from .numcore import Rng
from .pipeline import InferenceConfig, run_inference

IOU_SWEEP = tuple(0.5 + 0.05 * i for i in range(10))
MAX_DETS_PER_IMAGE = 100
RECALL_LEVELS = np.linspace(0.0, 1.0, 101)


@dataclass
class Detection:
    image_id: int
    category_id: int
    mask: np.ndarray
    score: float


@dataclass
class GroundTruth:
    image_id: int
    category_id: int
    mask: np.ndarray


def _pair_iou(a: np.ndarray, b: np.ndarray) -> float:
    union = int(np.logical_or(a, b).sum())
    if union == 0:
        return 0.0
    return int(np.logical_and(a, b).sum()) / union


def match_detections(
    preds: list[Detection], gts: list[GroundTruth], iou_thresh: float
) -> list[tuple[Detection, GroundTruth | None]]:
    """Greedy same-image matching.

    Predictions are visited by descending score (ties keep list order);
    each takes the unmatched ground truth of its own category with the
    highest IoU, provided that IoU reaches the threshold. Results come
    back in the original prediction order.
    """
    order = sorted(range(len(preds)), key=lambda i: (-preds[i].score, i))
    taken = [False] * len(gts)
    matched: list[GroundTruth | None] = [None] * len(preds)
    for i in order:
        p = preds[i]
        best_j, best_iou = -1, -1.0
        for j, g in enumerate(gts):
            if taken[j] or g.category_id != p.category_id:
                continue
            iou = _pair_iou(p.mask, g.mask)
            if iou >= iou_thresh and iou > best_iou:  # IoU ties keep the lowest gt index
                best_j, best_iou = j, iou
        if best_j >= 0:
            taken[best_j] = True
            matched[i] = gts[best_j]
    return list(zip(preds, matched))


def _cap_per_image(preds: list[Detection], max_dets: int) -> list[Detection]:
    by_image: dict[int, list[int]] = {}
    for i, p in enumerate(preds):
        by_image.setdefault(p.image_id, []).append(i)
    keep = set()
    for idxs in by_image.values():
        ranked = sorted(idxs, key=lambda i: (-preds[i].score, i))
        keep.update(ranked[:max_dets])
    return [p for i, p in enumerate(preds) if i in keep]


def _tp_flags(preds: list[Detection], gts: list[GroundTruth], iou_thresh: float) -> list[bool]:
    """Per-prediction true-positive flags at one IoU threshold (per image)."""
    flags = [False] * len(preds)
    by_image: dict[int, tuple[list, list]] = {}
    for i, p in enumerate(preds):
        by_image.setdefault(p.image_id, ([], []))[0].append(i)
    for g in gts:
        if g.image_id in by_image:
            by_image[g.image_id][1].append(g)
    for idxs, img_gts in by_image.values():
        pairs = match_detections([preds[i] for i in idxs], img_gts, iou_thresh)
        for i, (_, matched) in zip(idxs, pairs):
            flags[i] = matched is not None
    return flags


def _interpolated_ap(flags_ranked: list[bool], n_gt: int) -> float:
    """101-point interpolated AP from TP flags sorted by descending score."""
    if n_gt == 0:
        raise ValueError("AP undefined without ground truth")
    if not flags_ranked:
        return 0.0
    tp_cum = np.cumsum(np.asarray(flags_ranked, dtype=np.float64))
    precision = tp_cum / np.arange(1, len(flags_ranked) + 1)
    recall = tp_cum / n_gt
    envelope = np.maximum.accumulate(precision[::-1])[::-1]
    idx = np.searchsorted(recall, RECALL_LEVELS, side="left")
    sampled = np.where(idx < len(envelope), envelope[np.minimum(idx, len(envelope) - 1)], 0.0)
    return float(sampled.mean())


def ap_at_threshold(
    preds: list[Detection], gts: list[GroundTruth], category_id: int, iou_thresh: float
) -> float:
    """AP for one category at one IoU threshold."""
    cat_gts = [g for g in gts if g.category_id == category_id]
    cat_pred_idx = [i for i, p in enumerate(preds) if p.category_id == category_id]
    flags = _tp_flags(preds, gts, iou_thresh)
    ranked = sorted(cat_pred_idx, key=lambda i: (-preds[i].score, i))
    return _interpolated_ap([flags[i] for i in ranked], len(cat_gts))


def average_precision(
    preds: list[Detection], gts: list[GroundTruth], category_id: int
) -> tuple[float, float]:
    """(AP averaged over the 0.50:0.05:0.95 sweep, AP50) for one category."""
    per_thresh = [ap_at_threshold(preds, gts, category_id, t) for t in IOU_SWEEP]
    return float(np.mean(per_thresh)), per_thresh[0]


@dataclass
class SectionMetrics:
    ap: float
    ap50: float


@dataclass
class Report:
    overall: SectionMetrics | None
    base: SectionMetrics | None
    novel: SectionMetrics | None
    per_category: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        def sec(m):
            return None if m is None else {"ap": m.ap, "ap50": m.ap50}

        return {
            "overall": sec(self.overall),
            "base": sec(self.base),
            "novel": sec(self.novel),
            "per_category": {
                str(k): {"ap": v.ap, "ap50": v.ap50} for k, v in sorted(self.per_category.items())
            },
        }


def format_report_table(rows: list[tuple[str, Report]]) -> str:
    """Aligned text table with Overall / Base / Novel sections, AP and AP50
    sub-columns, and '-' for absent sections."""

    def cell(m, attr):
        return "-" if m is None else f"{getattr(m, attr):.4f}"

    label_w = max([len(label) for label, _ in rows] + [len("run")])
    header1 = f"{'':{label_w}}   {'Overall':^15}   {'Base':^15}   {'Novel':^15}"
    header2 = (
        f"{'run':<{label_w}}   "
        + f"{'AP':>7} {'AP50':>7}   " * 2
        + f"{'AP':>7} {'AP50':>7}"
    )
    lines = [header1, header2, "-" * len(header2)]
    for label, rep in rows:
        parts = [f"{label:<{label_w}}"]
        for sec in (rep.overall, rep.base, rep.novel):
            parts.append(f"{cell(sec, 'ap'):>7} {cell(sec, 'ap50'):>7}")
        lines.append("   ".join(parts))
    return "\n".join(lines)


def evaluate_split(
    preds: list[Detection], gts: list[GroundTruth], layout: ClassLayout
) -> Report:
    """Per-category AP aggregated into overall/base/novel sections.

    Categories with no ground truth are skipped. The novel section is
    reported only when at least one novel row has been imprinted; before
    that it renders as '-'.
    """
    preds = _cap_per_image(preds, MAX_DETS_PER_IMAGE)
    cats_with_gt = sorted({g.category_id for g in gts})
    per_category = {}
    for cat in cats_with_gt:
        ap, ap50 = average_precision(preds, gts, cat)
        per_category[cat] = SectionMetrics(ap=ap, ap50=ap50)

    def aggregate(cat_ids):
        metrics = [per_category[c] for c in cat_ids if c in per_category]
        if not metrics:
            return None
        return SectionMetrics(
            ap=float(np.mean([m.ap for m in metrics])),
            ap50=float(np.mean([m.ap50 for m in metrics])),
        )

    novel_active = any(layout.active_novel)
    return Report(
        overall=aggregate(cats_with_gt),
        base=aggregate(layout.base_class_ids),
        novel=aggregate(layout.novel_class_ids) if novel_active else None,
        per_category=per_category,
    )


def ground_truths_from_annotations(ann: AnnotationSet) -> list[GroundTruth]:
    sizes = {im["id"]: (im["height"], im["width"]) for im in ann.images}
    out = []
    for a in ann.annotations:
        h, w = sizes[a["image_id"]]
        out.append(
            GroundTruth(
                image_id=a["image_id"],
                category_id=a["category_id"],
                mask=rle_decode(a["segmentation"]["counts"], h, w),
            )
        )
    return out


def detections_from_instances(instances, image_id: int) -> list[Detection]:
    return [
        Detection(image_id=image_id, category_id=i.class_id, mask=i.mask, score=i.score)
        for i in instances
    ]


@dataclass
class EpisodeResult:
    mean: Report
    episodes: list


def _mean_report(reports: list[Report]) -> Report:
    def mean_section(getter):
        parts = [getter(r) for r in reports]
        if any(p is None for p in parts):
            return None
        return SectionMetrics(
            ap=float(np.mean([p.ap for p in parts])),
            ap50=float(np.mean([p.ap50 for p in parts])),
        )

    return Report(
        overall=mean_section(lambda r: r.overall),
        base=mean_section(lambda r: r.base),
        novel=mean_section(lambda r: r.novel),
    )


def run_fewshot_episodes(
    base_model: ClassifierModel,
    bundles: list,
    ann: AnnotationSet,
    shot_pool: dict,
    inference_cfg: InferenceConfig = InferenceConfig(),
    n_repeats: int = 10,
    seed: int = 0,
) -> EpisodeResult:
    """The repeated 1-shot protocol.

    Per episode: draw one random shot per novel class from the pool (each
    episode gets its own RNG stream derived from `seed`), imprint every
    novel class, run inference over all bundles, evaluate, then drop the
    novel rows again. Reports per-episode and mean metrics.
    """
    novel_ids = list(base_model.layout.novel_class_ids)
    missing = [c for c in novel_ids if not shot_pool.get(c)]
    if missing:
        raise ValueError(f"no shots available for novel classes {missing}")
    gts = ground_truths_from_annotations(ann)

    master = Rng(seed)
    reports = []
    for _ in range(n_repeats):
        ep_rng = Rng(master.next_u64())
        model = base_model
        for class_id in novel_ids:
            pool = shot_pool[class_id]
            shot = pool[ep_rng.next_below(len(pool))]
            model = imprint_novel_class(model, ShotSet(class_id=class_id, embeddings=[shot]))
        preds = []
        for bundle in bundles:
            instances = run_inference(bundle, model, inference_cfg)
            preds.extend(detections_from_instances(instances, bundle.image_id))
        reports.append(evaluate_split(preds, gts, model.layout))
        for class_id in novel_ids:
            model = remove_novel_class(model, class_id)
    return EpisodeResult(mean=_mean_report(reports), episodes=reports)
