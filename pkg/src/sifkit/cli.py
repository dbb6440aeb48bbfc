"""Command-line front end.

Subcommands wire the library into the full workflow: synthesize data,
train the base classifier, imprint novel classes, run inference,
evaluate, run repeated 1-shot episodes, and validate files. Exit codes:
0 success, 1 usage error, 2 data error. All randomness comes from
explicit --seed flags; every JSON output echoes the configuration that
produced it.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys

import numpy as np

from . import bundleio
from .classifier import ClassLayout, TrainConfig, train_classifier
from .evaluation import (
    Detection,
    evaluate_split,
    format_report_table,
    ground_truths_from_annotations,
    run_fewshot_episodes,
)
from .imprinting import ShotSet, imprint_novel_class
from .maskops import PromptPoint, rle_decode, rle_encode
from .numcore import Rng
from .pipeline import InferenceConfig, run_inference
from .synthetic import SynthConfig, SynthDataset, generate_dataset


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def _layout_to_dict(layout: ClassLayout) -> dict:
    return {
        "background_index": layout.background_index,
        "base_class_ids": list(layout.base_class_ids),
        "novel_class_ids": list(layout.novel_class_ids),
        "active_novel": list(layout.active_novel),
    }


def _layout_from_dict(obj: dict) -> ClassLayout:
    return ClassLayout(
        base_class_ids=list(obj["base_class_ids"]),
        novel_class_ids=list(obj["novel_class_ids"]),
        background_index=obj.get("background_index", 0),
        active_novel=list(obj.get("active_novel", [])),
    )


def _dump_json(obj, path: str) -> None:
    with open(path, "wb") as fh:
        fh.write(bundleio.canonical_json_bytes(obj))
        fh.write(b"\n")


def _load_json(path: str) -> dict:
    with open(path, "rb") as fh:
        return json.loads(fh.read().decode("utf-8"))


def _list_bundles(directory: str) -> list[str]:
    names = sorted(n for n in os.listdir(directory) if n.endswith(".sifb"))
    if not names:
        raise ValueError(f"no .sifb bundles in {directory}")
    return [os.path.join(directory, n) for n in names]


def _inference_config(args) -> InferenceConfig:
    return InferenceConfig(
        stability_thresh=args.stability_thresh,
        tau=args.tau,
        delta=args.delta,
        nms_iou=args.nms_iou,
        points_per_side=args.points_per_side,
    )


def _add_inference_flags(p: argparse.ArgumentParser, points_per_side_default=32):
    p.add_argument("--stability-thresh", type=float, default=0.95)
    p.add_argument("--tau", type=float, default=0.0)
    p.add_argument("--delta", type=float, default=1.0)
    p.add_argument("--nms-iou", type=float, default=0.7)
    p.add_argument(
        "--points-per-side",
        type=int,
        default=points_per_side_default,
        help="echoed for provenance; bundles carry their own grid",
    )


# --- synth -----------------------------------------------------------------


def _shot_bundle(ds: SynthDataset, category: int, index: int, embedding) -> bundleio.EmbeddingBundle:
    cfg = ds.config
    return bundleio.EmbeddingBundle(
        image_id=100_000 + category * 1000 + index,
        height=cfg.image_h,
        width=cfg.image_w,
        points=[PromptPoint(x=cfg.image_w // 2, y=cfg.image_h // 2)],
        logits=[np.full((cfg.image_h, cfg.image_w), 2.0)],
        embeddings=[embedding],
        provenance="synthetic",
    )


def cmd_synth(args) -> int:
    cfg_fields = _load_json(args.config) if args.config else {}
    cfg_fields["seed"] = args.seed
    cfg = SynthConfig(**cfg_fields)
    ds = generate_dataset(cfg)

    os.makedirs(args.out, exist_ok=True)
    train_dir = os.path.join(args.out, "train")
    test_dir = os.path.join(args.out, "test")
    os.makedirs(train_dir, exist_ok=True)
    os.makedirs(test_dir, exist_ok=True)

    _dump_json(dataclasses.asdict(cfg), os.path.join(args.out, "synth_config.json"))
    _dump_json(_layout_to_dict(ds.layout), os.path.join(args.out, "layout.json"))
    _dump_json(
        {str(cat): list(map(float, vec)) for cat, vec in ds.prototypes.items()},
        os.path.join(args.out, "prototypes.json"),
    )
    for bundle in ds.train_bundles:
        bundleio.write_bundle(bundle, os.path.join(train_dir, f"bundle_{bundle.image_id:06d}.sifb"))
    _dump_json(
        {
            "layout": _layout_to_dict(ds.layout),
            "labels": {str(k): v for k, v in ds.train_labels.items()},
        },
        os.path.join(train_dir, "labels.json"),
    )
    for bundle in ds.test_bundles:
        bundleio.write_bundle(bundle, os.path.join(test_dir, f"bundle_{bundle.image_id:06d}.sifb"))
    bundleio.write_annotations(ds.test_annotations, os.path.join(test_dir, "annotations.json"))
    for cat, shots in ds.shot_pool.items():
        shot_dir = os.path.join(args.out, "shots", str(cat))
        os.makedirs(shot_dir, exist_ok=True)
        for k, emb in enumerate(shots):
            bundleio.write_bundle(
                _shot_bundle(ds, cat, k, emb), os.path.join(shot_dir, f"shot_{k:02d}.sifb")
            )
    print(
        json.dumps(
            {
                "out": args.out,
                "train_images": len(ds.train_bundles),
                "test_images": len(ds.test_bundles),
                "seed": cfg.seed,
            }
        )
    )
    return 0


# --- train -------------------------------------------------------------------


def cmd_train(args) -> int:
    labels_doc = _load_json(args.labels)
    layout = _layout_from_dict(labels_doc["layout"])
    labels = {int(k): v for k, v in labels_doc["labels"].items()}
    samples = []
    for path in _list_bundles(args.bundles):
        bundle = bundleio.read_bundle(path)
        if bundle.image_id not in labels:
            raise ValueError(f"no labels for image {bundle.image_id} ({path})")
        per_point = labels[bundle.image_id]
        if len(per_point) != len(bundle.points):
            raise ValueError(f"label count mismatch for image {bundle.image_id}")
        samples.extend(zip(bundle.embeddings, per_point))
    cfg = TrainConfig(
        learning_rate=args.lr, point_batch=args.batch, epochs=args.epochs, seed=args.seed
    )
    model = train_classifier(samples, layout, cfg, c_mid=args.c_mid, d=args.d, gamma=args.gamma)
    bundleio.write_model(model, args.out)
    print(
        json.dumps(
            {
                "out": args.out,
                "samples": len(samples),
                "epochs": cfg.epochs,
                "learning_rate": cfg.learning_rate,
                "point_batch": cfg.point_batch,
                "seed": cfg.seed,
                "final_loss": model.epoch_losses[-1] if model.epoch_losses else None,
            }
        )
    )
    return 0


# --- add-class ----------------------------------------------------------------


def cmd_add_class(args) -> int:
    model = bundleio.read_model(args.model)
    embeddings = []
    for path in args.shots:
        embeddings.extend(bundleio.read_bundle(path).embeddings)
    updated = imprint_novel_class(model, ShotSet(class_id=args.class_id, embeddings=embeddings))
    bundleio.write_model(updated, args.out)
    print(json.dumps({"out": args.out, "class_id": args.class_id, "n_shots": len(embeddings)}))
    return 0


# --- infer ---------------------------------------------------------------------


def _preds_to_annotation_dict(bundle, instances, model, cfg) -> dict:
    annotations = []
    for i, inst in enumerate(instances, start=1):
        annotations.append(
            {
                "id": i,
                "image_id": bundle.image_id,
                "category_id": inst.class_id,
                "segmentation": {
                    "counts": rle_encode(inst.mask),
                    "size": [bundle.height, bundle.width],
                },
                "score": inst.score,
                "stability": inst.stability,
            }
        )
    categories = [
        {
            "id": cat,
            "name": f"class-{cat}",
            "split": "base" if cat in model.layout.base_class_ids else "novel",
        }
        for cat in list(model.layout.base_class_ids) + list(model.layout.novel_class_ids)
    ]
    return {
        "config": {"inference": cfg.to_dict()},
        "images": [{"id": bundle.image_id, "height": bundle.height, "width": bundle.width}],
        "annotations": annotations,
        "categories": categories,
    }


def cmd_infer(args) -> int:
    model = bundleio.read_model(args.model)
    bundle = bundleio.read_bundle(args.bundle)
    cfg = _inference_config(args)
    instances = run_inference(bundle, model, cfg)
    doc = _preds_to_annotation_dict(bundle, instances, model, cfg)
    doc["config"]["model"] = args.model
    doc["config"]["bundle"] = args.bundle
    _dump_json(doc, args.out)
    print(json.dumps({"out": args.out, "instances": len(instances)}))
    return 0


# --- eval ----------------------------------------------------------------------


def _detections_from_pred_file(path: str) -> list[Detection]:
    aset = bundleio.read_annotations(path)
    sizes = {im["id"]: (im["height"], im["width"]) for im in aset.images}
    dets = []
    for ann in aset.annotations:
        if "score" not in ann:
            raise ValueError(f"prediction {ann['id']} in {path} has no score")
        h, w = sizes[ann["image_id"]]
        dets.append(
            Detection(
                image_id=ann["image_id"],
                category_id=ann["category_id"],
                mask=rle_decode(ann["segmentation"]["counts"], h, w),
                score=ann["score"],
            )
        )
    return dets


def cmd_eval(args) -> int:
    layout = _layout_from_dict(_load_json(args.layout))
    gts = ground_truths_from_annotations(bundleio.read_annotations(args.ann))
    preds = []
    names = sorted(n for n in os.listdir(args.preds) if n.endswith(".json"))
    if not names:
        raise ValueError(f"no prediction files in {args.preds}")
    for name in names:
        preds.extend(_detections_from_pred_file(os.path.join(args.preds, name)))
    report = evaluate_split(preds, gts, layout)
    if args.format == "json":
        print(json.dumps({"config": {"preds": args.preds, "ann": args.ann}, "report": report.to_dict()}))
    else:
        print(format_report_table([("eval", report)]))
    return 0


# --- episodes --------------------------------------------------------------------


def cmd_episodes(args) -> int:
    model = bundleio.read_model(args.model)
    bundles = [bundleio.read_bundle(p) for p in _list_bundles(args.test)]
    ann = bundleio.read_annotations(os.path.join(args.test, "annotations.json"))
    shot_pool = {}
    shots_root = args.shots
    for name in sorted(os.listdir(shots_root)):
        sub = os.path.join(shots_root, name)
        if not os.path.isdir(sub):
            continue
        cat = int(name)
        shot_pool[cat] = []
        for shot_name in sorted(os.listdir(sub)):
            if shot_name.endswith(".sifb"):
                shot_pool[cat].extend(bundleio.read_bundle(os.path.join(sub, shot_name)).embeddings)
    cfg = _inference_config(args)
    result = run_fewshot_episodes(
        model, bundles, ann, shot_pool, cfg, n_repeats=args.repeats, seed=args.seed
    )
    rows = [(f"episode {i}", rep) for i, rep in enumerate(result.episodes)]
    rows.append(("mean", result.mean))
    if args.format == "table":
        print(format_report_table(rows))
    else:
        print(json.dumps({"mean": result.mean.to_dict()}))
    if args.out:
        _dump_json(
            {
                "config": {
                    "model": args.model,
                    "test": args.test,
                    "shots": args.shots,
                    "repeats": args.repeats,
                    "seed": args.seed,
                    "inference": cfg.to_dict(),
                },
                "episodes": [r.to_dict() for r in result.episodes],
                "mean": result.mean.to_dict(),
            },
            args.out,
        )
    return 0


# --- validate --------------------------------------------------------------------


def cmd_validate(args) -> int:
    path = args.file
    with open(path, "rb") as fh:
        head = fh.read(4)
    if head == bundleio.BUNDLE_MAGIC:
        bundleio.read_bundle(path)
        kind = "bundle"
    elif head == bundleio.MODEL_MAGIC:
        bundleio.read_model(path)
        kind = "model"
    else:
        bundleio.read_annotations(path)
        kind = "annotations"
    print(f"ok: valid {kind} file {path}")
    return 0


# --- entry point -------------------------------------------------------------------


def build_parser() -> _Parser:
    parser = _Parser(prog="sifkit", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    p.add_argument("--config", help="JSON file of generator settings")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=cmd_synth)

    p = sub.add_parser("train", help="train the base classifier")
    p.add_argument("--bundles", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--lr", type=float, default=0.005)
    p.add_argument("--batch", type=int, default=16)
    p.add_argument("--epochs", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--c-mid", type=int, default=32)
    p.add_argument("--d", type=int, default=64)
    p.add_argument("--gamma", type=float, default=7.0)
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("add-class", help="imprint a novel class from shots")
    p.add_argument("--model", required=True)
    p.add_argument("--class-id", type=int, required=True)
    p.add_argument("--shots", nargs="+", required=True, help="shot bundle files")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_add_class)

    p = sub.add_parser("infer", help="run the inference pipeline on one bundle")
    p.add_argument("--model", required=True)
    p.add_argument("--bundle", required=True)
    p.add_argument("--out", required=True)
    _add_inference_flags(p)
    p.set_defaults(fn=cmd_infer)

    p = sub.add_parser("eval", help="COCO-style AP report over prediction files")
    p.add_argument("--preds", required=True, help="directory of prediction JSON files")
    p.add_argument("--ann", required=True)
    p.add_argument("--layout", required=True)
    p.add_argument("--format", choices=("json", "table"), default="table")
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("episodes", help="repeated 1-shot imprint-and-evaluate protocol")
    p.add_argument("--model", required=True)
    p.add_argument("--test", required=True, help="directory with test bundles + annotations.json")
    p.add_argument("--shots", required=True, help="directory with per-class shot subdirectories")
    p.add_argument("--repeats", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="write full JSON report here")
    p.add_argument("--format", choices=("json", "table"), default="table")
    _add_inference_flags(p)
    p.set_defaults(fn=cmd_episodes)

    p = sub.add_parser("validate", help="check a SIFB/SIFM/annotation file")
    p.add_argument("--file", required=True)
    p.set_defaults(fn=cmd_validate)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    try:
        return args.fn(args)
    except (ValueError, KeyError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
