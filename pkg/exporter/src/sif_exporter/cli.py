"""sif-export command line. Exit codes: 0 success, 1 usage, 2 data error."""

from __future__ import annotations

import argparse
import json
import sys

from .backends import Sam2Backend, SyntheticBackend
from .export import export


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def build_parser() -> _Parser:
    p = _Parser(prog="sif-export", description=__doc__)
    p.add_argument("--images", required=True, help="directory of source images")
    p.add_argument("--ann", required=True, help="COCO annotation JSON")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--points-per-side", type=int, default=32)
    p.add_argument("--backend", choices=("sam2", "synthetic"), default="sam2")
    p.add_argument("--checkpoint", help="SAM2 checkpoint path (sam2 backend)")
    p.add_argument("--model-cfg", help="SAM2 model config name (sam2 backend)")
    p.add_argument("--device", default="cpu")
    p.add_argument("--embed-h", type=int, default=8)
    p.add_argument("--embed-w", type=int, default=8)
    p.add_argument("--c-in", type=int, default=16, help="channels (synthetic backend only)")
    p.add_argument("--novel-ids", default="", help="comma-separated novel category ids")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.backend == "sam2" and not (args.checkpoint and args.model_cfg):
            raise _UsageError("the sam2 backend requires --checkpoint and --model-cfg")
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    try:
        if args.backend == "synthetic":
            backend = SyntheticBackend(
                c_in=args.c_in, embed_h=args.embed_h, embed_w=args.embed_w
            )
        else:
            backend = Sam2Backend(
                checkpoint=args.checkpoint,
                model_cfg=args.model_cfg,
                device=args.device,
                embed_h=args.embed_h,
                embed_w=args.embed_w,
            )
        novel = {int(t) for t in args.novel_ids.split(",") if t.strip()}
        summary = export(
            args.images,
            args.ann,
            args.out,
            backend,
            points_per_side=args.points_per_side,
            novel_category_ids=novel,
        )
        print(json.dumps({"images": summary["images"], "out": args.out}))
        return 0
    except (ValueError, KeyError, OSError, RuntimeError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
