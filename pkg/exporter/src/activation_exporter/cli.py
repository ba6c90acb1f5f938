"""Command-line front end for the activation exporter."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .export import (
    ArchitectureMismatch,
    ExportConfig,
    export,
    load_image_listing,
    load_keypoint_file,
    load_model,
)

logger = logging.getLogger("activation_exporter")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="activation-export",
        description="Dump final-conv activations into the filterlens exchange format",
    )
    model = parser.add_mutually_exclusive_group(required=True)
    model.add_argument("--arch", help="torchvision model name (randomly initialized)")
    model.add_argument("--checkpoint", help="pickled torch.nn.Module checkpoint")
    parser.add_argument("--state-dict", help="optional state_dict to load into --arch")
    parser.add_argument("--listing", required=True, help="image listing JSON")
    parser.add_argument("--keypoints", help="keypoint JSON (original image pixels)")
    parser.add_argument("--layer", default="layer4", help="spatial module to hook")
    parser.add_argument("--head", default="fc", help="linear head module name")
    parser.add_argument("--input-size", type=int, default=224)
    parser.add_argument("--no-normalize", action="store_true",
                        help="skip ImageNet mean/std normalization")
    parser.add_argument("--no-rectify", action="store_true",
                        help="refuse instead of clamping negative activations")
    parser.add_argument("--batch-size", type=int, default=16)
    parser.add_argument("--device", default="cpu")
    parser.add_argument("--out", required=True, help="output directory")
    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(
        stream=sys.stderr, format="%(levelname)s %(message)s", level=logging.INFO
    )
    args = build_parser().parse_args(argv)
    try:
        model = load_model(args.arch, args.checkpoint)
        if args.state_dict:
            import torch

            model.load_state_dict(
                torch.load(args.state_dict, map_location="cpu", weights_only=True)
            )
        class_names, images = load_image_listing(args.listing)
        keypoints = load_keypoint_file(args.keypoints) if args.keypoints else {}
        config = ExportConfig(
            model=model,
            class_names=class_names,
            images=images,
            out_dir=Path(args.out),
            layer=args.layer,
            head=args.head,
            input_size=args.input_size,
            normalize=not args.no_normalize,
            rectify=not args.no_rectify,
            batch_size=args.batch_size,
            device=args.device,
            keypoints=keypoints,
        )
        manifest = export(config)
    except (FileNotFoundError, OSError) as exc:
        logger.error("%s", exc)
        return 2
    except (ArchitectureMismatch, ValueError) as exc:
        logger.error("%s", exc)
        return 1
    logger.info("manifest -> %s", manifest)
    return 0


if __name__ == "__main__":
    sys.exit(main())
