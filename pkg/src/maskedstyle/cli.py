"""Command-line entry points for stylization, baselines, and batch experiments."""

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import harness
from .dataset import index_dataset, load_image, load_mask, save_image
from .errors import ConfigError
from .multimask import RegionSpec, stylize_multi
from .network import load_weights
from .stylenet import BlendConfig, StylizeRequest, mask_then_style, style_then_mask, stylize_masked


def _blend_from_args(args) -> BlendConfig:
    return BlendConfig(
        feather_before=args.feather_before,
        expand_during=args.expand_during,
        content_feather_decoder=args.content_feather,
        feather_kernel_px=args.feather_kernel,
    )


def _add_blend_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--feather-before", action="store_true")
    parser.add_argument("--expand-during", action="store_true")
    parser.add_argument("--content-feather", action="store_true")
    parser.add_argument("--feather-kernel", type=int, default=5, metavar="PX")


def _load_network(args):
    path = getattr(args, "weights", None) or os.environ.get(harness.WEIGHTS_ENV_VAR, "")
    if not path:
        raise ConfigError(
            f"no weights given: pass --weights or set {harness.WEIGHTS_ENV_VAR}"
        )
    network = load_weights(path)
    if getattr(args, "renormalize", None) is not None:
        network = network.with_renormalize(args.renormalize)
    return network


def _cmd_stylize(args) -> int:
    network = _load_network(args)
    content = load_image(args.content)
    mask = load_mask(args.mask)
    style = load_image(args.style)
    out = stylize_masked(network, StylizeRequest(content, style, mask, _blend_from_args(args)))
    save_image(out, args.out)
    print(json.dumps({"out": str(args.out)}))
    return 0


def _cmd_stylize_multi(args) -> int:
    network = _load_network(args)
    content = load_image(args.content)
    regions = []
    for pair in args.region:
        mask_path, _, style_path = pair.rpartition(":")
        if not mask_path:
            raise ConfigError(f"--region expects MASK:STYLE, got {pair!r}")
        regions.append(RegionSpec(mask=load_mask(mask_path), style=load_image(style_path)))
    out = stylize_multi(network, content, regions, _blend_from_args(args))
    save_image(out, args.out)
    print(json.dumps({"out": str(args.out), "regions": len(regions)}))
    return 0


def _cmd_baseline(args) -> int:
    network = _load_network(args)
    content = load_image(args.content)
    mask = load_mask(args.mask)
    style = load_image(args.style)
    fn = style_then_mask if args.mode == "style-then-mask" else mask_then_style
    save_image(fn(network, content, style, mask), args.out)
    print(json.dumps({"out": str(args.out), "mode": args.mode}))
    return 0


def _cmd_evaluate(args) -> int:
    config = harness.parse_run_config(args.config)
    result = harness.run_tab2(config)
    harness.write_run_outputs(
        config.output_dir,
        "report.csv",
        result["csv"],
        {
            "kind": "evaluate",
            "config_hash": result["config_hash"],
            "dataset_integrity": result["dataset_integrity"],
            "seed": config.seed,
            "methods": list(config.methods),
            "skipped": result["skipped"],
            "means": result["means"],
        },
    )
    print(json.dumps({"output_dir": config.output_dir, "means": result["means"]}, indent=2))
    return 0


def _cmd_ablate(args) -> int:
    config = harness.parse_run_config(args.config)
    network = harness.resolve_network(config)
    result = harness.run_ablation_from_config(config, network)
    grid = result["grid"]
    harness.write_run_outputs(
        config.output_dir,
        "ablation.csv",
        result["csv"],
        {
            "kind": "ablate",
            "config_hash": result["config_hash"],
            "dataset_integrity": result["dataset_integrity"],
            "seed": config.seed,
            "n_items": grid.n_items,
            "n_failed": grid.n_failed,
        },
    )
    print(json.dumps({"output_dir": config.output_dir, "n_items": grid.n_items}))
    return 0


def _cmd_disparity(args) -> int:
    config = harness.parse_run_config(args.config)
    result = harness.run_disparity(config)
    harness.write_run_outputs(
        config.output_dir,
        "disparity.csv",
        result["csv"],
        {
            "kind": "disparity",
            "config_hash": result["config_hash"],
            "dataset_integrity": result["dataset_integrity"],
            "seed": config.seed,
            "skipped": result["skipped"],
        },
    )
    print(json.dumps({"output_dir": config.output_dir, "images": len(result["rows"])}))
    return 0


def _cmd_index(args) -> int:
    index = index_dataset(args.root)
    print(
        json.dumps(
            {
                "root": str(index.root),
                "entries": len(index),
                "integrity_hash": index.integrity_hash,
            }
        )
    )
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="masked-style")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("stylize", help="stylize one masked region")
    p.add_argument("--content", required=True)
    p.add_argument("--mask", required=True)
    p.add_argument("--style", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--weights")
    p.add_argument("--renormalize", action=argparse.BooleanOptionalAction, default=True)
    _add_blend_flags(p)
    p.set_defaults(func=_cmd_stylize)

    p = sub.add_parser("stylize-multi", help="stylize several regions in one pass")
    p.add_argument("--content", required=True)
    p.add_argument("--region", action="append", required=True, metavar="MASK:STYLE")
    p.add_argument("--out", required=True)
    p.add_argument("--weights")
    p.add_argument("--renormalize", action=argparse.BooleanOptionalAction, default=True)
    _add_blend_flags(p)
    p.set_defaults(func=_cmd_stylize_multi)

    p = sub.add_parser("baseline", help="run a pre/post-masking baseline")
    p.add_argument("--mode", required=True, choices=("style-then-mask", "mask-then-style"))
    p.add_argument("--content", required=True)
    p.add_argument("--mask", required=True)
    p.add_argument("--style", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--weights")
    p.set_defaults(func=_cmd_baseline)

    p = sub.add_parser("evaluate", help="per-image region metrics for each method")
    p.add_argument("--config", required=True)
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("ablate", help="eight-way blending ablation grid")
    p.add_argument("--config", required=True)
    p.set_defaults(func=_cmd_ablate)

    p = sub.add_parser("disparity", help="whole-image vs masked-region EMD")
    p.add_argument("--config", required=True)
    p.set_defaults(func=_cmd_disparity)

    p = sub.add_parser("index", help="index an image/annotation dataset")
    p.add_argument("--root", required=True)
    p.set_defaults(func=_cmd_index)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except Exception as exc:  # surfaced as machine-readable errors, nonzero exit
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
