"""Command-line surface: train / eval / infer / gradcheck / degrade.

Exit codes: 0 success, 1 validation failure, 2 I/O error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path


def _add_train(sub):
    p = sub.add_parser("train", help="train a model on clips or synthetic data")
    p.add_argument("--preset", choices=("paper", "desk"), default="desk")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--data", help="root of HR clip directories")
    src.add_argument("--synthetic", action="store_true", help="use generated translated-texture data")
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--steps", type=int, default=None, help="stop after this many optimizer steps")
    p.add_argument("--batch", type=int, default=8)
    p.add_argument("--loss", choices=("l1", "l2"), default="l1")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--resume", help="checkpoint directory to continue from")
    p.add_argument("--out", required=True, help="output directory (checkpoints + trace.csv)")
    p.add_argument("--lr", type=float, default=1e-4)
    p.add_argument("--checkpoint-every", type=int, default=None, help="steps between checkpoints")
    p.add_argument("--no-augment", action="store_true")
    p.add_argument("--degrade", choices=("on", "precomputed"), default="on")
    p.add_argument("--patch", type=int, default=50, help="LR patch size for clip training")
    p.add_argument("--n-dconv", type=int, default=None, help="override alignment cascade depth")
    p.add_argument("--no-hffb", action="store_true", help="replace the dilated fusion block with a plain 3x3 conv")
    p.add_argument("--frames", type=int, choices=(1, 3, 5, 7), default=None, help="override input frame count")
    p.add_argument("--synth-count", type=int, default=64)
    p.add_argument("--synth-shift", type=int, default=2)
    p.add_argument("--synth-hr-size", type=int, default=64)


def _add_eval(sub):
    p = sub.add_parser("eval", help="score clips with PSNR/SSIM on the Y channel")
    p.add_argument("--data", required=True, help="clip directory or root of clip directories")
    mode = p.add_mutually_exclusive_group(required=True)
    mode.add_argument("--ckpt", help="checkpoint directory")
    mode.add_argument("--bicubic", action="store_true", help="cubic-upscale baseline instead of a model")
    p.add_argument("--degrade", choices=("on", "precomputed"), default="on")
    p.add_argument("--border-crop", type=int, default=0)
    p.add_argument("--exclude-boundary", type=int, default=2)
    p.add_argument("--out", help="write the per-frame CSV report here")
    p.add_argument("--scale", type=int, default=4)


def _add_infer(sub):
    p = sub.add_parser("infer", help="super-resolve a clip to PNG frames")
    p.add_argument("--ckpt", help="checkpoint directory (omit for bicubic upscaling)")
    p.add_argument("--data", required=True, help="LR clip directory")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--scale", type=int, default=4)


def _add_gradcheck(sub):
    p = sub.add_parser("gradcheck", help="finite-difference verification of gradients")
    p.add_argument("component", choices=("primitives", "conv2d", "deform", "nonlocal", "align", "rrdb", "all"))
    p.add_argument("--seed", type=int, default=0)


def _add_degrade(sub):
    p = sub.add_parser("degrade", help="write the LR mirror of an HR clip root")
    p.add_argument("--data", required=True, help="root of HR clip directories")
    p.add_argument("--out", help="mirror root (default <root>_lr)")
    p.add_argument("--scale", type=int, default=4)


def _build_config(args):
    from .model import ModelConfig

    overrides = {}
    if args.n_dconv is not None:
        overrides["n_dconv"] = args.n_dconv
    if args.no_hffb:
        overrides["use_hffb"] = False
    if args.frames is not None:
        overrides["n_radius"] = (args.frames - 1) // 2
    return ModelConfig.preset(args.preset, **overrides)


def _clip_dataset(root, config, degrade_mode, patch, seed):
    from .evaluate import _lr_frames_for
    from .image import augment, load_clip, window_clip

    import numpy as np

    root = Path(root)
    clip_dirs = sorted(p for p in root.iterdir() if p.is_dir()) or [root]
    rng = np.random.default_rng(seed)
    sequences = []
    for clip_dir in clip_dirs:
        hr = load_clip(clip_dir)
        lr = _lr_frames_for(clip_dir, hr, degrade_mode, config.scale)
        for window in window_clip(lr, config.n_radius, hr):
            h, w = window.center.height, window.center.width
            if patch and h > patch and w > patch:
                y = int(rng.integers(0, h - patch + 1))
                x = int(rng.integers(0, w - patch + 1))
                window = augment(window, [("crop", x, y, patch, patch)])
            sequences.append(window)
    return sequences


def _cmd_train(args) -> int:
    from . import checkpoint as ckpt
    from .model import build_model, parameter_count
    from .training import synth_dataset, train

    if args.epochs is None and args.steps is None:
        raise ValueError("give --epochs and/or --steps")

    if args.resume:
        model = ckpt.load_model(args.resume, seed=args.seed)
        config = model.config
        print(f"resumed from {args.resume}")
    else:
        config = _build_config(args)
        model = build_model(config, seed=args.seed)
    print(f"model: {parameter_count(model):,} parameters, config {config.to_dict()}")

    if args.synthetic:
        dataset = synth_dataset(
            args.synth_count, args.synth_shift, texture_seed=args.seed + 1,
            n_radius=config.n_radius, hr_size=args.synth_hr_size, scale=config.scale,
        )
    else:
        dataset = _clip_dataset(args.data, config, args.degrade, args.patch, seed=args.seed + 2)
    print(f"dataset: {len(dataset)} sequences")

    result = train(
        model, dataset, epochs=args.epochs, steps=args.steps, loss=args.loss,
        batch_size=args.batch, seed=args.seed, base_lr=args.lr, out_dir=args.out,
        checkpoint_every=args.checkpoint_every, augment_data=not args.no_augment,
        log=print,
    )
    if result.aborted:
        print("training aborted on non-finite loss/gradient; last good checkpoint retained")
        return 1
    print(f"done: {len(result.trace)} steps, final checkpoint {result.final_checkpoint}")
    return 0


def _cmd_eval(args) -> int:
    from . import checkpoint as ckpt
    from .evaluate import eval_root, summarize, write_report_csv
    from .metrics import EvalProtocol

    model = None if args.bicubic else ckpt.load_model(args.ckpt)
    proto = EvalProtocol(args.exclude_boundary, args.border_crop)
    reports = eval_root(model, args.data, proto, args.degrade, args.scale, log=print)
    print(summarize(reports))
    if args.out:
        write_report_csv(args.out, reports)
        print(f"report written to {args.out}")
    return 0


def _cmd_infer(args) -> int:
    from . import checkpoint as ckpt
    from .evaluate import infer

    model = ckpt.load_model(args.ckpt) if args.ckpt else None
    written = infer(model, args.data, args.out, args.scale)
    print(f"wrote {len(written)} frames to {args.out}")
    return 0


def _cmd_gradcheck(args) -> int:
    from .gradcheck import run_suite

    results = run_suite(args.component, args.seed)
    for r in results:
        print(r.line())
    failed = [r for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} checks passed")
    return 1 if failed else 0


def _cmd_degrade(args) -> int:
    from .evaluate import degrade_clip
    from .image import load_clip, write_frame

    root = Path(args.data)
    out_root = Path(args.out) if args.out else root.with_name(root.name + "_lr")
    clip_dirs = sorted(p for p in root.iterdir() if p.is_dir()) or [root]
    for clip_dir in clip_dirs:
        out_dir = out_root / clip_dir.name if clip_dir != root else out_root
        out_dir.mkdir(parents=True, exist_ok=True)
        paths = sorted(clip_dir.glob("*.png"))
        lr = degrade_clip(load_clip(clip_dir), args.scale)
        for path, frame in zip(paths, lr):
            write_frame(out_dir / path.name, frame)
        print(f"{clip_dir.name}: {len(paths)} frames -> {out_dir}")
    return 0


_COMMANDS = {
    "train": _cmd_train,
    "eval": _cmd_eval,
    "infer": _cmd_infer,
    "gradcheck": _cmd_gradcheck,
    "degrade": _cmd_degrade,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dnln", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    _add_train(sub)
    _add_eval(sub)
    _add_infer(sub)
    _add_gradcheck(sub)
    _add_degrade(sub)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
