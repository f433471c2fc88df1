"""Command-line surface: degrade, restore, fuse, eval, pipeline, montage,
and synth-demo subcommands. All state flows through flags and the config
file; nothing is read from the environment.
"""

from __future__ import annotations

import argparse
import shlex
import sys
from pathlib import Path

from . import __version__
from .backends import BUILTIN_KINDS, builtin_backend, external_backend
from .ensemble import EnsembleConfig, FusionWeights, TileConfig, fuse
from .errors import IrsrError, ManifestError
from .harness import (
    MetricConfig,
    Report,
    _mean,
    _scan_images,
    build_manifest,
    emit_report,
    fingerprint_dict,
    montage,
    run_eval,
    synthesize_lr,
)
from .image import Image, PixelFormat, load_image, modcrop, store_image
from .metrics import SsimParams, evaluate_pair
from .pipeline import BranchConfig, load_pipeline_config, parse_weights, run_branch
from .resample import KernelSpec, degrade
from .synthdemo import generate_demo_set


def _kernel_from_args(args) -> KernelSpec:
    return KernelSpec(a=args.kernel_a, antialias=not args.no_antialias)


def _store16(img: Image, path: Path) -> None:
    store_image(img, path, PixelFormat(depth=16, channels=img.channels))


def cmd_degrade(args) -> int:
    kernel = _kernel_from_args(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    images = _scan_images(Path(args.hr))
    if not images:
        raise ManifestError(f"no supported images found in {args.hr}")
    for stem, path in sorted(images.items()):
        hr = modcrop(load_image(path), args.scale)
        _store16(degrade(hr, args.scale, kernel), out / f"{stem}.png")
    print(f"degraded {len(images)} image(s) x{args.scale} -> {out}")
    return 0


def _make_restore_backend(args):
    if args.backend.startswith("ext:"):
        return external_backend(shlex.split(args.backend[4:]), timeout=args.timeout)
    scale = 1 if args.backend == "identity1x" else args.scale
    return builtin_backend(args.backend, scale, _kernel_from_args(args))


def cmd_restore(args) -> int:
    tiling = None
    if args.tile is not None:
        tiling = TileConfig(tile=args.tile, overlap=args.overlap, blend=args.blend)
    ensemble = EnsembleConfig() if args.self_ensemble else None
    branch = BranchConfig("cli", args.backend, tiling=tiling, ensemble=ensemble)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    images = _scan_images(Path(args.infile))
    if not images:
        raise ManifestError(f"no supported images found in {args.infile}")
    backend = _make_restore_backend(args)
    try:
        for stem, path in sorted(images.items()):
            sr = run_branch(branch, backend, load_image(path))
            _store16(sr, out / f"{stem}.png")
    finally:
        backend.close()
    print(f"restored {len(images)} image(s) -> {out}")
    return 0


def cmd_fuse(args) -> int:
    dirs = [Path(d) for d in args.dirs]
    weights = (
        parse_weights(args.weights)
        if args.weights
        else FusionWeights(tuple(1.0 / len(dirs) for _ in dirs))
    )
    scans = [_scan_images(d) for d in dirs]
    stems = set(scans[0])
    for d, scan in zip(dirs, scans):
        if set(scan) != stems:
            raise ManifestError(f"stem sets differ between {dirs[0]} and {d}")
    if not stems:
        raise ManifestError("no supported images to fuse")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for stem in sorted(stems):
        fused = fuse([load_image(scan[stem]) for scan in scans], weights)
        _store16(fused, out / f"{stem}.png")
    print(f"fused {len(stems)} image(s) from {len(dirs)} inputs -> {out}")
    return 0


def cmd_eval(args) -> int:
    metric = MetricConfig(shave=args.shave, ssim=SsimParams())
    gt = _scan_images(Path(args.gt))
    sr = _scan_images(Path(args.sr))
    if not gt:
        raise ManifestError(f"no supported images found in {args.gt}")
    if set(gt) != set(sr):
        missing = sorted(set(gt) ^ set(sr))
        raise ManifestError(f"GT/SR stem mismatch: {', '.join(missing)}")
    records = []
    for stem in sorted(gt):
        records.append(
            evaluate_pair(
                load_image(gt[stem]), load_image(sr[stem]),
                args.scale, args.shave, metric.ssim, name=stem,
            )
        )
    report = Report(
        records=tuple(records),
        aggregate_psnr=_mean(r.psnr_db for r in records),
        aggregate_ssim=_mean(r.ssim for r in records),
        aggregate_score=_mean(r.score for r in records),
        config_fingerprint=fingerprint_dict(
            {
                "mode": "eval",
                "scale": args.scale,
                "metrics": {"shave": metric.shave, "ssim": metric.ssim.describe()},
            }
        ),
    )
    emit_report(report, args.report, args.format)
    print(
        f"evaluated {len(records)} pair(s): PSNR {report.aggregate_psnr:.4f}  "
        f"SSIM {report.aggregate_ssim:.4f}  Score {report.aggregate_score:.4f}"
    )
    return 0


def cmd_pipeline(args) -> int:
    cfg = load_pipeline_config(args.config)
    out = Path(args.out)
    manifest = build_manifest(args.hr, scale=cfg.scale)
    manifest = synthesize_lr(manifest, out / "lr", cfg.kernel)
    report = run_eval(
        manifest,
        cfg,
        metric=MetricConfig(shave=args.shave),
        workers=args.workers,
        sr_out_dir=out / "sr",
    )
    emit_report(report, args.report, "json")
    print(
        f"pipeline over {len(manifest.entries)} image(s): "
        f"PSNR {report.aggregate_psnr:.4f}  SSIM {report.aggregate_ssim:.4f}  "
        f"Score {report.aggregate_score:.4f}"
    )
    if report.partial:
        for name, error in report.failures:
            print(f"FAILED {name}: {error}", file=sys.stderr)
        return 1
    return 0


def cmd_montage(args) -> int:
    columns = []
    for part in args.cols.split(","):
        label, _, directory = part.partition("=")
        if not label or not directory:
            raise ManifestError(f"bad --cols entry {part!r}; expected label=DIR")
        columns.append((label.strip(), directory.strip()))
    names = [n.strip() for n in args.names.split(",") if n.strip()]
    montage(columns, names, args.out)
    print(f"montage ({len(names)} rows x {len(columns)} cols) -> {args.out}")
    return 0


def cmd_synth_demo(args) -> int:
    paths = generate_demo_set(args.out, count=args.count, seed=args.seed)
    print(f"generated {len(paths)} synthetic frame(s) -> {args.out}")
    return 0


def _add_kernel_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--kernel-a", type=float, default=-0.5,
                   help="Keys cubic sharpness parameter (default -0.5)")
    p.add_argument("--no-antialias", action="store_true",
                   help="disable kernel dilation on downsampling")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="irsr",
        description="Super-resolution inference and evaluation harness",
    )
    parser.add_argument("--version", action="version", version=f"irsr {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("degrade", help="synthesize LR inputs by bicubic downsampling")
    p.add_argument("--hr", required=True, help="directory of HR images")
    p.add_argument("--out", required=True, help="output directory for LR images")
    p.add_argument("--scale", type=int, default=4)
    _add_kernel_flags(p)
    p.set_defaults(func=cmd_degrade)

    p = sub.add_parser("restore", help="run one restorer over a directory")
    p.add_argument("--backend", required=True,
                   help=f"one of {'|'.join(BUILTIN_KINDS)} or ext:<command>")
    p.add_argument("--scale", type=int, default=4)
    p.add_argument("--tile", type=int, default=None, help="LR tile side")
    p.add_argument("--overlap", type=int, default=16, help="LR tile overlap")
    p.add_argument("--blend", choices=("tent", "uniform"), default="tent")
    p.add_argument("--self-ensemble", action="store_true",
                   help="average over the eight D4 views")
    p.add_argument("--in", dest="infile", required=True, help="directory of LR images")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--timeout", type=float, default=60.0,
                   help="external backend response deadline (seconds)")
    _add_kernel_flags(p)
    p.set_defaults(func=cmd_restore)

    p = sub.add_parser("fuse", help="pixelwise weighted fusion of directories")
    p.add_argument("dirs", nargs="+", help="input directories (same stems)")
    p.add_argument("--weights", default=None, help="comma list, e.g. 0.5,0.5")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_fuse)

    p = sub.add_parser("eval", help="score SR outputs against ground truth")
    p.add_argument("--gt", required=True)
    p.add_argument("--sr", required=True)
    p.add_argument("--scale", type=int, default=4)
    p.add_argument("--shave", type=int, default=4)
    p.add_argument("--report", required=True)
    p.add_argument("--format", choices=("json", "csv", "table"), default="json")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("pipeline", help="full protocol: degrade, restore, score")
    p.add_argument("--config", required=True, help="pipeline INI file")
    p.add_argument("--hr", required=True, help="directory of HR images")
    p.add_argument("--out", required=True, help="working directory (lr/, sr/)")
    p.add_argument("--report", required=True)
    p.add_argument("--shave", type=int, default=4)
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_pipeline)

    p = sub.add_parser("montage", help="qualitative comparison grid")
    p.add_argument("--cols", required=True, help="label=DIR[,label=DIR...]")
    p.add_argument("--names", required=True, help="comma list of image stems")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_montage)

    p = sub.add_parser("synth-demo", help="generate the synthetic HR demo set")
    p.add_argument("--out", required=True)
    p.add_argument("--count", type=int, default=12)
    p.add_argument("--seed", type=int, default=7)
    p.set_defaults(func=cmd_synth_demo)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except IrsrError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
