"""Command-line entry point: configure a model and serve irsr/1 on stdio."""

from __future__ import annotations

import argparse
import sys

from .models import MODEL_KINDS, AdapterConfig, build_model
from .protocol import serve


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="irsr-adapter",
        description="Serve a restoration model over the irsr/1 stdio protocol",
    )
    parser.add_argument("--kind", choices=MODEL_KINDS, default="identity")
    parser.add_argument("--checkpoint", default=None,
                        help="TorchScript checkpoint (non-identity kinds)")
    parser.add_argument("--device", default="cpu")
    parser.add_argument("--scale", type=int, default=None,
                        help="upscaling factor (default: 1 for identity, 4 otherwise)")
    parser.add_argument("--channels", type=int, choices=(1, 3), default=1)
    parser.add_argument("--internal-tlc", action="store_true",
                        help="announce that the checkpoint applies local "
                             "conversion internally (hat kind)")
    parser.add_argument("--input-range", choices=("01", "255"), default="01")
    parser.add_argument("--pad-multiple", type=int, default=None,
                        help="pad inputs to this multiple (default per kind)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    scale = args.scale if args.scale is not None else (1 if args.kind == "identity" else 4)
    try:
        cfg = AdapterConfig(
            kind=args.kind,
            checkpoint=args.checkpoint,
            device=args.device,
            scale=scale,
            channels=args.channels,
            internal_tlc=args.internal_tlc,
            input_range=args.input_range,
            pad_multiple=args.pad_multiple,
        )
        model = build_model(cfg)
    except Exception as e:  # noqa: BLE001 - startup failures go to stderr
        print(f"irsr-adapter: {e}", file=sys.stderr)
        return 1
    return serve(model)


if __name__ == "__main__":
    sys.exit(main())
