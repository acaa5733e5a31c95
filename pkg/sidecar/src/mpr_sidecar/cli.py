"""Serve the gateway protocol from pretrained checkpoints."""

from __future__ import annotations

import argparse
import sys


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mpr-sidecar",
        description="serve encode_pair/encode_image/generate/descriptor over real models",
    )
    parser.add_argument("--clip", required=True, help="dual-encoder checkpoint path or name")
    parser.add_argument("--t5", required=True, help="generator checkpoint path or name")
    parser.add_argument("--seed", type=int, default=0, help="projection seed")
    parser.add_argument("--name", default=None, help="descriptor name override")
    parser.add_argument("--image-root", default=None,
                        help="directory image_ref values resolve under")
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--port", type=int, default=8090)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    import uvicorn

    from .bundle import load_bundle
    from .service import create_app

    bundle = load_bundle(args.clip, args.t5, seed=args.seed, name=args.name)
    app = create_app(bundle, image_root=args.image_root)
    uvicorn.run(app, host=args.host, port=args.port)
    return 0


if __name__ == "__main__":
    sys.exit(main())
