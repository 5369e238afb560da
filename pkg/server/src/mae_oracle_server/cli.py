"""Server entry point: load a checkpoint and serve the oracle protocol."""

from __future__ import annotations

import argparse
import sys

import torch
import uvicorn

from .app import create_app
from .service import ReconstructionEngine


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mae-oracle-server", description=__doc__)
    parser.add_argument("--checkpoint", required=True, help="model checkpoint path")
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--port", type=int, default=8008)
    parser.add_argument("--device", default="cpu")
    parser.add_argument(
        "--deterministic",
        action="store_true",
        help="single-threaded deterministic kernels; identical requests yield identical responses",
    )
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.deterministic:
        torch.manual_seed(0)
        torch.set_num_threads(1)
        torch.use_deterministic_algorithms(True)
    try:
        engine = ReconstructionEngine.from_checkpoint(args.checkpoint, device=args.device)
    except (OSError, ValueError) as exc:
        print(f"mae-oracle-server: cannot load checkpoint: {exc}", file=sys.stderr)
        return 1
    print(f"mae-oracle-server: serving {engine.model_id} on {args.host}:{args.port}")
    uvicorn.run(create_app(engine), host=args.host, port=args.port, log_level="warning")
    return 0


if __name__ == "__main__":
    sys.exit(main())
