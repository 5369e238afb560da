"""Create a seeded randomly-initialized checkpoint.

Useful for smoke tests and environments without the released pretrained
weights; the served losses are then meaningful only as protocol fixtures.
"""

from __future__ import annotations

import argparse
import sys

from .checkpoint import save_checkpoint, state_dict_digest
from .model import ARCHS, build_model


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="mae-oracle-make-checkpoint", description=__doc__)
    parser.add_argument("--arch", choices=sorted(ARCHS), default="vit-base-16")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--out", required=True)
    args = parser.parse_args(argv)
    model = build_model(ARCHS[args.arch], seed=args.seed)
    save_checkpoint(model, args.out)
    digest = state_dict_digest(model.state_dict())
    print(f"wrote {args.arch} checkpoint (seed {args.seed}) to {args.out}")
    print(f"sha256:{digest[:12]}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
