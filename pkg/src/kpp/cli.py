"""Command-line entry point.

Subcommands: select (greedy selection for one image, JSON out), eval
(greedy-vs-random loss curves, CSV/SVG out), ablate (init-policy ablation,
CSV out), check-submodular (diminishing-returns / monotonicity report).

Exit codes: 0 ok, 1 usage, 2 I/O, 3 oracle failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from typing import Sequence

from .errors import ImageLoadError, KppError, OracleError
from .harness import (
    DEFAULT_BUDGETS,
    DEFAULT_RANDOM_SEEDS,
    CorpusSpec,
    ablation_summary,
    corpus_ids,
    evaluate_image,
    load_directory,
    mean_losses,
    render_curves_svg,
    synth_corpus,
    write_csv,
)
from .oracle import IdwOracle, MeanFillOracle
from .oracle_client import ENV_URL, RemoteOracle, RemoteOracleClient
from .patch_grid import GridSpec, load_and_resize, split
from .selector import InitPolicy, kpp_greedy, resolve_budget
from .submodular_lab import (
    check_diminishing_returns,
    check_monotone,
    gain_from_image,
    make_coverage_function,
    make_modular,
    make_supermodular_square,
    violations_to_csv,
)

EXIT_USAGE = 1
EXIT_IO = 2
EXIT_ORACLE = 3


class _Parser(argparse.ArgumentParser):
    """argparse exits 2 on usage errors; the contract here is exit 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _add_grid_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--image-side", type=int, default=224, help="square image side in pixels")
    p.add_argument("--patch-side", type=int, default=16, help="square patch side in pixels")


def _add_oracle_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument(
        "--oracle",
        choices=["meanfill", "idw", "remote"],
        default="idw",
        help="reconstruction oracle",
    )
    p.add_argument("--alpha", type=float, default=2.0, help="idw distance exponent")
    p.add_argument(
        "--oracle-url",
        default=None,
        help=f"remote oracle base url (default: ${ENV_URL})",
    )
    p.add_argument("--threads", type=int, default=1, help="candidate-sweep parallelism")


def _parse_floats(text: str) -> list[float]:
    return [float(x) for x in text.split(",") if x.strip()]


def _parse_ints(text: str) -> list[int]:
    return [int(x) for x in text.split(",") if x.strip()]


def build_parser() -> _Parser:
    parser = _Parser(prog="kpp", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p_sel = sub.add_parser("select", help="greedy patch selection for one image")
    p_sel.add_argument("--image", required=True, help="input PNG/JPEG")
    p_sel.add_argument("--ratio", type=float, default=0.10, help="budget ratio in (0, 1]")
    p_sel.add_argument("--init", default="central", help="central | none | <patch index>")
    p_sel.add_argument("--out", default=None, help="also write the JSON here")
    _add_grid_flags(p_sel)
    _add_oracle_flags(p_sel)

    for name, help_text in (
        ("eval", "greedy-vs-random loss curves over a corpus"),
        ("ablate", "init-policy ablation over a corpus"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--corpus", default=None, help="directory of PNG/JPEG images")
        p.add_argument("--kind", default="blobs", help="synthetic corpus kind")
        p.add_argument("--count", type=int, default=20, help="synthetic corpus size")
        p.add_argument("--seed", type=int, default=7, help="synthetic corpus seed")
        p.add_argument(
            "--budgets",
            default=",".join(f"{b:g}" for b in DEFAULT_BUDGETS),
            help="comma-separated budget ratios",
        )
        p.add_argument("--out", required=True, help="output CSV path")
        _add_grid_flags(p)
        _add_oracle_flags(p)
        if name == "eval":
            p.add_argument("--init", default="central", help="central | none | <patch index>")
            p.add_argument(
                "--seeds",
                default=",".join(str(s) for s in DEFAULT_RANDOM_SEEDS),
                help="comma-separated seeds for the random baseline",
            )
            p.add_argument("--svg", default=None, help="optional SVG plot path")

    p_chk = sub.add_parser("check-submodular", help="diminishing-returns report")
    p_chk.add_argument(
        "--kind",
        default="coverage",
        help="fixture kind (coverage | modular | square) or 'image'",
    )
    p_chk.add_argument("--count", type=int, default=8, help="fixture ground-set size")
    p_chk.add_argument("--seed", type=int, default=0, help="fixture / sampling seed")
    p_chk.add_argument("--image", default=None, help="image path for --kind image")
    p_chk.add_argument("--mode", choices=["exhaustive", "sampled"], default="exhaustive")
    p_chk.add_argument("--trials", type=int, default=1000, help="sampled-mode trials")
    p_chk.add_argument("--tolerance", type=float, default=1e-9)
    p_chk.add_argument("--out", default=None, help="optional violations CSV path")
    _add_grid_flags(p_chk)
    _add_oracle_flags(p_chk)

    return parser


def _make_oracle(args: argparse.Namespace, spec: GridSpec):
    if args.oracle == "meanfill":
        return MeanFillOracle()
    if args.oracle == "idw":
        return IdwOracle(alpha=args.alpha)
    client = RemoteOracleClient(base_url=args.oracle_url)
    return RemoteOracle(client, spec)


def _cmd_select(args: argparse.Namespace) -> int:
    spec = GridSpec(args.image_side, args.patch_side)
    init = InitPolicy.parse(args.init)
    oracle = _make_oracle(args, spec)
    image = load_and_resize(args.image, spec)
    patches = split(image, spec)
    budget = resolve_budget(args.ratio, spec.n_patches)
    print(
        f"select: image={args.image} oracle={oracle.oracle_id} init={init.label} "
        f"ratio={args.ratio:g} n_keep={budget.n_keep}",
        file=sys.stderr,
    )
    trace = kpp_greedy(oracle, patches, budget, init, threads=args.threads)
    doc = {
        "image": args.image,
        "grid": {
            "image_side": spec.image_side,
            "patch_side": spec.patch_side,
            "grid_side": spec.grid_side,
            "n_patches": spec.n_patches,
        },
        "oracle": oracle.oracle_id,
        "init": init.label,
        "budget": {"ratio": args.ratio, "n_keep": budget.n_keep},
        "chosen": list(trace.chosen_sequence),
        "loss_after": list(trace.losses),
    }
    text = json.dumps(doc, indent=2, sort_keys=True)
    print(text)
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text + "\n")
    return 0


def _load_corpus(args: argparse.Namespace, spec: GridSpec):
    if args.corpus:
        pairs = load_directory(args.corpus, spec)
        return [name for name, _ in pairs], [img for _, img in pairs]
    cspec = CorpusSpec(kind=args.kind, count=args.count, seed=args.seed, grid=spec)
    return corpus_ids(cspec), synth_corpus(cspec)


def _cmd_eval(args: argparse.Namespace) -> int:
    spec = GridSpec(args.image_side, args.patch_side)
    init = InitPolicy.parse(args.init)
    oracle = _make_oracle(args, spec)
    budgets = _parse_floats(args.budgets)
    seeds = _parse_ints(args.seeds)
    ids, images = _load_corpus(args, spec)
    print(
        f"eval: oracle={oracle.oracle_id} init={init.label} images={len(images)} "
        f"budgets={args.budgets} seeds={args.seeds}",
        file=sys.stderr,
    )
    rows = []
    try:
        for image_id, image in zip(ids, images):
            rows.extend(
                evaluate_image(
                    image_id, image, spec, oracle, budgets, seeds, init, threads=args.threads
                )
            )
    except OracleError:
        write_csv(rows, args.out)  # flush the partial run before failing
        print(f"eval: oracle failed; partial CSV flushed to {args.out}", file=sys.stderr)
        raise
    write_csv(rows, args.out)
    if args.svg:
        render_curves_svg(rows, args.svg)
    means = mean_losses(rows)
    for (method, _init_label, budget), value in sorted(means.items()):
        print(f"mean masked_mse method={method} budget={budget:g}: {value:.6g}", file=sys.stderr)
    return 0


def _cmd_ablate(args: argparse.Namespace) -> int:
    spec = GridSpec(args.image_side, args.patch_side)
    oracle = _make_oracle(args, spec)
    budgets = _parse_floats(args.budgets)
    ids, images = _load_corpus(args, spec)
    print(
        f"ablate: oracle={oracle.oracle_id} init=central,none images={len(images)} "
        f"budgets={args.budgets}",
        file=sys.stderr,
    )
    rows = []
    try:
        for init in (InitPolicy.central(), InitPolicy.none()):
            for image_id, image in zip(ids, images):
                rows.extend(
                    evaluate_image(
                        image_id,
                        image,
                        spec,
                        oracle,
                        budgets,
                        random_seeds=(),
                        init=init,
                        methods=("kpp",),
                        threads=args.threads,
                    )
                )
    except OracleError:
        write_csv(rows, args.out)
        print(f"ablate: oracle failed; partial CSV flushed to {args.out}", file=sys.stderr)
        raise
    rows = sorted(
        rows, key=lambda r: (r.image_id, r.method, r.budget_ratio, r.init_policy)
    )
    write_csv(rows, args.out)
    print(ablation_summary(rows))
    return 0


def _cmd_check_submodular(args: argparse.Namespace) -> int:
    rng_n = args.count
    if args.kind == "coverage":
        import numpy as np

        rng = np.random.default_rng(args.seed)
        universe = max(2 * rng_n, 4)
        sets = [
            rng.choice(universe, size=rng.integers(1, max(2, universe // 2)), replace=False)
            for _ in range(rng_n)
        ]
        f = make_coverage_function(sets)
    elif args.kind == "modular":
        import numpy as np

        rng = np.random.default_rng(args.seed)
        f = make_modular(rng.integers(0, 10, size=rng_n).tolist())
    elif args.kind == "square":
        f = make_supermodular_square(rng_n)
    elif args.kind == "image":
        if not args.image:
            raise ImageLoadError("--kind image needs --image")
        spec = GridSpec(args.image_side, args.patch_side)
        oracle = _make_oracle(args, spec)
        image = load_and_resize(args.image, spec)
        f = gain_from_image(oracle, split(image, spec))
    else:
        raise ValueError(f"unknown fixture kind {args.kind!r}")

    mode = args.mode
    if args.kind == "image" and f.n > 12 and mode == "exhaustive":
        raise ValueError(f"grid of {f.n} patches needs --mode sampled")
    dr = check_diminishing_returns(
        f, mode=mode, tolerance=args.tolerance, trials=args.trials, seed=args.seed
    )
    mono = check_monotone(
        f, mode=mode, tolerance=args.tolerance, trials=args.trials, seed=args.seed
    )
    print(
        f"check-submodular: function={f.name} n={f.n} mode={mode} "
        f"diminishing_returns_violations={len(dr)} monotone_violations={len(mono)}"
    )
    if dr:
        worst = max(dr, key=lambda v: v.deficit)
        print(
            f"worst deficit={worst.deficit:.6g} at X={list(worst.x_subset)} "
            f"Y={list(worst.y_subset)} x={worst.element}"
        )
    if args.out:
        violations_to_csv(dr, args.out)
    return 0


_COMMANDS = {
    "select": _cmd_select,
    "eval": _cmd_eval,
    "ablate": _cmd_ablate,
    "check-submodular": _cmd_check_submodular,
}


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (ImageLoadError, OSError) as exc:
        print(f"kpp: i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    except OracleError as exc:
        print(f"kpp: oracle error: {exc}", file=sys.stderr)
        return EXIT_ORACLE
    except (KppError, ValueError) as exc:
        print(f"kpp: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
