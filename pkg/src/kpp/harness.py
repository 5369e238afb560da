"""Experiment harness: synthetic corpora, greedy-vs-random loss curves,
initial-patch ablation, and deterministic CSV/SVG emission.

Every run is a pure function of its arguments (corpus spec, oracle id,
budgets, seeds, init policy); rows are normalized to a fixed order so
repeated runs produce byte-identical files.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .oracle import OracleInterface, oracle_masked_mse
from .patch_grid import GridSpec, load_and_resize, split
from .selector import (
    Budget,
    InitPolicy,
    SelectionTrace,
    kpp_greedy,
    lazy_greedy,
    random_select,
    resolve_budget,
)

CSV_VERSION_LINE = "#kpp-csv-v1"
CSV_HEADER = "image_id,method,oracle_id,init_policy,budget_ratio,n_keep,seed,masked_mse"
DEFAULT_BUDGETS = (0.05, 0.10, 0.25, 0.50)
DEFAULT_RANDOM_SEEDS = (0, 1, 2, 3, 4)

SYNTH_KINDS = ("gradient", "checker", "blobs")


@dataclass(frozen=True)
class CorpusSpec:
    """What images to evaluate: a synthetic family or a directory of files."""

    kind: str  # gradient | checker | blobs | directory
    count: int = 0
    seed: int = 0
    grid: GridSpec = GridSpec(224, 16)
    path: str | None = None

    def __post_init__(self) -> None:
        if self.kind not in SYNTH_KINDS + ("directory",):
            raise ValueError(f"unknown corpus kind {self.kind!r}")
        if self.kind != "directory" and self.count < 1:
            raise ValueError("synthetic corpora need count >= 1")
        if self.kind == "directory" and not self.path:
            raise ValueError("directory corpora need a path")


@dataclass(frozen=True)
class CurveRow:
    image_id: str
    method: str  # kpp | kpp_lazy | random
    oracle_id: str
    init_policy: str
    budget_ratio: float
    n_keep: int
    seed: int | None  # random rows only
    masked_mse: float


def _gradient_image(rng: np.random.Generator, side: int) -> np.ndarray:
    """Per-channel linear ramps with random orientation, spanning [0, 1]."""
    y, x = np.mgrid[0:side, 0:side].astype(np.float64)
    channels = []
    for _ in range(3):
        theta = rng.uniform(0.0, 2.0 * np.pi)
        proj = np.cos(theta) * x + np.sin(theta) * y
        lo, hi = proj.min(), proj.max()
        channels.append((proj - lo) / (hi - lo) if hi > lo else np.zeros_like(proj))
    return np.stack(channels, axis=2)


def _checker_image(rng: np.random.Generator, side: int) -> np.ndarray:
    """Random-period checkerboard with two random tones per channel."""
    period = int(rng.choice([side // 28, side // 14, side // 8, side // 4]))
    period = max(period, 1)
    y, x = np.mgrid[0:side, 0:side]
    cell = ((x // period) + (y // period)) % 2
    tones = rng.uniform(0.0, 1.0, size=(2, 3))
    return tones[cell.astype(np.intp)]


def _blobs_image(rng: np.random.Generator, side: int) -> np.ndarray:
    """Sum of 3-8 Gaussian bumps, min-max normalized per channel."""
    n_blobs = int(rng.integers(3, 9))
    y, x = np.mgrid[0:side, 0:side].astype(np.float64)
    acc = np.zeros((side, side, 3), dtype=np.float64)
    for _ in range(n_blobs):
        cx, cy = rng.uniform(0, side, size=2)
        sigma = rng.uniform(side / 16.0, side / 4.0)
        amp = rng.uniform(0.3, 1.0, size=3)
        bump = np.exp(-((x - cx) ** 2 + (y - cy) ** 2) / (2.0 * sigma * sigma))
        acc += bump[:, :, None] * amp[None, None, :]
    out = np.empty_like(acc)
    for c in range(3):
        lo, hi = acc[:, :, c].min(), acc[:, :, c].max()
        out[:, :, c] = (acc[:, :, c] - lo) / (hi - lo) if hi > lo else 0.0
    return out


_MAKERS = {"gradient": _gradient_image, "checker": _checker_image, "blobs": _blobs_image}


def synth_corpus(spec: CorpusSpec) -> list[np.ndarray]:
    """Deterministic list of images for the spec (one shared seeded RNG)."""
    if spec.kind == "directory":
        return [img for _, img in load_directory(spec.path, spec.grid)]
    rng = np.random.default_rng(spec.seed)
    maker = _MAKERS[spec.kind]
    return [maker(rng, spec.grid.image_side) for _ in range(spec.count)]


def corpus_ids(spec: CorpusSpec) -> list[str]:
    if spec.kind == "directory":
        return [name for name, _ in load_directory(spec.path, spec.grid)]
    return [f"{spec.kind}-{i:03d}" for i in range(spec.count)]


def load_directory(path: str, grid: GridSpec) -> list[tuple[str, np.ndarray]]:
    """All PNG/JPEG files under path, sorted by name, resized to the grid."""
    names = sorted(
        f for f in os.listdir(path) if f.lower().endswith((".png", ".jpg", ".jpeg"))
    )
    if not names:
        raise ValueError(f"no PNG/JPEG images found in {path}")
    return [(name, load_and_resize(os.path.join(path, name), grid)) for name in names]


def _sort_rows(rows: list[CurveRow]) -> list[CurveRow]:
    return sorted(
        rows,
        key=lambda r: (r.image_id, r.method, r.budget_ratio, -1 if r.seed is None else r.seed),
    )


def _select_trace(
    method: str,
    oracle: OracleInterface,
    patches: np.ndarray,
    budget: Budget,
    init: InitPolicy,
    threads: int,
) -> SelectionTrace:
    run = lazy_greedy if method == "kpp_lazy" else kpp_greedy
    return run(oracle, patches, budget, init, threads=threads)


def evaluate_image(
    image_id: str,
    image: np.ndarray,
    grid: GridSpec,
    oracle: OracleInterface,
    budgets: Sequence[float],
    random_seeds: Sequence[int],
    init: InitPolicy,
    methods: Sequence[str] = ("kpp", "random"),
    threads: int = 1,
) -> list[CurveRow]:
    """Rows for one image: greedy methods reuse a single full-budget trace,
    truncated per budget; random draws one set per (budget, seed)."""
    if not budgets or any(not 0.0 < b <= 1.0 for b in budgets):
        raise ValueError(f"budgets must be nonempty and within (0, 1], got {budgets}")
    patches = split(image, grid)
    n = grid.n_patches
    resolved = {r: resolve_budget(r, n) for r in budgets}
    max_budget = max(resolved.values(), key=lambda b: b.n_keep)
    rows: list[CurveRow] = []
    for method in methods:
        if method in ("kpp", "kpp_lazy"):
            trace = _select_trace(method, oracle, patches, max_budget, init, threads)
            for r, budget in resolved.items():
                rows.append(
                    CurveRow(
                        image_id=image_id,
                        method=method,
                        oracle_id=oracle.oracle_id,
                        init_policy=init.label,
                        budget_ratio=r,
                        n_keep=budget.n_keep,
                        seed=None,
                        masked_mse=trace.prefix_loss(budget.n_keep),
                    )
                )
        elif method == "random":
            for r, budget in resolved.items():
                for seed in random_seeds:
                    subset = random_select(n, budget, seed, init)
                    loss = oracle_masked_mse(oracle, patches, subset)
                    rows.append(
                        CurveRow(
                            image_id=image_id,
                            method="random",
                            oracle_id=oracle.oracle_id,
                            init_policy=init.label,
                            budget_ratio=r,
                            n_keep=budget.n_keep,
                            seed=seed,
                            masked_mse=loss,
                        )
                    )
        else:
            raise ValueError(f"unknown method {method!r}")
    return _sort_rows(rows)


def evaluate_curves(
    images: Sequence[np.ndarray],
    grid: GridSpec,
    oracle: OracleInterface,
    budgets: Sequence[float] = DEFAULT_BUDGETS,
    random_seeds: Sequence[int] = DEFAULT_RANDOM_SEEDS,
    init: InitPolicy = InitPolicy.central(),
    image_ids: Sequence[str] | None = None,
    methods: Sequence[str] = ("kpp", "random"),
    threads: int = 1,
) -> list[CurveRow]:
    """Greedy-vs-random loss rows for a whole corpus, deterministically
    ordered by (image_id, method, budget, seed)."""
    ids = list(image_ids) if image_ids is not None else [f"img-{i:03d}" for i in range(len(images))]
    if len(ids) != len(images):
        raise ValueError("image_ids and images disagree on length")
    rows: list[CurveRow] = []
    for image_id, image in zip(ids, images):
        rows.extend(
            evaluate_image(image_id, image, grid, oracle, budgets, random_seeds, init, methods, threads)
        )
    return _sort_rows(rows)


def ablate_init(
    images: Sequence[np.ndarray],
    grid: GridSpec,
    oracle: OracleInterface,
    budgets: Sequence[float] = DEFAULT_BUDGETS,
    image_ids: Sequence[str] | None = None,
    threads: int = 1,
) -> list[CurveRow]:
    """Greedy rows for both init arms (central vs none), distinguished by the
    init_policy column."""
    rows: list[CurveRow] = []
    for init in (InitPolicy.central(), InitPolicy.none()):
        rows.extend(
            evaluate_curves(
                images,
                grid,
                oracle,
                budgets=budgets,
                random_seeds=(),
                init=init,
                image_ids=image_ids,
                methods=("kpp",),
                threads=threads,
            )
        )
    return _sort_rows(rows)


def mean_losses(rows: Sequence[CurveRow]) -> dict[tuple[str, str, float], float]:
    """Mean masked MSE keyed by (method, init_policy, budget_ratio)."""
    sums: dict[tuple[str, str, float], list[float]] = {}
    for r in rows:
        sums.setdefault((r.method, r.init_policy, r.budget_ratio), []).append(r.masked_mse)
    return {k: float(np.mean(v)) for k, v in sums.items()}


def ablation_summary(rows: Sequence[CurveRow], low_budget: float = 0.1) -> str:
    """One-line comparison of the two init arms at budgets below low_budget.

    Recorded, not asserted: which arm wins at low budgets depends on the
    oracle.
    """
    means = mean_losses(rows)
    lows = sorted({r.budget_ratio for r in rows if r.budget_ratio < low_budget})
    if not lows:
        return "ablation: no budgets below the low-budget threshold"
    central = float(np.mean([means[("kpp", "central", b)] for b in lows]))
    none = float(np.mean([means[("kpp", "none", b)] for b in lows]))
    better = "none" if none < central else "central"
    return (
        f"ablation@budgets<{low_budget:g}: mean masked_mse central={central:.6g} "
        f"none={none:.6g} (lower: {better})"
    )


def _format_ratio(value: float) -> str:
    return f"{value:g}"


def rows_to_csv_lines(rows: Sequence[CurveRow]) -> list[str]:
    lines = [CSV_VERSION_LINE, CSV_HEADER]
    for r in rows:
        seed = "" if r.seed is None else str(r.seed)
        lines.append(
            f"{r.image_id},{r.method},{r.oracle_id},{r.init_policy},"
            f"{_format_ratio(r.budget_ratio)},{r.n_keep},{seed},{r.masked_mse!r}"
        )
    return lines


def write_csv(rows: Sequence[CurveRow], path: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(rows_to_csv_lines(rows)) + "\n")


def read_csv(path: str) -> list[CurveRow]:
    rows: list[CurveRow] = []
    with open(path, "r", encoding="utf-8") as fh:
        lines = [ln.rstrip("\n") for ln in fh]
    if not lines or lines[0] != CSV_VERSION_LINE:
        raise ValueError(f"{path}: missing {CSV_VERSION_LINE} header")
    for ln in lines[2:]:
        if not ln:
            continue
        image_id, method, oracle_id, init_policy, ratio, n_keep, seed, loss = ln.split(",")
        rows.append(
            CurveRow(
                image_id=image_id,
                method=method,
                oracle_id=oracle_id,
                init_policy=init_policy,
                budget_ratio=float(ratio),
                n_keep=int(n_keep),
                seed=None if seed == "" else int(seed),
                masked_mse=float(loss),
            )
        )
    return rows


_SVG_COLORS = {"kpp": "#1f77b4", "kpp_lazy": "#2ca02c", "random": "#d62728"}


def render_curves_svg(rows: Sequence[CurveRow], path: str) -> None:
    """Self-contained SVG of mean masked MSE per method across budgets.

    Deterministic bytes for identical input rows.
    """
    if not rows:
        raise ValueError("no rows to plot")
    means = mean_losses(rows)
    methods = sorted({m for m, _, _ in means})
    budgets = sorted({b for _, _, b in means})
    per_method: dict[str, list[tuple[float, float]]] = {}
    for method in methods:
        pts = []
        for b in budgets:
            vals = [v for (m, _i, br), v in means.items() if m == method and br == b]
            if vals:
                pts.append((b, float(np.mean(vals))))
        per_method[method] = pts

    width, height, margin = 640, 420, 56
    x_lo, x_hi = min(budgets), max(budgets)
    x_span = (x_hi - x_lo) or 1.0
    y_hi = max(v for pts in per_method.values() for _, v in pts) or 1.0

    def sx(b: float) -> float:
        return margin + (b - x_lo) / x_span * (width - 2 * margin)

    def sy(v: float) -> float:
        return height - margin - v / y_hi * (height - 2 * margin)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<line x1="{margin}" y1="{height - margin}" x2="{width - margin}" '
        f'y2="{height - margin}" stroke="black"/>',
        f'<line x1="{margin}" y1="{margin}" x2="{margin}" y2="{height - margin}" stroke="black"/>',
        f'<text x="{width // 2}" y="{height - 12}" text-anchor="middle" '
        f'font-family="sans-serif" font-size="13">budget ratio</text>',
        f'<text x="16" y="{height // 2}" text-anchor="middle" font-family="sans-serif" '
        f'font-size="13" transform="rotate(-90 16 {height // 2})">masked MSE</text>',
    ]
    for b in budgets:
        parts.append(
            f'<text x="{sx(b):.2f}" y="{height - margin + 18}" text-anchor="middle" '
            f'font-family="sans-serif" font-size="11">{_format_ratio(b)}</text>'
        )
    parts.append(
        f'<text x="{margin - 6}" y="{margin + 4}" text-anchor="end" font-family="sans-serif" '
        f'font-size="11">{y_hi:.4g}</text>'
    )
    parts.append(
        f'<text x="{margin - 6}" y="{height - margin + 4}" text-anchor="end" '
        f'font-family="sans-serif" font-size="11">0</text>'
    )
    for idx, method in enumerate(methods):
        pts = per_method[method]
        color = _SVG_COLORS.get(method, "#7f7f7f")
        if len(pts) > 1:
            coords = " ".join(f"{sx(b):.2f},{sy(v):.2f}" for b, v in pts)
            parts.append(f'<polyline points="{coords}" fill="none" stroke="{color}" stroke-width="2"/>')
        for b, v in pts:
            parts.append(f'<circle cx="{sx(b):.2f}" cy="{sy(v):.2f}" r="3" fill="{color}"/>')
        parts.append(
            f'<text x="{width - margin + 4}" y="{margin + 16 * idx}" font-family="sans-serif" '
            f'font-size="12" fill="{color}">{method}</text>'
        )
    parts.append("</svg>")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(parts) + "\n")
