"""Budgeted greedy patch selection and its lazy variant.

The core loop starts from an initial set chosen by policy, then repeatedly
adds the candidate patch whose inclusion minimizes the masked
reconstruction error, breaking exact-loss ties by lowest linear index,
until the budget is reached. The lazy variant keeps stale marginal-gain
upper bounds in a max-heap and re-evaluates only the current top; it
matches the plain loop whenever the underlying gain has diminishing
returns.
"""

from __future__ import annotations

import heapq
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import KppError, OracleError
from .oracle import (
    OracleInterface,
    PatchSet,
    NO_INFO_FULL_MSE,
    full_mse,
    masked_mse,
)
from .patch_grid import GridSpec, central_index, spec_for_patches

# Grids at or below this many patches always sweep through plain
# per-candidate oracle calls, so exhaustive cross-checks see bit-identical
# arithmetic; larger grids use the oracle's vectorized sweep when it has one.
SCALAR_SWEEP_MAX = 16


@dataclass(frozen=True)
class InitPolicy:
    """How the selection is seeded: the central patch, nothing, or an
    explicit index. The seeded patch counts toward the budget."""

    kind: str
    index: int | None = None

    _KINDS = ("central", "none", "explicit")

    def __post_init__(self) -> None:
        if self.kind not in self._KINDS:
            raise ValueError(f"unknown init policy {self.kind!r}")
        if self.kind == "explicit" and (self.index is None or self.index < 0):
            raise ValueError("explicit init policy needs a nonnegative patch index")
        if self.kind != "explicit" and self.index is not None:
            raise ValueError(f"init policy {self.kind!r} takes no index")

    @classmethod
    def central(cls) -> "InitPolicy":
        return cls("central")

    @classmethod
    def none(cls) -> "InitPolicy":
        return cls("none")

    @classmethod
    def explicit(cls, index: int) -> "InitPolicy":
        return cls("explicit", int(index))

    @classmethod
    def parse(cls, text: str) -> "InitPolicy":
        text = text.strip().lower()
        if text == "central":
            return cls.central()
        if text == "none":
            return cls.none()
        try:
            return cls.explicit(int(text))
        except ValueError:
            raise ValueError(f"init policy must be 'central', 'none', or an index, got {text!r}")

    @property
    def label(self) -> str:
        return f"explicit:{self.index}" if self.kind == "explicit" else self.kind

    def initial_index(self, spec: GridSpec) -> int | None:
        if self.kind == "none":
            return None
        if self.kind == "central":
            return central_index(spec)
        spec.check_index(self.index)
        return self.index


@dataclass(frozen=True)
class Budget:
    """A selection budget: the requested ratio and the resolved patch count."""

    ratio: float
    n_keep: int


def resolve_budget(r: float, n: int) -> Budget:
    """n_keep = max(1, floor(r*n)) for r in (0, 1].

    Products that land within 1e-9 of an integer snap to it first, so
    decimal ratios like 0.3 of 10 resolve to 3 rather than floor(2.999...).
    """
    if not 0.0 < r <= 1.0:
        raise ValueError(f"budget ratio must be in (0, 1], got {r}")
    if n < 1:
        raise ValueError(f"need at least one patch, got {n}")
    product = r * n
    nearest = round(product)
    keep = int(nearest) if abs(product - nearest) < 1e-9 else int(np.floor(product))
    return Budget(ratio=r, n_keep=max(1, min(keep, n)))


@dataclass(frozen=True)
class TraceStep:
    chosen: int
    loss_after: float
    candidates_evaluated: int


@dataclass(frozen=True)
class SelectionTrace:
    """Per-iteration record of the greedy run: chosen patch, masked MSE of
    the set after adding it, and how many candidates were evaluated."""

    steps: tuple[TraceStep, ...]
    selected: PatchSet
    init: InitPolicy
    oracle_id: str

    @property
    def chosen_sequence(self) -> tuple[int, ...]:
        return tuple(s.chosen for s in self.steps)

    @property
    def losses(self) -> tuple[float, ...]:
        return tuple(s.loss_after for s in self.steps)

    def total_evaluations(self) -> int:
        return sum(s.candidates_evaluated for s in self.steps)

    def prefix_set(self, n_keep: int) -> PatchSet:
        if not 1 <= n_keep <= len(self.steps):
            raise ValueError(f"prefix size {n_keep} outside trace of {len(self.steps)} steps")
        return PatchSet.from_indices(self.selected.n_patches, self.chosen_sequence[:n_keep])

    def prefix_loss(self, n_keep: int) -> float:
        if not 1 <= n_keep <= len(self.steps):
            raise ValueError(f"prefix size {n_keep} outside trace of {len(self.steps)} steps")
        return self.steps[n_keep - 1].loss_after


def _scalar_losses(
    oracle: OracleInterface,
    patches: np.ndarray,
    base: PatchSet,
    candidates: Sequence[int],
    threads: int,
) -> np.ndarray:
    def eval_one(c: int) -> float:
        trial = base.with_index(c)
        return masked_mse(oracle.reconstruct(patches, trial), patches, trial)

    # oracles may bound how many requests they accept in flight
    limit = getattr(oracle, "max_inflight", None)
    if limit:
        threads = min(threads, int(limit))
    if threads <= 1 or len(candidates) < 2:
        return np.array([eval_one(c) for c in candidates], dtype=np.float64)
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return np.array(list(pool.map(eval_one, candidates)), dtype=np.float64)


def _candidate_losses(
    oracle: OracleInterface,
    patches: np.ndarray,
    base: PatchSet,
    candidates: Sequence[int],
    threads: int,
) -> np.ndarray:
    sweep = getattr(oracle, "sweep_masked_mse", None)
    if sweep is not None and patches.shape[0] > SCALAR_SWEEP_MAX:
        return np.asarray(sweep(patches, base, np.asarray(candidates, dtype=np.intp)))
    return _scalar_losses(oracle, patches, base, candidates, threads)


def _seed_selection(
    oracle: OracleInterface,
    patches: np.ndarray,
    init: InitPolicy,
    steps: list[TraceStep],
) -> PatchSet:
    spec = spec_for_patches(patches)
    n = spec.n_patches
    first = init.initial_index(spec)
    if first is None:
        return PatchSet.empty(n)
    seeded = PatchSet.from_indices(n, [first])
    loss = masked_mse(oracle.reconstruct(patches, seeded), patches, seeded)
    steps.append(TraceStep(chosen=first, loss_after=loss, candidates_evaluated=0))
    return seeded


def _check_budget(budget: Budget, n: int) -> None:
    if not 1 <= budget.n_keep <= n:
        raise ValueError(f"budget n_keep={budget.n_keep} out of range for {n} patches")


def kpp_greedy(
    oracle: OracleInterface,
    patches: np.ndarray,
    budget: Budget,
    init: InitPolicy,
    threads: int = 1,
) -> SelectionTrace:
    """Greedy budgeted selection: at each step add the candidate minimizing
    the masked MSE of the enlarged visible set (ties to the lowest index)."""
    n = patches.shape[0]
    _check_budget(budget, n)
    steps: list[TraceStep] = []
    try:
        selected = _seed_selection(oracle, patches, init, steps)
        while len(selected) < budget.n_keep:
            candidates = [p for p in range(n) if p not in selected]
            losses = _candidate_losses(oracle, patches, selected, candidates, threads)
            best = int(np.argmin(losses))  # first minimum: lowest index wins ties
            selected = selected.with_index(candidates[best])
            steps.append(
                TraceStep(
                    chosen=candidates[best],
                    loss_after=float(losses[best]),
                    candidates_evaluated=len(candidates),
                )
            )
    except KppError:
        raise
    except Exception as exc:
        raise OracleError(f"oracle failed at selection step {len(steps) + 1}: {exc}") from exc
    return SelectionTrace(
        steps=tuple(steps), selected=selected, init=init, oracle_id=oracle.oracle_id
    )


def _masked_to_gain_f(loss: float, n: int, size: int) -> float:
    """Full-image MSE implied by a masked MSE under the pass-through identity."""
    return loss * (n - size) / n


def lazy_greedy(
    oracle: OracleInterface,
    patches: np.ndarray,
    budget: Budget,
    init: InitPolicy,
    threads: int = 1,
) -> SelectionTrace:
    """Lazy variant of kpp_greedy over the gain baseline − full-image MSE.

    A max-heap holds stale marginal-gain bounds; each step re-evaluates only
    the top entry and accepts it if it stays on top (ties to lowest index).
    Guaranteed to match kpp_greedy when the gain has diminishing returns.
    """
    n = patches.shape[0]
    _check_budget(budget, n)
    steps: list[TraceStep] = []
    pass_through = getattr(oracle, "pass_through", False)

    def eval_candidate(base: PatchSet, cand: int) -> tuple[float, float]:
        """(masked loss, full-image loss) of base ∪ {cand}."""
        if pass_through:
            loss = float(_candidate_losses(oracle, patches, base, [cand], threads)[0])
            return loss, _masked_to_gain_f(loss, n, len(base) + 1)
        trial = base.with_index(cand)
        recon = oracle.reconstruct(patches, trial)
        return masked_mse(recon, patches, trial), full_mse(recon, patches)

    try:
        selected = _seed_selection(oracle, patches, init, steps)
        if len(selected) >= budget.n_keep:
            return SelectionTrace(
                steps=tuple(steps), selected=selected, init=init, oracle_id=oracle.oracle_id
            )

        # first search step evaluates every candidate, exactly like the plain
        # loop, and seeds the heap with gains relative to the start set
        candidates = [p for p in range(n) if p not in selected]
        if pass_through:
            losses = _candidate_losses(oracle, patches, selected, candidates, threads)
            f_new = losses * (n - len(selected) - 1) / n
        else:
            pairs = [eval_candidate(selected, c) for c in candidates]
            losses = np.array([m for m, _ in pairs])
            f_new = np.array([f for _, f in pairs])
        if len(selected) == 0:
            f_base = NO_INFO_FULL_MSE
        elif pass_through:
            f_base = _masked_to_gain_f(steps[-1].loss_after, n, len(selected))
        else:
            recon = oracle.reconstruct(patches, selected)
            f_base = full_mse(recon, patches)

        best = int(np.argmin(losses))
        chosen = candidates[best]
        gains = f_base - f_new  # relative to the start set: valid stale bounds
        selected = selected.with_index(chosen)
        steps.append(
            TraceStep(
                chosen=chosen,
                loss_after=float(losses[best]),
                candidates_evaluated=len(candidates),
            )
        )
        step_no = len(steps)
        f_base = float(f_new[best])
        # heap of (-gain, index, step verified at); tuple ordering breaks
        # exact gain ties by lowest index, matching the plain loop's rule
        heap: list[tuple[float, int, int]] = [
            (-float(gains[j]), c, step_no) for j, c in enumerate(candidates) if c != chosen
        ]
        heapq.heapify(heap)

        while len(selected) < budget.n_keep:
            step_no = len(steps) + 1
            evaluated = 0
            fresh: dict[int, tuple[float, float]] = {}
            while True:
                neg_gain, cand, verified = heap[0]
                if verified == step_no:
                    break
                loss, f_trial = eval_candidate(selected, cand)
                fresh[cand] = (loss, f_trial)
                evaluated += 1
                heapq.heapreplace(heap, (-(f_base - f_trial), cand, step_no))
            _, cand, _ = heapq.heappop(heap)
            loss, f_accepted = fresh[cand]
            selected = selected.with_index(cand)
            steps.append(
                TraceStep(chosen=cand, loss_after=loss, candidates_evaluated=evaluated)
            )
            f_base = f_accepted
    except KppError:
        raise
    except Exception as exc:
        raise OracleError(f"oracle failed at selection step {len(steps) + 1}: {exc}") from exc
    return SelectionTrace(
        steps=tuple(steps), selected=selected, init=init, oracle_id=oracle.oracle_id
    )


def random_select(n: int, budget: Budget, seed: int, init: InitPolicy) -> PatchSet:
    """Uniform sample of n_keep distinct indices, deterministic per seed.

    If the init policy seeds a patch it is included first and the remaining
    n_keep - 1 indices are drawn from the rest.
    """
    _check_budget(budget, n)
    side = int(np.sqrt(n))
    spec = GridSpec(image_side=side, patch_side=1) if side * side == n else None
    if spec is None:
        raise ValueError(f"patch count {n} is not a square grid")
    first = init.initial_index(spec)
    rng = np.random.default_rng(seed)
    chosen: list[int] = []
    pool = np.arange(n)
    if first is not None:
        chosen.append(first)
        pool = pool[pool != first]
    extra = budget.n_keep - len(chosen)
    if extra > 0:
        chosen.extend(int(i) for i in rng.choice(pool, size=extra, replace=False))
    return PatchSet.from_indices(n, chosen)
