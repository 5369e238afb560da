"""Empirical verification of diminishing returns, monotonicity, and the
greedy approximation ratio for set functions over small ground sets.

Subsets are bitmask integers over a ground set {0, ..., n-1}. Exhaustive
checks enumerate every triple (X ⊆ Y, x ∉ Y); sampled checks draw random
triples. Nothing here assumes the property holds: the checks measure it.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Iterator, Sequence

import numpy as np

from .oracle import NO_INFO_FULL_MSE, OracleInterface, PatchSet, oracle_full_mse

EXHAUSTIVE_MAX_N = 12
BRUTE_FORCE_MAX_N = 20
GREEDY_RATIO_THRESHOLD = 1.0 - 1.0 / np.e


class Orientation(Enum):
    GAIN = "gain"  # larger is better; maximization checks apply
    COST = "cost"  # smaller is better


@dataclass(frozen=True)
class SetFunction:
    """An evaluatable set function over a ground set of size n.

    evaluate takes a subset bitmask (bit i set means element i is in the
    subset) and must be deterministic over all 2^n masks.
    """

    n: int
    evaluate: Callable[[int], float]
    orientation: Orientation
    name: str = ""

    def full_mask(self) -> int:
        return (1 << self.n) - 1

    def value_table(self) -> np.ndarray:
        """All 2^n values, indexed by mask. Guarded against large n."""
        if self.n > BRUTE_FORCE_MAX_N:
            raise ValueError(f"ground set of {self.n} too large to tabulate")
        return np.array([self.evaluate(m) for m in range(1 << self.n)], dtype=np.float64)


def mask_of(indices) -> int:
    mask = 0
    for i in indices:
        mask |= 1 << int(i)
    return mask


def indices_of(mask: int) -> tuple[int, ...]:
    out = []
    i = 0
    while mask:
        if mask & 1:
            out.append(i)
        mask >>= 1
        i += 1
    return tuple(out)


@dataclass(frozen=True)
class ViolationRecord:
    """A diminishing-returns violation: adding x helps the superset Y more
    than the subset X by `deficit`."""

    x_subset: tuple[int, ...]
    y_subset: tuple[int, ...]
    element: int
    lhs: float
    rhs: float

    @property
    def deficit(self) -> float:
        return self.rhs - self.lhs


@dataclass(frozen=True)
class MonotoneViolation:
    subset: tuple[int, ...]
    element: int
    before: float
    after: float

    @property
    def drop(self) -> float:
        return self.before - self.after


@dataclass(frozen=True)
class BoundReport:
    greedy_subset: tuple[int, ...]
    greedy_value: float
    optimum_subset: tuple[int, ...]
    optimum_value: float
    threshold: float = GREEDY_RATIO_THRESHOLD

    @property
    def ratio(self) -> float:
        if self.optimum_value == 0:
            return 1.0
        return self.greedy_value / self.optimum_value


def iter_dr_triples(n: int) -> Iterator[tuple[int, int, int]]:
    """Every (X, Y, x) with X ⊆ Y and x ∉ Y, each exactly once.

    Deterministic order: X ascending, then Y by submask enumeration of the
    complement, then x ascending.
    """
    full = (1 << n) - 1
    for x_mask in range(1 << n):
        comp = full ^ x_mask
        s = comp
        while True:
            y_mask = x_mask | s
            outside = full ^ y_mask
            elem = outside
            i = 0
            while elem:
                if elem & 1:
                    yield x_mask, y_mask, i
                elem >>= 1
                i += 1
            if s == 0:
                break
            s = (s - 1) & comp

def _sample_dr_triple(rng: np.random.Generator, n: int) -> tuple[int, int, int]:
    x = int(rng.integers(n))
    y_mask = 0
    for i in range(n):
        if i != x and rng.integers(2):
            y_mask |= 1 << i
    x_mask = 0
    m = y_mask
    while m:
        bit = m & -m
        if rng.integers(2):
            x_mask |= bit
        m ^= bit
    return x_mask, y_mask, x


def check_diminishing_returns(
    f: SetFunction,
    mode: str = "exhaustive",
    tolerance: float = 1e-9,
    trials: int = 1000,
    seed: int = 0,
) -> list[ViolationRecord]:
    """Record every triple (X ⊆ Y, x ∉ Y) whose superset marginal exceeds the
    subset marginal by more than `tolerance`.

    mode "exhaustive" enumerates all triples (n ≤ 12); mode "sampled" draws
    `trials` random triples with the given seed.
    """
    violations: list[ViolationRecord] = []
    if mode == "exhaustive":
        if f.n > EXHAUSTIVE_MAX_N:
            raise ValueError(f"exhaustive check capped at n={EXHAUSTIVE_MAX_N}, got {f.n}")
        vals = f.value_table()
        for x_mask, y_mask, x in iter_dr_triples(f.n):
            bit = 1 << x
            lhs = vals[x_mask | bit] - vals[x_mask]
            rhs = vals[y_mask | bit] - vals[y_mask]
            if rhs - lhs > tolerance:
                violations.append(
                    ViolationRecord(
                        x_subset=indices_of(x_mask),
                        y_subset=indices_of(y_mask),
                        element=x,
                        lhs=float(lhs),
                        rhs=float(rhs),
                    )
                )
    elif mode == "sampled":
        if trials < 1:
            raise ValueError("sampled check needs at least one trial")
        rng = np.random.default_rng(seed)
        for _ in range(trials):
            x_mask, y_mask, x = _sample_dr_triple(rng, f.n)
            bit = 1 << x
            lhs = f.evaluate(x_mask | bit) - f.evaluate(x_mask)
            rhs = f.evaluate(y_mask | bit) - f.evaluate(y_mask)
            if rhs - lhs > tolerance:
                violations.append(
                    ViolationRecord(
                        x_subset=indices_of(x_mask),
                        y_subset=indices_of(y_mask),
                        element=x,
                        lhs=float(lhs),
                        rhs=float(rhs),
                    )
                )
    else:
        raise ValueError(f"unknown check mode {mode!r}")
    violations.sort(key=lambda v: (v.x_subset, v.y_subset, v.element))
    return violations


def check_monotone(
    f: SetFunction,
    mode: str = "exhaustive",
    tolerance: float = 1e-9,
    trials: int = 1000,
    seed: int = 0,
) -> list[MonotoneViolation]:
    """Record every pair (X, x ∉ X) where adding x DECREASES the value by
    more than `tolerance`."""
    violations: list[MonotoneViolation] = []

    def probe(x_mask: int, x: int) -> None:
        before = f.evaluate(x_mask)
        after = f.evaluate(x_mask | (1 << x))
        if after < before - tolerance:
            violations.append(
                MonotoneViolation(
                    subset=indices_of(x_mask), element=x, before=float(before), after=float(after)
                )
            )

    if mode == "exhaustive":
        if f.n > EXHAUSTIVE_MAX_N:
            raise ValueError(f"exhaustive check capped at n={EXHAUSTIVE_MAX_N}, got {f.n}")
        for x_mask in range(1 << f.n):
            for x in range(f.n):
                if not x_mask & (1 << x):
                    probe(x_mask, x)
    elif mode == "sampled":
        if trials < 1:
            raise ValueError("sampled check needs at least one trial")
        rng = np.random.default_rng(seed)
        for _ in range(trials):
            x = int(rng.integers(f.n))
            x_mask = 0
            for i in range(f.n):
                if i != x and rng.integers(2):
                    x_mask |= 1 << i
            probe(x_mask, x)
    else:
        raise ValueError(f"unknown check mode {mode!r}")
    violations.sort(key=lambda v: (v.subset, v.element))
    return violations


def greedy_maximize(f: SetFunction, k: int) -> tuple[tuple[int, ...], float]:
    """Cardinality-constrained greedy maximization; ties to the lowest
    element. Returns the selection in acquisition order and its value."""
    if f.orientation is not Orientation.GAIN:
        raise ValueError("greedy_maximize needs a GAIN-oriented set function")
    if not 1 <= k <= f.n:
        raise ValueError(f"cardinality {k} out of range [1, {f.n}]")
    chosen: list[int] = []
    mask = 0
    value = None
    for _ in range(k):
        best_x, best_v = None, None
        for x in range(f.n):
            bit = 1 << x
            if mask & bit:
                continue
            v = f.evaluate(mask | bit)
            if best_v is None or v > best_v:
                best_x, best_v = x, v
        chosen.append(best_x)
        mask |= 1 << best_x
        value = best_v
    return tuple(chosen), float(value)


def brute_force_optimum(f: SetFunction, k: int) -> tuple[tuple[int, ...], float]:
    """Exact optimum over all subsets of size k by enumeration; ties to the
    lexicographically smallest subset. Independent oracle for greedy tests."""
    if f.n > BRUTE_FORCE_MAX_N:
        raise ValueError(f"brute force capped at n={BRUTE_FORCE_MAX_N}, got {f.n}")
    if not 1 <= k <= f.n:
        raise ValueError(f"cardinality {k} out of range [1, {f.n}]")
    best_subset, best_v = None, None
    for combo in itertools.combinations(range(f.n), k):
        v = f.evaluate(mask_of(combo))
        if best_v is None or v > best_v:
            best_subset, best_v = combo, v
    return best_subset, float(best_v)


def bound_ratio(f: SetFunction, k: int) -> BoundReport:
    """Greedy value over brute-force optimum, with the 1 - 1/e threshold.

    Meaningful when f passes the monotone and diminishing-returns checks;
    a zero optimum defines the ratio as 1.
    """
    greedy_subset, greedy_value = greedy_maximize(f, k)
    optimum_subset, optimum_value = brute_force_optimum(f, k)
    return BoundReport(
        greedy_subset=greedy_subset,
        greedy_value=greedy_value,
        optimum_subset=optimum_subset,
        optimum_value=optimum_value,
    )


def make_coverage_function(sets: Sequence[Sequence]) -> SetFunction:
    """Coverage: value of a subset is the size of the union of its members'
    covered elements. Monotone submodular by construction."""
    if not sets:
        raise ValueError("coverage function needs at least one set")
    covered = [frozenset(s) for s in sets]

    def evaluate(mask: int) -> float:
        union: set = set()
        i = 0
        m = mask
        while m:
            if m & 1:
                union |= covered[i]
            m >>= 1
            i += 1
        return float(len(union))

    return SetFunction(n=len(covered), evaluate=evaluate, orientation=Orientation.GAIN, name="coverage")


def make_modular(weights: Sequence[float]) -> SetFunction:
    """Modular: value of a subset is the sum of its members' weights."""
    if len(weights) == 0:
        raise ValueError("modular function needs at least one weight")
    w = [float(x) for x in weights]

    def evaluate(mask: int) -> float:
        total = 0.0
        i = 0
        m = mask
        while m:
            if m & 1:
                total += w[i]
            m >>= 1
            i += 1
        return total

    return SetFunction(n=len(w), evaluate=evaluate, orientation=Orientation.GAIN, name="modular")


def make_supermodular_square(n: int = 6) -> SetFunction:
    """f(S) = |S|^2: strictly supermodular, so the diminishing-returns check
    must flag it."""
    if n < 1:
        raise ValueError("ground set must be nonempty")

    def evaluate(mask: int) -> float:
        return float(bin(mask).count("1") ** 2)

    return SetFunction(n=n, evaluate=evaluate, orientation=Orientation.GAIN, name="square")


def gain_from_image(oracle: OracleInterface, patches: np.ndarray) -> SetFunction:
    """Reconstruction gain of a visible set: the worst-case error anchor
    minus the full-image MSE after reconstructing from the set.

    The empty set evaluates to 0 by construction and never touches the
    oracle. Values are memoized, so exhaustive checks evaluate the oracle
    once per subset.
    """
    n = patches.shape[0]
    baseline = NO_INFO_FULL_MSE
    memo: dict[int, float] = {0: 0.0}

    def evaluate(mask: int) -> float:
        hit = memo.get(mask)
        if hit is not None:
            return hit
        subset = PatchSet.from_indices(n, indices_of(mask))
        value = baseline - oracle_full_mse(oracle, patches, subset)
        memo[mask] = value
        return value

    return SetFunction(
        n=n, evaluate=evaluate, orientation=Orientation.GAIN, name=f"gain[{oracle.oracle_id}]"
    )


def violations_to_csv(violations: Sequence[ViolationRecord], path: str) -> None:
    """CSV dump: X and Y as semicolon-joined indices, then x, lhs, rhs, deficit."""
    lines = ["x_subset,y_subset,element,lhs,rhs,deficit"]
    for v in violations:
        xs = ";".join(str(i) for i in v.x_subset)
        ys = ";".join(str(i) for i in v.y_subset)
        lines.append(f"{xs},{ys},{v.element},{v.lhs!r},{v.rhs!r},{v.deficit!r}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def bound_reports_to_csv(reports: Sequence[BoundReport], path: str) -> None:
    """CSV dump of greedy-vs-optimum reports, one row per instance."""
    lines = ["greedy_subset,greedy_value,optimum_subset,optimum_value,ratio,threshold"]
    for r in reports:
        gs = ";".join(str(i) for i in r.greedy_subset)
        os_ = ";".join(str(i) for i in r.optimum_subset)
        lines.append(
            f"{gs},{r.greedy_value!r},{os_},{r.optimum_value!r},{r.ratio!r},{r.threshold!r}"
        )
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
