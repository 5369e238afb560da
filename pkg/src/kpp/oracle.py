"""Reconstruction oracles and the two reconstruction losses.

An oracle predicts a full image from the ground-truth patch array and the
set of unmasked (visible) patch indices. It must be deterministic and must
never read masked patch contents. Two losses are defined over a
reconstruction: the masked MSE (mean squared pixel error over masked
patches only) and the full-image MSE (over every pixel).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Protocol, runtime_checkable

import numpy as np

from .errors import GeometryError
from .patch_grid import assemble, spec_for_patches


@dataclass(frozen=True)
class PatchSet:
    """An ordered set of distinct patch indices over a ground set of n_patches.

    Order records insertion sequence (the greedy acquisition order);
    membership queries use a frozen set built once.
    """

    n_patches: int
    indices: tuple[int, ...]
    _members: frozenset = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        members = frozenset(self.indices)
        if len(members) != len(self.indices):
            raise ValueError(f"duplicate patch indices in {self.indices}")
        for i in self.indices:
            if not 0 <= i < self.n_patches:
                raise ValueError(f"patch index {i} out of range [0, {self.n_patches})")
        object.__setattr__(self, "_members", members)

    @classmethod
    def empty(cls, n_patches: int) -> "PatchSet":
        return cls(n_patches, ())

    @classmethod
    def from_indices(cls, n_patches: int, indices) -> "PatchSet":
        return cls(n_patches, tuple(int(i) for i in indices))

    def __len__(self) -> int:
        return len(self.indices)

    def __contains__(self, index: int) -> bool:
        return index in self._members

    def with_index(self, index: int) -> "PatchSet":
        return PatchSet(self.n_patches, self.indices + (int(index),))

    def bitmap(self) -> np.ndarray:
        mask = np.zeros(self.n_patches, dtype=bool)
        if self.indices:
            mask[list(self.indices)] = True
        return mask

    def masked_indices(self) -> np.ndarray:
        """Sorted indices NOT in the set (the masked patches)."""
        return np.flatnonzero(~self.bitmap())

    def sorted_indices(self) -> np.ndarray:
        return np.array(sorted(self.indices), dtype=np.intp)


@dataclass(frozen=True)
class Reconstruction:
    """A full predicted image plus per-patch mean squared errors.

    Remote oracles return only the errors; image is None in that case and
    the losses fall back to the per-patch means, which agree exactly for
    equal-sized patches.
    """

    image: np.ndarray | None
    per_patch_sq_err: np.ndarray


@runtime_checkable
class OracleInterface(Protocol):
    """Behavioral contract every reconstruction oracle satisfies."""

    oracle_id: str
    pass_through: bool

    def reconstruct(self, patches: np.ndarray, unmasked: PatchSet) -> Reconstruction: ...


def _check_unmasked(patches: np.ndarray, unmasked: PatchSet, what: str) -> None:
    if unmasked.n_patches != patches.shape[0]:
        raise GeometryError(
            f"patch set over {unmasked.n_patches} patches used with {patches.shape[0]} patches"
        )
    if len(unmasked) == 0:
        raise ValueError(f"{what} needs at least one unmasked patch")


def _per_patch_errors(
    predicted: np.ndarray, truth: np.ndarray, masked: np.ndarray
) -> np.ndarray:
    """Per-patch pixel-mean squared error; exactly 0 for pass-through patches."""
    err = np.zeros(truth.shape[0], dtype=np.float64)
    if masked.size:
        diff = predicted - truth[masked]
        err[masked] = (diff * diff).mean(axis=(1, 2, 3))
    return err


def reconstruct_mean_fill(patches: np.ndarray, unmasked: PatchSet) -> Reconstruction:
    """Predict every masked patch as the element-wise mean of the unmasked ones."""
    _check_unmasked(patches, unmasked, "mean-fill oracle")
    spec = spec_for_patches(patches)
    vis = unmasked.sorted_indices()
    masked = unmasked.masked_indices()
    prediction = patches[vis].mean(axis=0)
    out = patches.copy()
    out[masked] = prediction
    per_patch = _per_patch_errors(out[masked], patches, masked)
    return Reconstruction(image=assemble(out, spec), per_patch_sq_err=per_patch)


def _grid_coords(n_patches: int) -> np.ndarray:
    g = int(math.isqrt(n_patches))
    idx = np.arange(n_patches)
    return np.stack([idx // g, idx % g], axis=1).astype(np.float64)


def idw_weights(n_patches: int, alpha: float) -> np.ndarray:
    """Inverse-distance weight matrix over grid cells, zero on the diagonal."""
    coords = _grid_coords(n_patches)
    diff = coords[:, None, :] - coords[None, :, :]
    dist = np.sqrt((diff * diff).sum(axis=2))
    with np.errstate(divide="ignore"):
        w = dist ** (-alpha)
    np.fill_diagonal(w, 0.0)
    return w


def reconstruct_idw(
    patches: np.ndarray, unmasked: PatchSet, alpha: float = 2.0
) -> Reconstruction:
    """Predict each masked patch as the inverse-distance-weighted mean of the
    unmasked patch tensors, with weight d^(-alpha) over grid-cell distance."""
    if alpha <= 0:
        raise ValueError(f"idw alpha must be positive, got {alpha}")
    _check_unmasked(patches, unmasked, "idw oracle")
    spec = spec_for_patches(patches)
    n = patches.shape[0]
    vis = unmasked.sorted_indices()
    masked = unmasked.masked_indices()
    out = patches.copy()
    if masked.size:
        w = idw_weights(n, alpha)[np.ix_(masked, vis)]
        flat = patches.reshape(n, -1)
        pred = (w @ flat[vis]) / w.sum(axis=1)[:, None]
        out[masked] = pred.reshape((masked.size,) + patches.shape[1:])
    per_patch = _per_patch_errors(out[masked], patches, masked)
    return Reconstruction(image=assemble(out, spec), per_patch_sq_err=per_patch)


def masked_mse(recon: Reconstruction, truth: np.ndarray, unmasked: PatchSet) -> float:
    """Mean squared pixel error over masked patches only; 0 if none are masked."""
    if unmasked.n_patches != truth.shape[0]:
        raise GeometryError("patch set and truth disagree on patch count")
    masked = unmasked.masked_indices()
    if masked.size == 0:
        return 0.0
    if recon.image is None:
        return float(recon.per_patch_sq_err[masked].mean())
    spec = spec_for_patches(truth)
    pred = recon.image
    if pred.shape != (spec.image_side, spec.image_side, truth.shape[3]):
        raise GeometryError(f"reconstruction shape {pred.shape} does not match truth")
    from .patch_grid import split  # local import to avoid cycle at module load

    diff = split(pred, spec)[masked] - truth[masked]
    return float((diff * diff).mean())


def full_mse(recon: Reconstruction, truth: np.ndarray) -> float:
    """Mean squared pixel error over the whole image."""
    if recon.image is None:
        return float(recon.per_patch_sq_err.mean())
    spec = spec_for_patches(truth)
    diff = recon.image - assemble(truth, spec)
    return float((diff * diff).mean())


# Full-image MSE charged to the empty visible set: the supremum of the MSE
# between [0,1] images. Reconstructing from nothing pays the worst case, so
# gain functions anchored here assign the empty set gain 0 and every visible
# set a nonnegative gain.
NO_INFO_FULL_MSE = 1.0


def oracle_masked_mse(oracle: OracleInterface, patches: np.ndarray, unmasked: PatchSet) -> float:
    return masked_mse(oracle.reconstruct(patches, unmasked), patches, unmasked)


def oracle_full_mse(oracle: OracleInterface, patches: np.ndarray, unmasked: PatchSet) -> float:
    return full_mse(oracle.reconstruct(patches, unmasked), patches)


class _FlatCache:
    """Per-image precomputation shared by the vectorized candidate sweeps.

    Keyed by array identity (the entry keeps the keyed array alive, so its
    id stays valid). The whole entry is swapped with one reference
    assignment, which keeps concurrent readers consistent; racing threads
    at worst recompute identical values.
    """

    def __init__(self) -> None:
        self._entry: tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray] | None = None

    def get(self, patches: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        entry = self._entry
        if entry is None or entry[0] is not patches:
            flat = np.ascontiguousarray(patches.reshape(patches.shape[0], -1))
            entry = (patches, flat, (flat * flat).sum(axis=1), flat @ flat.T)
            self._entry = entry
        return entry[1], entry[2], entry[3]


class MeanFillOracle:
    """Deterministic pass-through oracle: masked patches get the mean of the
    visible ones. Stateless across calls apart from read-only caches."""

    pass_through = True

    def __init__(self) -> None:
        self.oracle_id = "meanfill"
        self._cache = _FlatCache()

    def reconstruct(self, patches: np.ndarray, unmasked: PatchSet) -> Reconstruction:
        return reconstruct_mean_fill(patches, unmasked)

    def sweep_masked_mse(
        self, patches: np.ndarray, base: PatchSet, candidates: np.ndarray
    ) -> np.ndarray:
        """Masked MSE of base ∪ {c} for every candidate c, vectorized.

        Agrees with the per-call reconstruct path to float rounding (the
        per-patch errors use a Gram expansion rather than explicit
        differences).
        """
        n, d = patches.shape[0], patches[0].size
        flat, sq_norm, _ = self._cache.get(patches)
        cand = np.asarray(candidates, dtype=np.intp)
        k = len(base)
        n_masked_after = n - k - 1
        if n_masked_after == 0:
            return np.zeros(len(cand), dtype=np.float64)
        base_idx = base.sorted_indices()
        base_sum = flat[base_idx].sum(axis=0) if k else np.zeros(d, dtype=np.float64)
        pred = (base_sum[None, :] + flat[cand]) / (k + 1)
        pred_sq = (pred * pred).sum(axis=1)
        cross = pred @ flat.T
        sq = np.maximum(pred_sq[:, None] - 2.0 * cross + sq_norm[None, :], 0.0) / d
        masked = base.masked_indices()
        col = sq[:, masked].sum(axis=1)
        col -= sq[np.arange(len(cand)), cand]  # candidate itself becomes visible
        return col / n_masked_after


class IdwOracle:
    """Deterministic pass-through oracle: masked patches get the
    inverse-distance-weighted mean of the visible patch tensors."""

    pass_through = True

    def __init__(self, alpha: float = 2.0) -> None:
        if alpha <= 0:
            raise ValueError(f"idw alpha must be positive, got {alpha}")
        self.alpha = float(alpha)
        self.oracle_id = f"idw(alpha={alpha:g})"
        self._cache = _FlatCache()
        self._weights: tuple[int, np.ndarray] | None = None

    def reconstruct(self, patches: np.ndarray, unmasked: PatchSet) -> Reconstruction:
        return reconstruct_idw(patches, unmasked, self.alpha)

    def _weight_matrix(self, n: int) -> np.ndarray:
        entry = self._weights
        if entry is None or entry[0] != n:
            entry = (n, idw_weights(n, self.alpha))
            self._weights = entry
        return entry[1]

    def sweep_masked_mse(
        self, patches: np.ndarray, base: PatchSet, candidates: np.ndarray
    ) -> np.ndarray:
        """Masked MSE of base ∪ {c} per candidate, via incremental update of
        the weighted numerator/denominator of the current visible set."""
        n, d = patches.shape[0], patches[0].size
        flat, sq_norm, gram = self._cache.get(patches)
        cand = np.asarray(candidates, dtype=np.intp)
        k = len(base)
        n_masked_after = n - k - 1
        if n_masked_after == 0:
            return np.zeros(len(cand), dtype=np.float64)
        w = self._weight_matrix(n)
        base_idx = base.sorted_indices()
        if k:
            num = w[:, base_idx] @ flat[base_idx]
            den = w[:, base_idx].sum(axis=1)
        else:
            num = np.zeros((n, d), dtype=np.float64)
            den = np.zeros(n, dtype=np.float64)
        masked = base.masked_indices()  # candidate rows AND error rows live here
        # row p = masked patch, col j = candidate cand[j]
        wpc = w[np.ix_(masked, cand)]
        den_new = den[masked, None] + wpc
        num_sq = (num * num).sum(axis=1)
        num_dot_truth = (num * flat).sum(axis=1)
        num_dot_cand = num @ flat[cand].T  # (n, n_cand) -> rows restricted below
        pred_sq = (
            num_sq[masked, None]
            + 2.0 * wpc * num_dot_cand[masked]
            + wpc * wpc * sq_norm[cand][None, :]
        )
        pred_dot_truth = num_dot_truth[masked, None] + wpc * gram[np.ix_(masked, cand)]
        with np.errstate(divide="ignore", invalid="ignore"):
            sq = (
                pred_sq / (den_new * den_new)
                - 2.0 * pred_dot_truth / den_new
                + sq_norm[masked, None]
            ) / d
        # entries where the error row IS the candidate are excluded from the
        # masked mean; they may hold inf/nan (zero base weight), so zero them
        cand_rows = np.searchsorted(masked, cand)
        sq[cand_rows, np.arange(len(cand))] = 0.0
        return np.maximum(sq, 0.0).sum(axis=0) / n_masked_after
