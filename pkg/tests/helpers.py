"""Shared test helpers: independent reference implementations and fixture
oracles. Reference code favors plain loops over the library's vectorized
paths so the two sides stay independent."""

from __future__ import annotations

import math

import numpy as np

from kpp.oracle import PatchSet, Reconstruction


def ref_masked_mse(recon_image: np.ndarray, truth_patches: np.ndarray, unmasked) -> float:
    """Masked MSE recomputed from the reconstructed image with plain loops."""
    n, p, _, c = truth_patches.shape
    g = int(math.isqrt(n))
    total, count = 0.0, 0
    for idx in range(n):
        if idx in unmasked:
            continue
        r0, c0 = (idx // g) * p, (idx % g) * p
        for i in range(p):
            for j in range(p):
                for ch in range(c):
                    d = recon_image[r0 + i, c0 + j, ch] - truth_patches[idx, i, j, ch]
                    total += d * d
                    count += 1
    return total / count if count else 0.0


def ref_full_mse(recon_image: np.ndarray, truth_image: np.ndarray) -> float:
    total = 0.0
    h, w, c = truth_image.shape
    for i in range(h):
        for j in range(w):
            for ch in range(c):
                d = recon_image[i, j, ch] - truth_image[i, j, ch]
                total += d * d
    return total / (h * w * c)


def ref_idw_prediction(truth_patches: np.ndarray, visible: list[int], target: int, alpha: float) -> np.ndarray:
    """Reference IDW prediction for one masked patch, plain accumulation."""
    n = truth_patches.shape[0]
    g = int(math.isqrt(n))
    acc = np.zeros_like(truth_patches[0])
    wsum = 0.0
    for u in visible:
        d = math.sqrt((target // g - u // g) ** 2 + (target % g - u % g) ** 2)
        w = d ** (-alpha)
        acc = acc + w * truth_patches[u]
        wsum += w
    return acc / wsum


def exhaustive_greedy_sequence(oracle, patches: np.ndarray, n_keep: int, start: list[int]) -> list[int]:
    """Independent per-step exhaustive argmin over masked-MSE, ties by index.

    Uses only oracle.reconstruct plus a locally-coded loss, never the
    selector's sweep machinery.
    """
    n = patches.shape[0]
    chosen = list(start)
    while len(chosen) < n_keep:
        best, best_loss = None, None
        for cand in range(n):
            if cand in chosen:
                continue
            trial = PatchSet.from_indices(n, chosen + [cand])
            recon = oracle.reconstruct(patches, trial)
            masked = [p for p in range(n) if p not in trial]
            if recon.image is None:
                loss = (
                    float(np.mean([recon.per_patch_sq_err[p] for p in masked])) if masked else 0.0
                )
            else:
                loss = ref_masked_mse(recon.image, patches, trial)
            if best_loss is None or loss < best_loss:
                best, best_loss = cand, loss
        chosen.append(best)
    return chosen


class ProbCoverageOracle:
    """Fixture oracle whose induced gain (worst-case anchor minus full MSE)
    is an exact probabilistic-coverage function, hence monotone submodular.

    Visible patch u "explains" patch p with weight w[p, u]; the residual
    per-patch error is the product of the unexplained fractions. A patch
    fully explains itself, so visible patches read back error 0.
    """

    pass_through = True

    def __init__(self, weights: np.ndarray, label: str = "probcov"):
        self.w = np.asarray(weights, dtype=np.float64)
        np.fill_diagonal(self.w, 1.0)
        self.oracle_id = label

    def reconstruct(self, patches: np.ndarray, unmasked: PatchSet) -> Reconstruction:
        if len(unmasked) == 0:
            raise ValueError("needs at least one unmasked patch")
        err = np.ones(patches.shape[0])
        for u in unmasked.indices:
            err = err * (1.0 - self.w[:, u])
        return Reconstruction(image=None, per_patch_sq_err=err)


def make_prob_coverage(n: int, seed: int) -> ProbCoverageOracle:
    rng = np.random.default_rng(seed)
    strength = rng.uniform(0.02, 0.95, size=n) ** 2
    affinity = rng.uniform(0.1, 1.0, size=(n, n))
    return ProbCoverageOracle(strength[None, :] * affinity, label=f"probcov-{seed}")


def constant_image(side: int, value: float) -> np.ndarray:
    return np.full((side, side, 3), value, dtype=np.float64)


def random_image(side: int, seed: int) -> np.ndarray:
    return np.random.default_rng(seed).uniform(0.0, 1.0, (side, side, 3))


def constant_patch_image(values, patch_side: int = 2) -> np.ndarray:
    """3x3-grid image whose patch p is constant with values[p]."""
    g = 3
    side = g * patch_side
    img = np.zeros((side, side, 3), dtype=np.float64)
    for p in range(9):
        r0, c0 = (p // g) * patch_side, (p % g) * patch_side
        img[r0 : r0 + patch_side, c0 : c0 + patch_side, :] = values[p]
    return img
