"""Reconstruction-loss engine: runs the model on an explicit visible set and
reports losses in un-normalized [0, 1] pixel space.

Ground-truth visible patches are pasted back before the full-image loss, so
per-patch errors are exactly 0 for visible patches and the full MSE equals
the masked MSE scaled by the masked fraction, as an algebraic identity.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass

import numpy as np
import torch

from .checkpoint import load_checkpoint
from .model import MaskedAutoencoderViT

IMAGENET_MEAN = np.array([0.485, 0.456, 0.406], dtype=np.float32)
IMAGENET_STD = np.array([0.229, 0.224, 0.225], dtype=np.float32)


@dataclass
class LossReport:
    masked_mse: float
    full_mse: float
    per_patch_mse: np.ndarray


class ReconstructionEngine:
    """Single-in-flight inference wrapper around a loaded checkpoint."""

    def __init__(self, model: MaskedAutoencoderViT, digest: str, device: str = "cpu"):
        self.model = model
        self.cfg = model.cfg
        self.device = device
        self.model_id = (
            f"mae-vit-p{self.cfg.patch_size}-d{self.cfg.embed_dim}x{self.cfg.depth}"
            f"-sha256:{digest[:12]}+paste-visible"
        )
        self._lock = threading.Lock()

    @classmethod
    def from_checkpoint(cls, path: str, device: str = "cpu") -> "ReconstructionEngine":
        model, digest = load_checkpoint(path, device)
        return cls(model, digest, device)

    def compute_losses(self, image: np.ndarray, unmasked: list[int]) -> LossReport:
        """Losses for one (image, visible set) pair.

        image: (H, W, C) float array in [0, 1]. The model consumes the
        ImageNet-normalized image; predictions are mapped back to pixel
        space before any loss.
        """
        cfg = self.cfg
        n = cfg.n_patches
        visible = sorted(int(i) for i in unmasked)
        if len(set(visible)) != len(visible):
            raise ValueError("unmasked indices must be distinct")
        if visible and not 0 <= visible[0] <= visible[-1] < n:
            raise ValueError(f"unmasked indices must lie in [0, {n})")
        if image.shape != (cfg.img_size, cfg.img_size, cfg.in_chans):
            raise ValueError(
                f"image shape {image.shape} does not match model geometry "
                f"({cfg.img_size}, {cfg.img_size}, {cfg.in_chans})"
            )

        pixels = image.astype(np.float32)
        normalized = (pixels - IMAGENET_MEAN) / IMAGENET_STD
        imgs = torch.from_numpy(normalized.transpose(2, 0, 1))[None].to(self.device)

        with self._lock, torch.no_grad():
            if visible:
                vis = torch.as_tensor(visible, dtype=torch.long, device=self.device)
                pred = self.model.forward_visible(imgs, vis)
            else:
                # nothing visible: the prediction is pure mask-token decoding;
                # run with an empty index tensor
                vis = torch.zeros(0, dtype=torch.long, device=self.device)
                pred = self.model.forward_visible(imgs, vis)
            truth = self.model.patchify(torch.from_numpy(pixels.transpose(2, 0, 1))[None])

        p, c = cfg.patch_size, cfg.in_chans
        pred_np = pred[0].cpu().numpy().reshape(n, p * p, c)
        pred_np = pred_np * IMAGENET_STD + IMAGENET_MEAN  # back to pixel space
        truth_np = truth[0].cpu().numpy().reshape(n, p * p, c)

        per_patch = ((pred_np - truth_np) ** 2).mean(axis=(1, 2)).astype(np.float64)
        per_patch[visible] = 0.0  # ground-truth visible patches pasted back
        masked = np.setdiff1d(np.arange(n), np.asarray(visible, dtype=np.intp))
        masked_mse = float(per_patch[masked].mean()) if masked.size else 0.0
        full_mse = masked_mse * (n - len(visible)) / n
        return LossReport(masked_mse=masked_mse, full_mse=full_mse, per_patch_mse=per_patch)
