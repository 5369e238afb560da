"""Checkpoint I/O: the native format carries its config; reference-release
state dicts (a {"model": ...} pickle) have their architecture inferred from
parameter shapes. Checkpoint identity is a digest of the parameter bytes,
so it is stable across serialization quirks."""

from __future__ import annotations

import hashlib
import math

import torch

from .model import MaeConfig, MaskedAutoencoderViT, build_model

NATIVE_FORMAT = "mae-oracle-checkpoint-v1"

# heads are not recoverable from fused qkv shapes; standard ViT widths
_HEADS_BY_DIM = {32: 2, 192: 3, 384: 6, 768: 12, 1024: 16, 1280: 16}
_DECODER_HEADS_BY_DIM = {16: 2, 512: 16}


def save_checkpoint(model: MaskedAutoencoderViT, path: str) -> None:
    torch.save(
        {"format": NATIVE_FORMAT, "config": model.cfg.to_dict(), "model": model.state_dict()},
        path,
    )


def _infer_config(state: dict) -> MaeConfig:
    proj = state["patch_embed.proj.weight"]
    embed_dim, in_chans, patch_size = proj.shape[0], proj.shape[1], proj.shape[2]
    n_patches = state["pos_embed"].shape[1] - 1
    grid = int(math.isqrt(n_patches))
    if grid * grid != n_patches:
        raise ValueError(f"pos_embed implies a non-square grid of {n_patches} patches")
    depth = 1 + max(
        int(k.split(".")[1]) for k in state if k.startswith("blocks.")
    )
    decoder_depth = 1 + max(
        int(k.split(".")[1]) for k in state if k.startswith("decoder_blocks.")
    )
    decoder_dim = state["decoder_embed.weight"].shape[0]
    try:
        heads = _HEADS_BY_DIM[embed_dim]
        decoder_heads = _DECODER_HEADS_BY_DIM[decoder_dim]
    except KeyError as exc:
        raise ValueError(
            f"cannot infer head counts for embed dims {embed_dim}/{decoder_dim}; "
            "use the native checkpoint format"
        ) from exc
    return MaeConfig(
        img_size=grid * patch_size,
        patch_size=patch_size,
        in_chans=in_chans,
        embed_dim=embed_dim,
        depth=depth,
        num_heads=heads,
        decoder_embed_dim=decoder_dim,
        decoder_depth=decoder_depth,
        decoder_num_heads=decoder_heads,
    )


def state_dict_digest(state: dict) -> str:
    """sha256 over parameter names and raw tensor bytes, order-independent."""
    h = hashlib.sha256()
    for name in sorted(state):
        h.update(name.encode())
        h.update(state[name].detach().cpu().contiguous().numpy().tobytes())
    return h.hexdigest()


def load_checkpoint(path: str, device: str = "cpu") -> tuple[MaskedAutoencoderViT, str]:
    """Load a checkpoint, returning (model in eval mode, parameter digest)."""
    blob = torch.load(path, map_location="cpu", weights_only=False)
    if not isinstance(blob, dict) or "model" not in blob:
        raise ValueError(f"{path}: not a recognizable checkpoint")
    state = blob["model"]
    if blob.get("format") == NATIVE_FORMAT:
        cfg = MaeConfig(**blob["config"])
    else:
        # reference-release layout: architecture inferred from shapes; the
        # checkpoint must include the decoder (the visualization releases do)
        cfg = _infer_config(state)
    model = build_model(cfg)
    missing, unexpected = model.load_state_dict(state, strict=False)
    missing = [m for m in missing if not m.endswith("pos_embed")]  # fixed buffers regenerate
    if missing:
        raise ValueError(f"{path}: checkpoint missing parameters: {missing[:5]}")
    if unexpected:
        raise ValueError(f"{path}: checkpoint has unexpected parameters: {unexpected[:5]}")
    model.to(device)
    model.eval()
    return model, state_dict_digest(model.state_dict())
