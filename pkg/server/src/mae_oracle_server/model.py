"""Masked-autoencoder ViT with an explicit visible-patch forward pass.

The standard pretraining forward masks patches at random; serving a
selection engine instead requires reconstructing from an arbitrary caller
chosen visible set, so the encoder consumes exactly the given patch
indices and the decoder fills the rest with mask tokens. Parameter names
follow the reference ViT/MAE layout so released checkpoints load directly.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
import torch
import torch.nn as nn


@dataclass(frozen=True)
class MaeConfig:
    img_size: int = 224
    patch_size: int = 16
    in_chans: int = 3
    embed_dim: int = 768
    depth: int = 12
    num_heads: int = 12
    decoder_embed_dim: int = 512
    decoder_depth: int = 8
    decoder_num_heads: int = 16
    mlp_ratio: float = 4.0

    @property
    def grid_side(self) -> int:
        return self.img_size // self.patch_size

    @property
    def n_patches(self) -> int:
        return self.grid_side**2

    def to_dict(self) -> dict:
        return asdict(self)


VIT_BASE_16 = MaeConfig()

# small geometry-preserving config for tests and smoke runs
TINY_TEST = MaeConfig(
    embed_dim=32, depth=1, num_heads=2, decoder_embed_dim=16, decoder_depth=1, decoder_num_heads=2
)

ARCHS = {"vit-base-16": VIT_BASE_16, "tiny-test": TINY_TEST}


def sincos_pos_embed(embed_dim: int, grid_side: int, cls_token: bool = True) -> np.ndarray:
    """Fixed 2D sine-cosine positional embeddings, (1 + g*g, embed_dim)."""
    coords = np.arange(grid_side, dtype=np.float64)
    gy, gx = np.meshgrid(coords, coords, indexing="ij")

    def one_axis(pos):
        half = embed_dim // 4
        omega = 1.0 / 10000 ** (np.arange(half, dtype=np.float64) / half)
        out = pos.reshape(-1)[:, None] * omega[None, :]
        return np.concatenate([np.sin(out), np.cos(out)], axis=1)

    emb = np.concatenate([one_axis(gy), one_axis(gx)], axis=1)
    if cls_token:
        emb = np.concatenate([np.zeros((1, embed_dim)), emb], axis=0)
    return emb


class Mlp(nn.Module):
    def __init__(self, dim: int, hidden: int):
        super().__init__()
        self.fc1 = nn.Linear(dim, hidden)
        self.act = nn.GELU()
        self.fc2 = nn.Linear(hidden, dim)

    def forward(self, x):
        return self.fc2(self.act(self.fc1(x)))


class Attention(nn.Module):
    def __init__(self, dim: int, num_heads: int):
        super().__init__()
        if dim % num_heads:
            raise ValueError(f"embed dim {dim} not divisible by {num_heads} heads")
        self.num_heads = num_heads
        self.scale = (dim // num_heads) ** -0.5
        self.qkv = nn.Linear(dim, dim * 3, bias=True)
        self.proj = nn.Linear(dim, dim)

    def forward(self, x):
        b, t, d = x.shape
        qkv = self.qkv(x).reshape(b, t, 3, self.num_heads, d // self.num_heads)
        q, k, v = qkv.permute(2, 0, 3, 1, 4).unbind(0)
        attn = (q @ k.transpose(-2, -1)) * self.scale
        attn = attn.softmax(dim=-1)
        out = (attn @ v).transpose(1, 2).reshape(b, t, d)
        return self.proj(out)


class Block(nn.Module):
    def __init__(self, dim: int, num_heads: int, mlp_ratio: float):
        super().__init__()
        self.norm1 = nn.LayerNorm(dim)
        self.attn = Attention(dim, num_heads)
        self.norm2 = nn.LayerNorm(dim)
        self.mlp = Mlp(dim, int(dim * mlp_ratio))

    def forward(self, x):
        x = x + self.attn(self.norm1(x))
        return x + self.mlp(self.norm2(x))


class PatchEmbed(nn.Module):
    def __init__(self, cfg: MaeConfig):
        super().__init__()
        self.proj = nn.Conv2d(
            cfg.in_chans, cfg.embed_dim, kernel_size=cfg.patch_size, stride=cfg.patch_size
        )

    def forward(self, x):
        return self.proj(x).flatten(2).transpose(1, 2)  # (b, n, d)


class MaskedAutoencoderViT(nn.Module):
    def __init__(self, cfg: MaeConfig):
        super().__init__()
        self.cfg = cfg
        d, dd = cfg.embed_dim, cfg.decoder_embed_dim

        self.patch_embed = PatchEmbed(cfg)
        self.cls_token = nn.Parameter(torch.zeros(1, 1, d))
        self.pos_embed = nn.Parameter(torch.zeros(1, cfg.n_patches + 1, d), requires_grad=False)
        self.blocks = nn.ModuleList(
            [Block(d, cfg.num_heads, cfg.mlp_ratio) for _ in range(cfg.depth)]
        )
        self.norm = nn.LayerNorm(d)

        self.decoder_embed = nn.Linear(d, dd, bias=True)
        self.mask_token = nn.Parameter(torch.zeros(1, 1, dd))
        self.decoder_pos_embed = nn.Parameter(
            torch.zeros(1, cfg.n_patches + 1, dd), requires_grad=False
        )
        self.decoder_blocks = nn.ModuleList(
            [Block(dd, cfg.decoder_num_heads, cfg.mlp_ratio) for _ in range(cfg.decoder_depth)]
        )
        self.decoder_norm = nn.LayerNorm(dd)
        self.decoder_pred = nn.Linear(dd, cfg.patch_size**2 * cfg.in_chans, bias=True)

        self._init_weights()

    def _init_weights(self) -> None:
        cfg = self.cfg
        self.pos_embed.data.copy_(
            torch.from_numpy(sincos_pos_embed(cfg.embed_dim, cfg.grid_side)).float()[None]
        )
        self.decoder_pos_embed.data.copy_(
            torch.from_numpy(sincos_pos_embed(cfg.decoder_embed_dim, cfg.grid_side)).float()[None]
        )
        w = self.patch_embed.proj.weight.data
        torch.nn.init.xavier_uniform_(w.view(w.shape[0], -1))
        torch.nn.init.normal_(self.cls_token, std=0.02)
        torch.nn.init.normal_(self.mask_token, std=0.02)
        for m in self.modules():
            if isinstance(m, nn.Linear):
                torch.nn.init.xavier_uniform_(m.weight)
                if m.bias is not None:
                    nn.init.zeros_(m.bias)
            elif isinstance(m, nn.LayerNorm):
                nn.init.zeros_(m.bias)
                nn.init.ones_(m.weight)

    def patchify(self, imgs: torch.Tensor) -> torch.Tensor:
        """(b, c, H, W) -> (b, n, p*p*c), channel-last within each patch."""
        p, c = self.cfg.patch_size, self.cfg.in_chans
        g = self.cfg.grid_side
        x = imgs.reshape(imgs.shape[0], c, g, p, g, p)
        x = torch.einsum("nchpwq->nhwpqc", x)
        return x.reshape(imgs.shape[0], g * g, p * p * c)

    def unpatchify(self, x: torch.Tensor) -> torch.Tensor:
        p, c = self.cfg.patch_size, self.cfg.in_chans
        g = self.cfg.grid_side
        x = x.reshape(x.shape[0], g, g, p, p, c)
        x = torch.einsum("nhwpqc->nchpwq", x)
        return x.reshape(x.shape[0], c, g * p, g * p)

    def forward_visible(self, imgs: torch.Tensor, visible: torch.Tensor) -> torch.Tensor:
        """Predict every patch from the given visible patch indices.

        imgs: (b, c, H, W); visible: (v,) sorted long tensor. Only visible
        patch pixels ever reach the encoder. Returns (b, n, p*p*c).
        """
        cfg = self.cfg
        n = cfg.n_patches
        tokens = self.patch_embed(imgs) + self.pos_embed[:, 1:, :]
        vis_tokens = tokens[:, visible, :]
        cls = (self.cls_token + self.pos_embed[:, :1, :]).expand(imgs.shape[0], -1, -1)
        x = torch.cat([cls, vis_tokens], dim=1)
        for blk in self.blocks:
            x = blk(x)
        x = self.norm(x)

        y = self.decoder_embed(x)
        b = y.shape[0]
        full = self.mask_token.expand(b, n, -1).clone()
        full[:, visible, :] = y[:, 1:, :]
        z = torch.cat(
            [y[:, :1, :] + self.decoder_pos_embed[:, :1, :], full + self.decoder_pos_embed[:, 1:, :]],
            dim=1,
        )
        for blk in self.decoder_blocks:
            z = blk(z)
        z = self.decoder_norm(z)
        return self.decoder_pred(z)[:, 1:, :]


def build_model(cfg: MaeConfig, seed: int | None = None) -> MaskedAutoencoderViT:
    if seed is not None:
        torch.manual_seed(seed)
    model = MaskedAutoencoderViT(cfg)
    model.eval()
    return model
