"""Prior encoder, feature integration, and the toy diffusion backbone.

The prior encoder is the trainable branch: three pointwise Conv3d layers
with SiLU between the first pairs, then a zero-initialized (1,2,2)-patch
projection, so at initialization the whole branch contributes exactly
zero and the adapted model reproduces the frozen base bit for bit.

The backbone is a deliberately tiny stand-in for a pretrained video
diffusion transformer: patch embedding, a couple of attention blocks with
q/k/v/o projections and a two-linear feed-forward (named ffn.0 / ffn.2),
and an unpatching head predicting noise.
"""

from __future__ import annotations

import math

import torch
from torch import nn

from .config import AdapterConfig, ShapeError


class PriorEncoder(nn.Module):
    """Projects concatenated color+mask latents into backbone patch space."""

    def __init__(self, config: AdapterConfig):
        super().__init__()
        c_in, hidden, c_out = config.in_channels, config.hidden_channels, config.out_channels
        self.latent_encoder = nn.Sequential(
            nn.Conv3d(c_in * 2, hidden, kernel_size=1, stride=1, padding=0),
            nn.SiLU(),
            nn.Conv3d(hidden, hidden, kernel_size=1, stride=1, padding=0),
            nn.SiLU(),
            nn.Conv3d(hidden, hidden, kernel_size=1, stride=1, padding=0),
        )
        self.latent_patch_embedding = nn.Conv3d(hidden, c_out, kernel_size=(1, 2, 2), stride=(1, 2, 2))
        nn.init.zeros_(self.latent_patch_embedding.weight)
        nn.init.zeros_(self.latent_patch_embedding.bias)

    def forward(self, color_latent: torch.Tensor, mask_latent: torch.Tensor) -> torch.Tensor:
        if color_latent.shape != mask_latent.shape:
            raise ShapeError(
                f"latent shapes differ: {tuple(color_latent.shape)} vs {tuple(mask_latent.shape)}"
            )
        if color_latent.shape[-2] % 2 or color_latent.shape[-1] % 2:
            raise ShapeError("latent spatial dims must be even for the (1,2,2) patch projection")
        latent = torch.cat([color_latent, mask_latent], dim=1)
        return self.latent_patch_embedding(self.latent_encoder(latent))


def integrate(prior_feature: torch.Tensor, patch_embedding: torch.Tensor) -> torch.Tensor:
    """Elementwise fusion of the geometric prior into the noise-latent patches."""
    if prior_feature.shape != patch_embedding.shape:
        raise ShapeError(
            f"prior {tuple(prior_feature.shape)} vs patches {tuple(patch_embedding.shape)}"
        )
    return patch_embedding + prior_feature


class Block(nn.Module):
    """Attention block with single-head attention and a two-linear FFN.

    Module names matter: LoRA targets address q, k, v, o, ffn.0, ffn.2.
    """

    def __init__(self, dim: int):
        super().__init__()
        self.norm1 = nn.LayerNorm(dim)
        self.q = nn.Linear(dim, dim)
        self.k = nn.Linear(dim, dim)
        self.v = nn.Linear(dim, dim)
        self.o = nn.Linear(dim, dim)
        self.norm2 = nn.LayerNorm(dim)
        self.ffn = nn.Sequential(nn.Linear(dim, 4 * dim), nn.GELU(), nn.Linear(4 * dim, dim))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        h = self.norm1(x)
        q, k, v = self.q(h), self.k(h), self.v(h)
        attn = torch.softmax(q @ k.transpose(1, 2) / math.sqrt(q.shape[-1]), dim=-1)
        x = x + self.o(attn @ v)
        return x + self.ffn(self.norm2(x))


def _timestep_embedding(t: torch.Tensor, dim: int) -> torch.Tensor:
    half = dim // 2
    freqs = torch.exp(-math.log(10_000.0) * torch.arange(half, dtype=torch.float32) / max(half - 1, 1))
    args = t.float()[:, None] * freqs[None, :]
    emb = torch.cat([torch.sin(args), torch.cos(args)], dim=1)
    if emb.shape[1] < dim:
        emb = torch.cat([emb, torch.zeros(emb.shape[0], dim - emb.shape[1])], dim=1)
    return emb


class ToyDenoiser(nn.Module):
    """Noise predictor conditioned on the first frame and mesh priors.

    forward(z_t, t, first_frame, color_latent, mask_latent) -> predicted
    noise with z_t's shape. The prior branch is optional; with it absent
    (or zero-initialized) the model is exactly the frozen base.
    """

    def __init__(self, latent_channels: int, dim: int, n_blocks: int = 2):
        super().__init__()
        self.latent_channels = latent_channels
        self.dim = dim
        self.patch_embedding = nn.Conv3d(latent_channels, dim, kernel_size=(1, 2, 2), stride=(1, 2, 2))
        self.time_mlp = nn.Sequential(nn.Linear(dim, dim), nn.SiLU(), nn.Linear(dim, dim))
        self.first_frame_proj = nn.Linear(3, dim)
        self.blocks = nn.ModuleList(Block(dim) for _ in range(n_blocks))
        self.head = nn.Linear(dim, latent_channels * 4)
        self.prior_encoder: PriorEncoder | None = None

    def attach_prior_encoder(self, encoder: PriorEncoder) -> None:
        self.prior_encoder = encoder

    def forward(self, z_t, t, first_frame, color_latent=None, mask_latent=None):
        n, c, tl, hl, wl = z_t.shape
        if hl % 2 or wl % 2:
            raise ShapeError("latent spatial dims must be even")
        x = self.patch_embedding(z_t)  # (N, dim, T_l, H_l/2, W_l/2)
        if self.prior_encoder is not None and color_latent is not None:
            prior = self.prior_encoder(color_latent, mask_latent)
            x = integrate(prior, x)
        shape = x.shape
        tokens = x.flatten(2).transpose(1, 2)  # (N, L, dim)
        tokens = tokens + self.time_mlp(_timestep_embedding(t, self.dim))[:, None, :]
        # Global first-frame conditioning: mean color lifted to model width.
        tokens = tokens + self.first_frame_proj(first_frame.float().mean(dim=(1, 2)))[:, None, :]
        for block in self.blocks:
            tokens = block(tokens)
        out = self.head(tokens)  # (N, L, C*4): one 1x2x2 patch per token
        out = out.transpose(1, 2).reshape(n, self.latent_channels, 2, 2, *shape[2:])
        out = out.permute(0, 1, 4, 5, 2, 6, 3)  # (N, C, T_l, H_l/2, 2, W_l/2, 2)
        return out.reshape(n, c, tl, hl, wl)
