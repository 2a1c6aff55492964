"""Stand-in for the frozen video VAE: deterministic pooling encoder.

Average-pools 8x8 spatially, group-averages non-overlapping 7-frame
windows temporally (49 -> 7), and lifts channels to the adapter's input
width with a fixed constant-seeded linear map. Untrained by design; it
only has to preserve shapes and determinism so the adapter scaffold can
be exercised without the real pretrained encoder.
"""

from __future__ import annotations

import torch

from .config import SPATIAL_FACTOR, TEMPORAL_FACTOR, AdapterConfig, LatentTensor, ShapeError

_LIFT_SEED = 0x5EED


def _channel_lift(in_ch: int, out_ch: int) -> torch.Tensor:
    gen = torch.Generator().manual_seed(_LIFT_SEED + in_ch * 1000 + out_ch)
    return torch.randn(out_ch, in_ch, generator=gen) / in_ch**0.5


def _pool(frames: torch.Tensor) -> torch.Tensor:
    """(T, C, H, W) -> (C, T/7, H/8, W/8) by window averaging."""
    t, c, h, w = frames.shape
    if t % TEMPORAL_FACTOR != 0:
        raise ShapeError(f"frame count {t} not divisible into {TEMPORAL_FACTOR}-frame windows")
    if h % SPATIAL_FACTOR != 0 or w % SPATIAL_FACTOR != 0:
        raise ShapeError(f"spatial dims {h}x{w} not divisible by {SPATIAL_FACTOR}")
    x = frames.reshape(
        t // TEMPORAL_FACTOR,
        TEMPORAL_FACTOR,
        c,
        h // SPATIAL_FACTOR,
        SPATIAL_FACTOR,
        w // SPATIAL_FACTOR,
        SPATIAL_FACTOR,
    )
    pooled = x.mean(dim=(1, 4, 6))  # (T_l, C, H_l, W_l)
    return pooled.permute(1, 0, 2, 3)


def standin_encode(
    video: torch.Tensor, mask: torch.Tensor, config: AdapterConfig | None = None
) -> tuple[LatentTensor, LatentTensor]:
    """Encode (T, H, W, 3) video and (T, H, W) mask frames to latents.

    Mask frames are remapped v -> 2v - 1 before encoding so visibility is
    symmetric around zero, matching how the real encoder is fed.
    """
    config = config or AdapterConfig()
    if video.ndim != 4 or video.shape[3] != 3:
        raise ShapeError(f"video must be (T, H, W, 3), got {tuple(video.shape)}")
    if mask.shape != video.shape[:3]:
        raise ShapeError(f"mask shape {tuple(mask.shape)} must match video frames {tuple(video.shape[:3])}")
    video = video.to(torch.float32).permute(0, 3, 1, 2)  # (T, 3, H, W)
    mask = (mask.to(torch.float32) * 2.0 - 1.0).unsqueeze(1)  # (T, 1, H, W)

    vid_pooled = _pool(video)  # (3, T_l, H_l, W_l)
    mask_pooled = _pool(mask)  # (1, T_l, H_l, W_l)
    lift_v = _channel_lift(3, config.in_channels)
    lift_m = _channel_lift(1, config.in_channels)
    vid_latent = torch.einsum("oc,cthw->othw", lift_v, vid_pooled)
    mask_latent = torch.einsum("oc,cthw->othw", lift_m, mask_pooled)
    return LatentTensor(vid_latent), LatentTensor(mask_latent)
