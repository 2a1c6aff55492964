"""Reading the mesh pipeline's PNG sequences into tensors.

The adapter talks to the primary pipeline only through files: masked
color frames (color_*.png), visibility masks (mask_*.png), and the
pipeline config JSON.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
import torch
from PIL import Image


def read_video_frames(directory, prefix: str = "color") -> torch.Tensor:
    """(T, H, W, 3) float32 in [0, 1] from {prefix}_*.png, sorted."""
    paths = sorted(Path(directory).glob(f"{prefix}_*.png"))
    if not paths:
        raise FileNotFoundError(f"{directory}: no {prefix}_*.png frames")
    frames = [np.asarray(Image.open(p).convert("RGB"), dtype=np.float32) / 255.0 for p in paths]
    return torch.from_numpy(np.stack(frames))


def read_mask_frames(directory) -> torch.Tensor:
    """(T, H, W) float32 in {0, 1} from mask_*.png, sorted."""
    paths = sorted(Path(directory).glob("mask_*.png"))
    if not paths:
        raise FileNotFoundError(f"{directory}: no mask_*.png frames")
    frames = []
    for p in paths:
        arr = np.asarray(Image.open(p))
        if arr.ndim != 2:
            raise ValueError(f"{p}: masks must be single-channel")
        frames.append((arr > 127).astype(np.float32))
    return torch.from_numpy(np.stack(frames))
