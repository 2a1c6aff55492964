"""Low-rank adaptation: injection into named linear maps and accounting."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import torch
from torch import nn

from .config import DEFAULT_TARGETS, NoTargetMatched


class LoRALinear(nn.Module):
    """Frozen linear map plus a trainable low-rank update.

    Output = base(x) + (alpha/rank) * x @ A^T @ B^T with A He-initialized
    and B zero-initialized, so the wrapped layer starts as an exact no-op
    over the base.
    """

    def __init__(self, base: nn.Linear, rank: int, alpha: int):
        super().__init__()
        self.base = base
        for p in self.base.parameters():
            p.requires_grad_(False)
        self.rank = rank
        self.scaling = alpha / rank
        self.lora_a = nn.Parameter(torch.empty(rank, base.in_features))
        self.lora_b = nn.Parameter(torch.zeros(base.out_features, rank))
        nn.init.kaiming_uniform_(self.lora_a, a=math.sqrt(5))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.base(x) + self.scaling * ((x @ self.lora_a.T) @ self.lora_b.T)


@dataclass
class LoraReport:
    adapted: list = field(default_factory=list)
    trainable_params: int = 0
    total_params: int = 0

    @property
    def trainable_ratio(self) -> float:
        return self.trainable_params / max(self.total_params, 1)


def _matches(qualified: str, target: str) -> bool:
    return qualified == target or qualified.endswith("." + target)


def inject_lora(
    model: nn.Module,
    rank: int = 16,
    alpha: int = 16,
    targets: tuple = DEFAULT_TARGETS,
) -> LoraReport:
    """Wrap every matching nn.Linear in-place and freeze everything else.

    Matching is by dotted-name suffix, so "ffn.0" finds the first linear
    of every feed-forward stack. Raises NoTargetMatched when nothing in
    the model matches.
    """
    report = LoraReport()
    to_wrap = []
    for name, module in model.named_modules():
        if isinstance(module, nn.Linear) and any(_matches(name, t) for t in targets):
            to_wrap.append((name, module))
    if not to_wrap:
        raise NoTargetMatched(f"no linear module matches targets {targets}")

    for p in model.parameters():
        p.requires_grad_(False)
    for name, module in to_wrap:
        parent = model
        *path, leaf = name.split(".")
        for part in path:
            parent = getattr(parent, part) if not part.isdigit() else parent[int(part)]
        wrapped = LoRALinear(module, rank, alpha)
        if leaf.isdigit():
            parent[int(leaf)] = wrapped
        else:
            setattr(parent, leaf, wrapped)
        report.adapted.append(name)

    report.trainable_params = sum(p.numel() for p in model.parameters() if p.requires_grad)
    report.total_params = sum(p.numel() for p in model.parameters())
    return report


# Assumed full-scale backbone layout for analytic accounting: a 14B-class
# video diffusion transformer with 40 blocks, width 5120, FFN width 13824,
# and both self- and cross-attention carrying q/k/v/o projections.
FULL_SCALE_BLOCKS = 40
FULL_SCALE_DIM = 5120
FULL_SCALE_FFN = 13824
FULL_SCALE_ATTENTION_STACKS = 2  # self + cross attention per block
FULL_SCALE_TOTAL_PARAMS = 14_000_000_000


def lora_param_count(rank: int = 16) -> int:
    """LoRA parameters over the assumed full-scale layout (no model built)."""
    d, f = FULL_SCALE_DIM, FULL_SCALE_FFN
    per_block = FULL_SCALE_ATTENTION_STACKS * 4 * rank * (d + d)  # q, k, v, o
    per_block += rank * (d + f) + rank * (f + d)  # ffn.0, ffn.2
    return FULL_SCALE_BLOCKS * per_block


def prior_encoder_param_count(in_channels: int = 16, hidden: int = 1024, out: int = 5120) -> int:
    """Parameters of the prior branch at full scale (three 1x1x1 convs + patch)."""
    c = 2 * in_channels
    conv1 = c * hidden + hidden
    conv2 = conv3 = hidden * hidden + hidden
    patch = hidden * out * (1 * 2 * 2) + out
    return conv1 + conv2 + conv3 + patch


def full_scale_trainable_ratio(rank: int = 16) -> float:
    """Analytic trainable fraction of the full-scale adapted model."""
    trainable = lora_param_count(rank) + prior_encoder_param_count()
    return trainable / FULL_SCALE_TOTAL_PARAMS
