"""Adapter configuration and latent shape bookkeeping."""

from __future__ import annotations

from dataclasses import dataclass, field

TEMPORAL_FACTOR = 7
SPATIAL_FACTOR = 8

DEFAULT_TARGETS = ("q", "k", "v", "o", "ffn.0", "ffn.2")


class ShapeError(ValueError):
    pass


class NoTargetMatched(ValueError):
    pass


@dataclass(frozen=True)
class AdapterConfig:
    """Channel widths and LoRA settings for the prior adapter.

    ``scaled`` shrinks every width for desk-scale tests while keeping the
    architecture identical.
    """

    in_channels: int = 16
    hidden_channels: int = 1024
    out_channels: int = 5120
    lora_rank: int = 16
    lora_alpha: int = 16
    targets: tuple = DEFAULT_TARGETS

    def __post_init__(self):
        if self.lora_rank < 1:
            raise ValueError("LoRA rank must be >= 1")
        if min(self.in_channels, self.hidden_channels, self.out_channels) < 1:
            raise ValueError("channel widths must be positive")
        if not self.targets:
            raise ValueError("target module list must be non-empty")

    def scaled(self, factor: float) -> "AdapterConfig":
        shrink = lambda n: max(1, int(round(n * factor)))
        return AdapterConfig(
            in_channels=shrink(self.in_channels),
            hidden_channels=shrink(self.hidden_channels),
            out_channels=shrink(self.out_channels),
            lora_rank=self.lora_rank,
            lora_alpha=self.lora_alpha,
            targets=self.targets,
        )


@dataclass(frozen=True)
class LatentTensor:
    """Encoded video/mask latent, (C, T_l, H_l, W_l) torch tensor.

    T_l is the frame count divided by the temporal window, H_l/W_l the
    spatial dims divided by the pooling factor.
    """

    values: "torch.Tensor"  # noqa: F821 - torch imported lazily by users

    @property
    def channels(self) -> int:
        return self.values.shape[0]

    @property
    def frames(self) -> int:
        return self.values.shape[1]

    @property
    def height(self) -> int:
        return self.values.shape[2]

    @property
    def width(self) -> int:
        return self.values.shape[3]


@dataclass(frozen=True)
class DiffusionSchedule:
    """Cosine alpha-bar schedule with per-timestep loss weights.

    The backbone this scaffolds would bring its own schedule; only
    schedule-independent invariants are tested, and the loss weight
    defaults to 1 everywhere.
    """

    timesteps: int = 100
    weights: tuple = field(default=())

    def __post_init__(self):
        if self.timesteps < 1:
            raise ValueError("need at least one timestep")
        if not self.weights:
            object.__setattr__(self, "weights", (1.0,) * self.timesteps)
        if len(self.weights) != self.timesteps or any(w <= 0 for w in self.weights):
            raise ValueError("weights must be positive, one per timestep")

    def alpha_bar(self, t: int) -> float:
        import math

        s = 0.008
        f = lambda u: math.cos((u / self.timesteps + s) / (1 + s) * math.pi / 2) ** 2
        return f(t) / f(0)

    def weight(self, t: int) -> float:
        return self.weights[t]
