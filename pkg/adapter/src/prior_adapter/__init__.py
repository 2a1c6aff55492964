"""Toy-scale mesh-prior adapter scaffold for video diffusion models.

Stand-in pooling encoder, zero-initialized prior projection, elementwise
feature integration, LoRA injection into attention and feed-forward
linears, and the weighted noise-prediction training objective. Consumes
the color/mask PNG sequences written by the mesh pipeline CLI.
"""

from .config import AdapterConfig, DiffusionSchedule, LatentTensor, NoTargetMatched, ShapeError
from .encode import standin_encode
from .lora import LoRALinear, full_scale_trainable_ratio, inject_lora, lora_param_count
from .model import PriorEncoder, ToyDenoiser, integrate
from .train import Batch, build_toy_model, overfit, training_step

__version__ = "0.1.0"

__all__ = [
    "AdapterConfig",
    "Batch",
    "DiffusionSchedule",
    "LatentTensor",
    "LoRALinear",
    "NoTargetMatched",
    "PriorEncoder",
    "ShapeError",
    "ToyDenoiser",
    "build_toy_model",
    "full_scale_trainable_ratio",
    "inject_lora",
    "integrate",
    "lora_param_count",
    "overfit",
    "standin_encode",
    "training_step",
]
