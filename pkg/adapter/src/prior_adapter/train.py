"""Denoising objective and a toy training loop over pipeline outputs.

``training_step`` implements the standard noise-prediction loss: sample a
timestep and Gaussian noise, mix the clean latent by the schedule, and
penalize the weighted squared error of the model's noise estimate.

Run as a module to overfit the toy adapter on a masked color/mask pair
directory produced by the mesh pipeline CLI and write a metrics JSON:

    python -m prior_adapter.train --color-dir out/pairs --mask-dir out/pairs \
        --out metrics.json --steps 200
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

import torch

from .config import AdapterConfig, DiffusionSchedule, ShapeError
from .encode import standin_encode
from .io import read_mask_frames, read_video_frames
from .lora import full_scale_trainable_ratio, inject_lora
from .model import PriorEncoder, ToyDenoiser


@dataclasses.dataclass
class Batch:
    """One training sample: conditioning plus the clean target latent."""

    first_frame: torch.Tensor  # (N, H, W, 3)
    color_latent: torch.Tensor  # (N, C, T_l, H_l, W_l)
    mask_latent: torch.Tensor  # (N, C, T_l, H_l, W_l)
    clean_latent: torch.Tensor  # (N, C, T_l, H_l, W_l)


def noisy_latent(clean: torch.Tensor, noise: torch.Tensor, alpha_bar: float) -> torch.Tensor:
    return alpha_bar**0.5 * clean + (1.0 - alpha_bar) ** 0.5 * noise


def training_step(
    model: ToyDenoiser,
    batch: Batch,
    schedule: DiffusionSchedule,
    generator: torch.Generator,
    t: int | None = None,
    noise: torch.Tensor | None = None,
) -> torch.Tensor:
    """One weighted noise-prediction loss evaluation (differentiable).

    t and noise are drawn from the generator unless pinned by the caller
    (fixed probes make before/after comparisons deterministic).
    """
    if batch.clean_latent.shape != batch.color_latent.shape:
        raise ShapeError(
            f"clean latent {tuple(batch.clean_latent.shape)} vs conditioning "
            f"{tuple(batch.color_latent.shape)}"
        )
    if t is None:
        t = int(torch.randint(0, schedule.timesteps, (1,), generator=generator))
    if noise is None:
        noise = torch.randn(batch.clean_latent.shape, generator=generator)
    z_t = noisy_latent(batch.clean_latent, noise, schedule.alpha_bar(t))
    t_tensor = torch.full((batch.clean_latent.shape[0],), t, dtype=torch.long)
    pred = model(z_t, t_tensor, batch.first_frame, batch.color_latent, batch.mask_latent)
    return schedule.weight(t) * torch.mean((pred - noise) ** 2)


def build_toy_model(config: AdapterConfig, latent_channels: int | None = None, seed: int = 0):
    """Frozen toy backbone + attached prior encoder + LoRA, ready to train.

    The noise latent shares the stand-in encoder's channel width, exactly
    as both would share the real VAE's latent space.
    """
    if latent_channels is None:
        latent_channels = config.in_channels
    torch.manual_seed(seed)
    model = ToyDenoiser(latent_channels=latent_channels, dim=config.out_channels)
    model.attach_prior_encoder(PriorEncoder(config))
    report = inject_lora(model, rank=config.lora_rank, alpha=config.lora_alpha, targets=config.targets)
    # The whole prior branch trains; LoRA injection froze it along with the base.
    for p in model.prior_encoder.parameters():
        p.requires_grad_(True)
    return model, report


def trainable_parameters(model: torch.nn.Module):
    return [p for p in model.parameters() if p.requires_grad]


def overfit(
    model: ToyDenoiser,
    batch: Batch,
    schedule: DiffusionSchedule,
    steps: int = 200,
    lr: float = 1e-3,
    seed: int = 0,
) -> dict:
    """Overfit one batch; returns the loss curve and probe losses.

    The probe fixes (t, noise) so the before/after comparison measures
    learning, not sampling luck.
    """
    gen = torch.Generator().manual_seed(seed)
    probe_t = schedule.timesteps // 2
    probe_noise = torch.randn(batch.clean_latent.shape, generator=torch.Generator().manual_seed(seed + 1))

    def probe() -> float:
        with torch.no_grad():
            return float(training_step(model, batch, schedule, gen, t=probe_t, noise=probe_noise))

    initial = probe()
    optimizer = torch.optim.Adam(trainable_parameters(model), lr=lr)
    curve = []
    for _ in range(steps):
        optimizer.zero_grad()
        loss = training_step(model, batch, schedule, gen)
        loss.backward()
        optimizer.step()
        curve.append(float(loss.detach()))
    final = probe()
    return {"initial_probe_loss": initial, "final_probe_loss": final, "loss_curve": curve}


def batch_from_dirs(
    color_dir, mask_dir, config: AdapterConfig, seed: int = 0
) -> Batch:
    """Assemble a single-sample batch from pipeline color/mask PNGs."""
    video = read_video_frames(color_dir)  # (T, H, W, 3) in [0, 1]
    mask = read_mask_frames(mask_dir)  # (T, H, W) in {0, 1}
    color_latent, mask_latent = standin_encode(video, mask, config)
    gen = torch.Generator().manual_seed(seed)
    clean = torch.randn(color_latent.values.shape, generator=gen)
    return Batch(
        first_frame=video[0][None],
        color_latent=color_latent.values[None],
        mask_latent=mask_latent.values[None],
        clean_latent=clean[None],
    )


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description="Overfit the toy adapter on one pair directory.")
    parser.add_argument("--color-dir", required=True, help="directory of color_*.png (masked frames)")
    parser.add_argument("--mask-dir", required=True, help="directory of mask_*.png")
    parser.add_argument("--config", help="pipeline config JSON (seed is honored)")
    parser.add_argument("--out", required=True, help="metrics JSON path")
    parser.add_argument("--steps", type=int, default=200)
    parser.add_argument("--lr", type=float, default=1e-2)
    parser.add_argument("--timesteps", type=int, default=10, help="diffusion steps of the toy schedule")
    parser.add_argument("--toy-scale", type=float, default=1 / 64, help="width shrink factor")
    args = parser.parse_args(argv)

    seed = 0
    if args.config:
        seed = int(json.loads(Path(args.config).read_text()).get("seed", 0))

    config = AdapterConfig().scaled(args.toy_scale)
    try:
        batch = batch_from_dirs(args.color_dir, args.mask_dir, config, seed=seed)
        model, report = build_toy_model(config, seed=seed)
        schedule = DiffusionSchedule(timesteps=args.timesteps)
        stats = overfit(model, batch, schedule, steps=args.steps, lr=args.lr, seed=seed)
    except (ShapeError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2

    metrics = {
        "initial_probe_loss": stats["initial_probe_loss"],
        "final_probe_loss": stats["final_probe_loss"],
        "loss_curve": stats["loss_curve"],
        "toy_trainable_ratio": report.trainable_ratio,
        "full_scale_trainable_ratio": full_scale_trainable_ratio(config.lora_rank),
        "adapted_modules": report.adapted,
    }
    Path(args.out).write_text(json.dumps(metrics, indent=2))
    print(
        f"{args.steps} steps: probe loss {stats['initial_probe_loss']:.4f} -> "
        f"{stats['final_probe_loss']:.4f}; wrote {args.out}"
    )
    return 0


if __name__ == "__main__":
    sys.exit(main())
