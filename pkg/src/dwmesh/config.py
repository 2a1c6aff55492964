"""Pipeline configuration: one JSON file mirroring every CLI flag.

Precedence is flag > config file > built-in default; loading validates
every embedded type's invariants by constructing the typed params up
front. Unknown keys are rejected so typos fail loudly.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .core import DEFAULT_VFOV_DEG, Intrinsics
from .errors import ParseError
from .masks import MaskGenParams
from .meshing import MeshParams
from .trajectory import ORBIT_RANGES, Easing, OrbitSpec

MASK_MODES = ("render", "tracking", "both")


@dataclass
class OrbitConfig:
    """Orbit settings; pivot depth may stay None until depths are known."""

    range: str | None = "full"
    theta_start_deg: float | None = None
    theta_end_deg: float | None = None
    frames: int = 49
    pivot_depth: float | None = None
    easing: str = "linear"

    def angles(self) -> tuple[float, float]:
        if self.theta_start_deg is not None and self.theta_end_deg is not None:
            return (self.theta_start_deg, self.theta_end_deg)
        name = self.range or "full"
        if name not in ORBIT_RANGES:
            raise ParseError(f"unknown orbit range {name!r}; expected one of {sorted(ORBIT_RANGES)}")
        return ORBIT_RANGES[name]

    def spec(self, pivot_depth: float) -> OrbitSpec:
        start, end = self.angles()
        return OrbitSpec(
            theta_start_deg=start,
            theta_end_deg=end,
            frames=self.frames,
            pivot_depth=pivot_depth,
            easing=Easing(self.easing),
        )


@dataclass
class PipelineConfig:
    seed: int = 0
    threads: int = 1
    vfov_deg: float = DEFAULT_VFOV_DEG
    mask_mode: str = "render"
    crop_augment: bool = False
    intrinsics: Intrinsics | None = None
    mesh: MeshParams = field(default_factory=MeshParams)
    maskgen: MaskGenParams = field(default_factory=MaskGenParams)
    orbit: OrbitConfig = field(default_factory=OrbitConfig)
    paths: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.mask_mode not in MASK_MODES:
            raise ParseError(f"mask_mode must be one of {MASK_MODES}, got {self.mask_mode!r}")
        if self.threads < 1:
            raise ParseError("threads must be >= 1")

    def intrinsics_for(self, width: int, height: int) -> Intrinsics:
        """Configured intrinsics, or the canonical camera at the given dims."""
        if self.intrinsics is not None:
            return self.intrinsics
        return Intrinsics.canonical(width, height, self.vfov_deg)

    @classmethod
    def from_file(cls, path) -> "PipelineConfig":
        path = Path(path)
        try:
            data = json.loads(path.read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ParseError(f"{path}: {exc}") from exc
        return cls.from_dict(data, source=str(path))

    @classmethod
    def from_dict(cls, data: dict, source: str = "<dict>") -> "PipelineConfig":
        def pick(d: dict, allowed: set, where: str) -> dict:
            unknown = set(d) - allowed
            if unknown:
                raise ParseError(f"{source}: unknown {where} keys {sorted(unknown)}")
            return d

        top = pick(
            dict(data),
            {"seed", "threads", "vfov_deg", "mask_mode", "crop_augment", "intrinsics", "mesh", "maskgen", "orbit", "paths"},
            "config",
        )
        intr = None
        if top.get("intrinsics") is not None:
            ji = pick(dict(top["intrinsics"]), {"fx", "fy", "cx", "cy", "width", "height"}, "intrinsics")
            intr = Intrinsics(
                fx=float(ji["fx"]),
                fy=float(ji["fy"]),
                cx=float(ji["cx"]),
                cy=float(ji["cy"]),
                width=int(ji["width"]),
                height=int(ji["height"]),
            )
        mesh_kwargs = pick(
            dict(top.get("mesh", {})),
            {"delta_angle_deg", "delta_depth_coeff", "d_max", "delta_depth"},
            "mesh",
        )
        maskgen_raw = pick(
            dict(top.get("maskgen", {})),
            {"dilation_kernel", "grid_bounds", "occluder_fraction", "occluder_half_extent", "crop_bounds", "seed"},
            "maskgen",
        )
        for key in ("grid_bounds", "crop_bounds"):
            if key in maskgen_raw:
                maskgen_raw[key] = tuple(maskgen_raw[key])
        if "seed" not in maskgen_raw:
            maskgen_raw["seed"] = int(top.get("seed", 0))
        orbit_kwargs = pick(
            dict(top.get("orbit", {})),
            {"range", "theta_start_deg", "theta_end_deg", "frames", "pivot_depth", "easing"},
            "orbit",
        )
        return cls(
            seed=int(top.get("seed", 0)),
            threads=int(top.get("threads", 1)),
            vfov_deg=float(top.get("vfov_deg", DEFAULT_VFOV_DEG)),
            mask_mode=str(top.get("mask_mode", "render")),
            crop_augment=bool(top.get("crop_augment", False)),
            intrinsics=intr,
            mesh=MeshParams(**mesh_kwargs),
            maskgen=MaskGenParams(**maskgen_raw),
            orbit=OrbitConfig(**orbit_kwargs),
            paths=dict(top.get("paths", {})),
        )
