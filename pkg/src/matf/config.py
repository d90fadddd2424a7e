"""Model configuration and shared error types."""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields
from typing import Tuple


class ConfigError(ValueError):
    pass


class ShapeError(ValueError):
    pass


def _is_pow2(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class ModelConfig:
    """Sizes of every MATF block.

    ``grid_hw`` is the fused map size; the scene encoder reduces ``scene_hw`` to
    it by ``downscale = scene_hw / grid_hw`` with stride-2 convolutions, so the
    ratio must be a power of two.
    """

    scene_hw: Tuple[int, int] = (64, 64)
    c_in: int = 3
    grid_hw: Tuple[int, int] = (32, 32)
    d_agent: int = 16
    c_scene: int = 8
    hidden: int = 32
    embed: int = 16
    unet_depth: int = 3
    unet_channels: int = 16
    d_noise: int = 8
    T: int = 8
    T_future: int = 12
    dt: float = 0.4
    coord_scale: float = 1.0
    activation: str = "elu"

    def __post_init__(self):
        object.__setattr__(self, "scene_hw", tuple(int(v) for v in self.scene_hw))
        object.__setattr__(self, "grid_hw", tuple(int(v) for v in self.grid_hw))
        for name in ("c_in", "d_agent", "c_scene", "hidden", "embed", "unet_channels", "d_noise"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.unet_depth < 0:
            raise ConfigError("unet_depth must be >= 0")
        if self.T < 2 or self.T_future < 1 or not self.dt > 0 or not self.coord_scale > 0:
            raise ConfigError("invalid T / T_future / dt / coord_scale")
        for g in self.grid_hw:
            if not _is_pow2(g) or g < 2 ** self.unet_depth:
                raise ConfigError(
                    f"grid size {g} must be a power of two >= 2**unet_depth; valid: "
                    f"{valid_resolutions(self.scene_hw[0], self.unet_depth)}")
        self.downscale  # validates the scene/grid ratio

    @property
    def downscale(self) -> int:
        ratios = set()
        for s, g in zip(self.scene_hw, self.grid_hw):
            if s % g:
                raise ConfigError(f"scene size {s} is not divisible by grid size {g}")
            ratios.add(s // g)
        if len(ratios) != 1 or not _is_pow2(next(iter(ratios))):
            raise ConfigError(f"scene/grid ratio must be one power of two, got {sorted(ratios)}")
        return ratios.pop()

    def to_dict(self) -> dict:
        d = asdict(self)
        d["scene_hw"] = list(self.scene_hw)
        d["grid_hw"] = list(self.grid_hw)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown model config keys: {sorted(unknown)}")
        return cls(**d)


def valid_resolutions(scene_size: int, unet_depth: int):
    """Fused-map sizes usable with a given scene size and U-Net depth."""
    out = []
    g = 2 ** unet_depth
    while g <= scene_size:
        if scene_size % g == 0 and _is_pow2(scene_size // g):
            out.append(g)
        g *= 2
    return out
