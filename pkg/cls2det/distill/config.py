"""
config.py - Distillation hyperparameters (loss weights, temperature, crop and pooling sizes, layers)
"""

from dataclasses import asdict, dataclass, field
from typing import Tuple

from cls2det.errors import ConfigError

PIXEL_LAYER = "l0"
FEATURE_LAYERS = ("l1", "l2")
ALL_LAYERS = (PIXEL_LAYER,) + FEATURE_LAYERS


def layer_side(sampling_size: int, layer: str) -> int:
    """Spatial side of a layer for an s x s crop; each teacher block is a stride-2, pad-1 3x3 conv."""
    side = int(sampling_size)
    for _ in range(ALL_LAYERS.index(layer)):
        side = (side + 1) // 2
    return side


def parse_layers(text: str) -> Tuple[str, ...]:
    """'l0,l1' -> ('l0', 'l1'); order follows ALL_LAYERS, duplicates collapse."""
    names = {t.strip().lower() for t in text.split(",") if t.strip()}
    unknown = sorted(names - set(ALL_LAYERS))
    if unknown:
        raise ConfigError(f"unknown distillation layers {unknown}; choose from {list(ALL_LAYERS)}")
    return tuple(name for name in ALL_LAYERS if name in names)


@dataclass
class DistillConfig:
    lambda_kc: float = 0.4
    lambda_kl: float = 1.0
    temperature: float = 2.0
    sampling_size: int = 32
    pool_w: int = 4
    pool_h: int = 4
    layer_set: Tuple[str, ...] = field(default_factory=lambda: ("l0", "l1"))

    def __post_init__(self):
        if isinstance(self.layer_set, str):
            self.layer_set = parse_layers(self.layer_set)
        else:
            self.layer_set = parse_layers(",".join(self.layer_set))
        self.validate()

    def validate(self) -> "DistillConfig":
        if self.lambda_kc < 0 or self.lambda_kl < 0:
            raise ConfigError(f"loss weights must be >= 0 (lambda_kc={self.lambda_kc}, lambda_kl={self.lambda_kl})")
        if not self.temperature > 0:
            raise ConfigError(f"temperature must be > 0, got {self.temperature}")
        if self.sampling_size < 2:
            raise ConfigError(f"sampling_size must be >= 2, got {self.sampling_size}")
        if self.pool_w < 1 or self.pool_h < 1:
            raise ConfigError(f"pool sizes must be positive, got {self.pool_h}x{self.pool_w}")
        if self.pool_w > self.sampling_size or self.pool_h > self.sampling_size:
            raise ConfigError(f"pool {self.pool_h}x{self.pool_w} larger than crop {self.sampling_size}")
        for name in self.feature_layers:
            side = layer_side(self.sampling_size, name)
            if self.pool_w > side or self.pool_h > side:
                raise ConfigError(f"pool {self.pool_h}x{self.pool_w} larger than the {side}x{side} {name} map "
                                  f"of a {self.sampling_size}px crop")
        return self

    @property
    def feature_layers(self) -> Tuple[str, ...]:
        return tuple(name for name in self.layer_set if name in FEATURE_LAYERS)

    @property
    def uses_pixels(self) -> bool:
        return PIXEL_LAYER in self.layer_set

    def to_dict(self) -> dict:
        d = asdict(self)
        d["layer_set"] = list(self.layer_set)
        return d
