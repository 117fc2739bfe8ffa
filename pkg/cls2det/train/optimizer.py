"""
optimizer.py - SGD with momentum and a step-decay learning-rate schedule
"""

from dataclasses import dataclass, field
from typing import Dict, Mapping, Sequence, Tuple

import numpy as np

from cls2det.diffmath.tensor import DiffTensor
from cls2det.errors import ConfigError, ShapeError


def step_decay_epochs(epochs: int) -> Tuple[int, ...]:
    """Decay points at 2/3 and 11/12 of training (both at least epoch 1, deduplicated)."""
    points = sorted({max(1, int(round(epochs * 2 / 3))), max(1, int(round(epochs * 11 / 12)))})
    return tuple(p for p in points if p < epochs)


@dataclass
class OptimizerState:
    lr: float
    momentum: float = 0.9
    decay_epochs: Sequence[int] = ()
    decay_factor: float = 0.1
    velocity: Dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        if self.lr < 0:
            raise ConfigError(f"learning rate must be >= 0, got {self.lr}")
        if not 0.0 <= self.momentum < 1.0:
            raise ConfigError(f"momentum must lie in [0, 1), got {self.momentum}")
        self.decay_epochs = tuple(sorted(int(e) for e in self.decay_epochs))
        self.current_lr = float(self.lr)

    def lr_at(self, epoch: int) -> float:
        """Learning rate for a 0-based epoch."""
        passed = sum(1 for e in self.decay_epochs if epoch >= e)
        return float(self.lr) * self.decay_factor ** passed

    def set_epoch(self, epoch: int) -> float:
        self.current_lr = self.lr_at(epoch)
        return self.current_lr


def sgd_step(params: Mapping[str, DiffTensor], state: OptimizerState) -> OptimizerState:
    """v <- mu v + g; p <- p - lr v; then every grad is cleared. A missing grad counts as zero."""
    lr, mu = state.current_lr, state.momentum
    for name, p in params.items():
        if not p.requires_grad:
            continue
        g = p.grad if p.grad is not None else np.zeros_like(p.data)
        if g.shape != p.data.shape:
            raise ShapeError(f"{name}: gradient {g.shape} vs parameter {p.data.shape}")
        v = state.velocity.get(name)
        if v is None:
            v = np.zeros_like(p.data)
        elif v.shape != p.data.shape:
            raise ShapeError(f"{name}: velocity {v.shape} vs parameter {p.data.shape}")
        v = mu * v + g
        state.velocity[name] = v
        p.data = p.data - lr * v
        p.grad = None
    return state
