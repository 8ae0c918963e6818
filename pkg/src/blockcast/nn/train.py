"""Training hyperparameters."""

from dataclasses import dataclass
from typing import Optional


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 30
    batch_size: int = 32
    lr: float = 1e-3
    optimizer: str = "adam"  # "sgd" or "adam"
    betas: tuple = (0.9, 0.999)
    eps: float = 1e-8
    pos_weight: Optional[float] = None  # None: derive from the training labels
    class_weight_alpha: float = 1.1
    rng_seed: int = 0
    patience: int = 5

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1 or self.lr <= 0:
            raise ValueError("epochs, batch_size and lr must be positive")
        if self.optimizer not in ("sgd", "adam"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
