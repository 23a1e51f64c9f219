"""Per-task random binary masks on the hidden units."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigError, ShapeError
from ..seeding import rng_stream
from .base import Protection


def masked_count(n_h: int, fraction: float) -> int:
    """``round(fraction * n_h)`` with halves rounded up."""
    return int(np.floor(fraction * n_h + 0.5))


def mask_generate(n_h: int, masked_fraction: float, task_id: int, master_seed: int) -> np.ndarray:
    if not 0.0 <= masked_fraction <= 1.0:
        raise ConfigError(f"masked fraction {masked_fraction} outside [0, 1]")
    mask = np.ones(n_h)
    rng = rng_stream(master_seed, "masks", task_id)
    mask[rng.choice(n_h, size=masked_count(n_h, masked_fraction), replace=False)] = 0.0
    return mask


@dataclass
class MaskSet:
    n_h: int
    masked_fraction: float = 0.8
    seed: int = 0
    masks: dict[int, np.ndarray] = field(default_factory=dict)
    """Masks by task id; missing ones are generated on first use."""

    def __post_init__(self) -> None:
        for k, m in self.masks.items():
            if np.shape(m) != (self.n_h,):
                raise ShapeError(f"mask for task {k} has shape {np.shape(m)}, expected ({self.n_h},)")

    def get(self, task_id: int) -> np.ndarray:
        if task_id not in self.masks:
            self.masks[task_id] = mask_generate(self.n_h, self.masked_fraction, task_id, self.seed)
        return self.masks[task_id]


class Masking(Protection):
    name = "masking"

    def __init__(self, masked_fraction: float = 0.8, masks: dict[int, np.ndarray] | None = None):
        self.masked_fraction = masked_fraction
        self.explicit = dict(masks or {})
        self.masks: MaskSet | None = None

    def attach(self, learner) -> None:
        super().attach(learner)
        self.masks = MaskSet(
            learner.arch.n_h,
            self.masked_fraction,
            learner.context.seed,
            {k: np.asarray(m, dtype=np.float64) for k, m in self.explicit.items()},
        )

    def hidden_mask(self, task_id: int) -> np.ndarray:
        return self.masks.get(task_id)

    def state_arrays(self) -> dict[str, dict[str, np.ndarray]]:
        return {"masks": {str(k): m for k, m in sorted(self.masks.masks.items())}}
