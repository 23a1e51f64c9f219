"""Copy Task generators: basic, padded, permuted and pattern manipulation.

Timesteps are 0-based in code. With pattern length ``p`` and input length
``i`` a sequence has ``T = i + 1 + p`` rows: the pattern occupies rows
``0..p-1``, the stop flag sits in row ``i`` (last input column) and the
recall window is rows ``i+1..i+p``.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterable

import numpy as np
from pydantic import BaseModel, ConfigDict, model_validator

from ..errors import DataError
from ..seeding import rng_stream


class Variant(str, Enum):
    BASIC = "basic"
    PADDED = "padded"
    PERMUTED = "permuted"
    PATMAN = "patman"


class CopyConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    p: int = 5
    """Pattern length in timesteps."""

    i: int = 5
    """Input length in timesteps (pattern plus zero padding)."""

    F_in: int = 8
    """Input features: pattern bits plus one stop bit."""

    @model_validator(mode="after")
    def _check(self) -> "CopyConfig":
        if self.p < 1:
            raise ValueError("p must be >= 1")
        if self.i < self.p:
            raise ValueError("i must be >= p")
        if self.F_in < 2:
            raise ValueError("F_in must be >= 2")
        return self

    @property
    def F_out(self) -> int:
        return self.F_in - 1

    @property
    def T(self) -> int:
        return self.i + 1 + self.p

    @property
    def recall(self) -> slice:
        return slice(self.i + 1, self.i + 1 + self.p)

    def loss_weight(self) -> np.ndarray:
        """T x F_out weights: ones on the recall window, zeros elsewhere."""
        weight = np.zeros((self.T, self.F_out))
        weight[self.recall] = 1.0
        return weight


class TaskSpec(BaseModel):
    model_config = ConfigDict(frozen=True)

    variant: Variant
    task_id: int = 0
    r: int = 0
    """Manipulation depth (number of XOR rounds) for the patman variant."""

    permutations: tuple[tuple[int, ...], ...] = ()
    """Time permutations of {0..p-1}; output offset pi[t] receives input step t."""

    @model_validator(mode="after")
    def _check(self) -> "TaskSpec":
        for perm in self.permutations:
            if sorted(perm) != list(range(len(perm))):
                raise ValueError(f"{perm} is not a permutation")
        if self.variant in (Variant.BASIC, Variant.PADDED):
            if self.r != 0 or self.permutations:
                raise ValueError(f"{self.variant.value} tasks take no permutations")
        elif self.variant is Variant.PERMUTED:
            if len(self.permutations) != 1:
                raise ValueError("permuted tasks need exactly one permutation")
        elif len(self.permutations) != self.r:
            raise ValueError("patman tasks need one permutation per round")
        return self


@dataclass(frozen=True)
class SampleBatch:
    """Time-major batch: ``x`` is T x B x F_in, ``y``/``loss_weight`` are T x B x F_out."""

    x: np.ndarray
    y: np.ndarray
    loss_weight: np.ndarray
    task_id: int = 0

    @property
    def size(self) -> int:
        return self.x.shape[1]

    def sample(self, n: int) -> "Sample":
        return Sample(self.x[:, n], self.y[:, n], self.loss_weight[:, n], self.task_id)

    def subset(self, index) -> "SampleBatch":
        return SampleBatch(self.x[:, index], self.y[:, index], self.loss_weight[:, index], self.task_id)


@dataclass(frozen=True)
class Sample:
    x: np.ndarray
    y: np.ndarray
    loss_weight: np.ndarray
    task_id: int = 0


def _permute_time(pattern: np.ndarray, perm: tuple[int, ...]) -> np.ndarray:
    """Move step ``t`` of a (p, ...) pattern to step ``perm[t]``."""
    out = np.empty_like(pattern)
    out[list(perm)] = pattern
    return out


def targets_from_pattern(pattern: np.ndarray, spec: TaskSpec) -> np.ndarray:
    """Recall-window target for a (p, B, F_out) binary pattern."""
    if spec.variant is Variant.PERMUTED:
        return _permute_time(pattern, spec.permutations[0])
    if spec.variant is Variant.PATMAN:
        target = pattern.copy()
        for perm in spec.permutations:
            target = np.logical_xor(target, _permute_time(pattern, perm)).astype(np.float64)
        return target
    return pattern.copy()


def gen_batch(config: CopyConfig, spec: TaskSpec, rng: np.random.Generator, n: int) -> SampleBatch:
    """``n`` independent samples of one task."""
    for perm in spec.permutations:
        if len(perm) != config.p:
            raise DataError(f"permutation of length {len(perm)} for pattern length {config.p}")
    p, F_out = config.p, config.F_out
    pattern = rng.integers(0, 2, size=(p, n, F_out)).astype(np.float64)

    x = np.zeros((config.T, n, config.F_in))
    x[:p, :, :F_out] = pattern
    x[config.i, :, F_out] = 1.0

    y = np.zeros((config.T, n, F_out))
    y[config.recall] = targets_from_pattern(pattern, spec)

    weight = np.repeat(config.loss_weight()[:, None, :], n, axis=1)
    return SampleBatch(x, y, weight, spec.task_id)


def gen_sample(config: CopyConfig, spec: TaskSpec, rng: np.random.Generator) -> Sample:
    return gen_batch(config, spec, rng, 1).sample(0)


def make_task_suite(
    variant: Variant | str,
    K: int,
    config: CopyConfig,
    r: int = 0,
    master_seed: int = 0,
) -> list[TaskSpec]:
    if K < 1:
        raise DataError("a task suite needs at least one task")
    variant = Variant(variant)
    rng = rng_stream(master_seed, "tasks")
    specs = []
    for k in range(K):
        if variant is Variant.PERMUTED:
            n_perm = 1
        elif variant is Variant.PATMAN:
            n_perm = r
        else:
            n_perm = 0
        perms = tuple(tuple(int(v) for v in rng.permutation(config.p)) for _ in range(n_perm))
        specs.append(
            TaskSpec(
                variant=variant,
                task_id=k,
                r=r if variant is Variant.PATMAN else 0,
                permutations=perms,
            )
        )
    return specs


def bit_accuracy(pred: np.ndarray, sample: Sample | SampleBatch, threshold: float = 0.5) -> float:
    """Fraction of recall-window bits predicted correctly from logits."""
    pred = np.asarray(pred, dtype=np.float64)
    if pred.shape != sample.y.shape:
        raise DataError(f"prediction of shape {pred.shape} for target of shape {sample.y.shape}")
    window = sample.loss_weight > 0
    if not window.any():
        raise DataError("sample has an empty recall window")
    probs = 0.5 * (1.0 + np.tanh(0.5 * pred))
    bits = probs >= threshold
    return float(np.mean(bits[window] == (sample.y[window] > 0.5)))


# ----------------------------------------------------------------------
# JSON-lines fixtures
# ----------------------------------------------------------------------
class SampleRecord(BaseModel):
    task_id: int
    x: list[list[float]]
    y: list[list[float]]
    loss_weight: list[list[float]]


def dump_samples(path: str | Path, samples: Iterable[Sample]) -> int:
    count = 0
    with open(path, "w", encoding="utf-8") as fh:
        for s in samples:
            record = SampleRecord(
                task_id=s.task_id,
                x=s.x.tolist(),
                y=s.y.tolist(),
                loss_weight=s.loss_weight.tolist(),
            )
            fh.write(record.model_dump_json() + "\n")
            count += 1
    return count


def load_samples(path: str | Path) -> list[Sample]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            rec = SampleRecord.model_validate_json(line)
            out.append(Sample(np.array(rec.x), np.array(rec.y), np.array(rec.loss_weight), rec.task_id))
    return out
