"""Experiment configuration.

Config files are flat UTF-8 ``key = value`` lines under ``[section]``
headers. Every key can be overridden with ``section.key=value``.
"""

from __future__ import annotations

import configparser
import hashlib
import json
import os
from pathlib import Path
from typing import Any, Iterable, Literal, Mapping

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .data.copytask import CopyConfig, Variant
from .errors import ConfigError
from .models.hnet import HnetConfig

MethodName = Literal[
    "finetune",
    "from_scratch",
    "multitask",
    "ewc",
    "si",
    "masking",
    "masking_si",
    "coresets",
    "hnet",
    "rtf",
]

_SI = ("lambda_si", "si_epsilon", "si_denominator")

METHOD_HYPERPARAMETERS: dict[str, tuple[str, ...]] = {
    "finetune": (),
    "from_scratch": (),
    "multitask": (),
    "ewc": ("lambda_ewc",),
    "si": _SI,
    "masking": ("masked_fraction",),
    "masking_si": ("masked_fraction", *_SI),
    "coresets": ("coreset_size", "lambda_distill"),
    "hnet": ("beta", "hnet_c"),
    "rtf": ("lambda_distill", "lambda_rec", "lambda_pm"),
}

METHOD_DEFAULTS: dict[str, Any] = {
    "lambda_ewc": 100.0,
    "lambda_si": 1.0,
    "si_epsilon": 1e-3,
    "si_denominator": "printed",
    "beta": 0.01,
    "hnet_c": None,
    "masked_fraction": 0.8,
    "coreset_size": 100,
    "lambda_distill": 1.0,
    "lambda_rec": 1.0,
    "lambda_pm": 1.0,
}


def _split(value: Any) -> Any:
    if isinstance(value, str):
        return [v.strip() for v in value.split(",") if v.strip()]
    return value


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class ExperimentSection(_Section):
    variant: Variant = Variant.PERMUTED
    K: int = Field(3, ge=1)
    """Number of tasks."""

    p: int = 5
    i: int = 5
    r: int = Field(0, ge=0)
    """XOR rounds of the pattern manipulation variant."""

    F_in: int = 8
    seed: int = 0

    @model_validator(mode="after")
    def _check_layout(self) -> "ExperimentSection":
        if self.p < 1 or self.i < self.p:
            raise ValueError(f"need 1 <= p <= i, got p={self.p}, i={self.i}")
        if self.F_in < 2:
            raise ValueError("F_in must be >= 2 (pattern bits plus the stop bit)")
        return self


class ModelSection(_Section):
    kind: Literal["vanilla", "lstm"] = "vanilla"
    n_h: int = Field(128, ge=1)
    task_id_input: bool = False
    single_head: bool = False


class OptimSection(_Section):
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    batch_size: int = Field(64, ge=1)
    iters_per_task: int = Field(3000, ge=0)
    clip_norm: float | None = 100.0
    """Global gradient-norm cap; None disables clipping."""

    orth_init: bool = True
    orth_reg: float = Field(1.0, ge=0.0)


class MethodSection(_Section):
    name: MethodName = "finetune"
    lambda_ewc: float | None = None
    lambda_si: float | None = None
    si_epsilon: float | None = None
    si_denominator: Literal["printed", "squared"] | None = None
    beta: float | None = None
    """Hypernetwork regularizer strength."""

    hnet_c: int | None = None
    """Previous tasks subsampled per regularizer evaluation (all when unset)."""

    masked_fraction: float | None = Field(None, ge=0.0, le=1.0)
    coreset_size: int | None = Field(None, ge=1)
    lambda_distill: float | None = None
    lambda_rec: float | None = None
    lambda_pm: float | None = None

    @model_validator(mode="after")
    def _check_method(self) -> "MethodSection":
        allowed = METHOD_HYPERPARAMETERS[self.name]
        for key in METHOD_DEFAULTS:
            if getattr(self, key) is not None and key not in allowed:
                raise ValueError(f"{key} does not apply to method {self.name!r}")
        return self

    def value(self, key: str) -> Any:
        explicit = getattr(self, key)
        return METHOD_DEFAULTS[key] if explicit is None else explicit


class EvalSection(_Section):
    n_test: int = Field(1000, ge=1)
    n_fisher: int = Field(1000, ge=1)
    threshold: float = 0.5


class ReplaySection(_Section):
    n_z: int = Field(8, ge=1)
    n_dec: int = Field(64, ge=1)
    likelihood: Literal["gaussian", "bernoulli"] = "bernoulli"
    tau: float = 1.0
    sampling: Literal["sample", "threshold"] = "sample"


class AnalysisSection(_Section):
    p_values: tuple[int, ...] = (5, 10, 15)
    """Pattern lengths of the basic runs (with i = p)."""

    i_values: tuple[int, ...] = (5, 15, 25)
    """Input lengths of the padded runs (with p = 5)."""

    rank_threshold: float = 0.05
    pca_threshold: float = 0.75
    seeds: tuple[int, ...] = (0,)

    @field_validator("p_values", "i_values", "seeds", mode="before")
    @classmethod
    def split_lists(cls, value: Any) -> Any:
        return _split(value)


class HnetSection(HnetConfig):
    model_config = ConfigDict(frozen=True, extra="forbid")

    @field_validator("hidden", mode="before")
    @classmethod
    def split_hidden(cls, value: Any) -> Any:
        return _split(value)


class ExperimentConfig(_Section):
    experiment: ExperimentSection = ExperimentSection()
    model: ModelSection = ModelSection()
    optim: OptimSection = OptimSection()
    method: MethodSection = MethodSection()
    eval: EvalSection = EvalSection()
    hnet: HnetSection = HnetSection()
    replay: ReplaySection = ReplaySection()
    analysis: AnalysisSection = AnalysisSection()
    grid: dict[str, list[str]] = {}
    """``section.key`` to the values explored by ``grid``."""

    @field_validator("grid", mode="before")
    @classmethod
    def split_grid(cls, value: Any) -> Any:
        if isinstance(value, Mapping):
            return {k: _split(v) for k, v in value.items()}
        return value

    def copy_config(self) -> CopyConfig:
        e = self.experiment
        return CopyConfig(p=e.p, i=e.i, F_in=e.F_in)

    def config_hash(self) -> str:
        canonical = json.dumps(self.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()

    def with_overrides(self, overrides: Mapping[str, Any]) -> "ExperimentConfig":
        data = self.model_dump(mode="json")
        for dotted, value in overrides.items():
            section, _, key = dotted.partition(".")
            if not key or section not in data or section == "grid":
                raise ConfigError(f"unknown setting {dotted!r}")
            data[section][key] = _coerce(value)
        return build_config(data)


def _coerce(value: Any) -> Any:
    if isinstance(value, str) and value.strip().lower() in ("none", "null"):
        return None
    return value


def build_config(data: Mapping[str, Any]) -> ExperimentConfig:
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as e:
        raise ConfigError(str(e)) from e


def parse_overrides(items: Iterable[str]) -> dict[str, str]:
    out: dict[str, str] = {}
    for item in items:
        key, sep, value = item.partition("=")
        if not sep or "." not in key:
            raise ConfigError(f"expected section.key=value, got {item!r}")
        out[key.strip()] = value.strip()
    return out


def load_config(path: str | Path | None = None, overrides: Iterable[str] = ()) -> ExperimentConfig:
    """Read a config file (or the defaults) and apply ``section.key=value`` overrides."""
    data: dict[str, dict[str, Any]] = {}
    if path is not None:
        parser = configparser.ConfigParser(interpolation=None)
        parser.optionxform = str
        try:
            with open(path, encoding="utf-8") as fh:
                parser.read_file(fh)
        except (OSError, configparser.Error) as e:
            raise ConfigError(f"cannot read {path}: {e}") from e
        for section in parser.sections():
            data[section] = {k: _coerce(v) for k, v in parser.items(section)}
    config = build_config(data)
    return config.with_overrides(parse_overrides(overrides)) if overrides else config


def dump_config(config: ExperimentConfig) -> str:
    """Config file text that ``load_config`` reads back to the same config."""
    lines: list[str] = []
    for section, values in config.model_dump(mode="json").items():
        lines.append(f"[{section}]")
        for key, value in values.items():
            if isinstance(value, list):
                value = ",".join(str(v) for v in value)
            lines.append(f"{key} = {'none' if value is None else value}")
        lines.append("")
    return "\n".join(lines)


class Settings(BaseModel):
    """Process-level settings read from the environment."""

    output_dir: Path = Path("runs")
    workers: int = 1
    log_level: str = "INFO"

    @classmethod
    def from_env(cls) -> "Settings":
        return cls(
            output_dir=Path(os.getenv("RNNCL_OUTPUT_DIR", "runs")),
            workers=int(os.getenv("RNNCL_WORKERS", "1")),
            log_level=os.getenv("RNNCL_LOG_LEVEL", "INFO"),
        )
