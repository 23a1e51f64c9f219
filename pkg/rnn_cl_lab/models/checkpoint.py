"""Parameter and CL-state checkpoint container.

A checkpoint is an ``.npz`` archive. Every array is stored little-endian
float64 under ``<section>/<name>``; the JSON header under ``__header__``
records the format tag, the version, free-form metadata and the layout
of every section.
"""

from __future__ import annotations

import logging
from pathlib import Path
from typing import Any, Mapping

import numpy as np
from pydantic import BaseModel

from ..autodiff import ParamLayout, ParamVector

logger = logging.getLogger(__name__)

FORMAT = "rnn-cl-lab-checkpoint"
VERSION = 1


class CheckpointHeader(BaseModel):
    format: str = FORMAT
    version: int = VERSION
    meta: dict[str, Any] = {}
    sections: dict[str, list[dict]] = {}
    """Per section, the ordered ``{name, shape}`` entries."""


Section = Mapping[str, np.ndarray] | ParamVector


def _section_arrays(section: Section) -> dict[str, np.ndarray]:
    if isinstance(section, ParamVector):
        return {v.name: section.view(v.name) for v in section.layout}
    return dict(section)


def save_checkpoint(path: str | Path, sections: Mapping[str, Section], meta: Mapping[str, Any] | None = None) -> Path:
    path = Path(path)
    header = CheckpointHeader(meta=dict(meta or {}))
    arrays: dict[str, np.ndarray] = {}
    for section, content in sections.items():
        entries = []
        for name, value in _section_arrays(content).items():
            value = np.asarray(value, dtype="<f8")
            arrays[f"{section}/{name}"] = value
            entries.append({"name": name, "shape": list(value.shape)})
        header.sections[section] = entries
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        np.savez(fh, __header__=np.frombuffer(header.model_dump_json().encode("utf-8"), dtype=np.uint8), **arrays)
    logger.debug("wrote checkpoint %s with sections %s", path, list(header.sections))
    return path


def load_checkpoint(path: str | Path) -> tuple[CheckpointHeader, dict[str, dict[str, np.ndarray]]]:
    with np.load(path, allow_pickle=False) as data:
        header = CheckpointHeader.model_validate_json(bytes(data["__header__"]).decode("utf-8"))
        if header.format != FORMAT:
            raise ValueError(f"{path} is not a checkpoint ({header.format!r})")
        if header.version > VERSION:
            raise ValueError(f"checkpoint version {header.version} is newer than {VERSION}")
        sections = {
            section: {e["name"]: data[f"{section}/{e['name']}"].astype(np.float64) for e in entries}
            for section, entries in header.sections.items()
        }
    return header, sections


def as_param_vector(arrays: Mapping[str, np.ndarray]) -> ParamVector:
    """Rebuild a ParamVector from one loaded section, keeping the stored view order."""
    layout = ParamLayout([(name, tuple(np.shape(value))) for name, value in arrays.items()])
    params = ParamVector(layout)
    for name, value in arrays.items():
        params.set(name, value)
    return params

