"""Flat parameter vectors with named, contiguous views."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterable

import numpy as np

from ..errors import ShapeError
from . import tape
from .tape import Node


@dataclass(frozen=True)
class View:
    name: str
    shape: tuple[int, ...]
    offset: int

    @property
    def size(self) -> int:
        return int(np.prod(self.shape, dtype=np.int64))

    @property
    def stop(self) -> int:
        return self.offset + self.size


class ParamLayout:
    """Ordered (name, shape, offset) views tiling a flat vector."""

    def __init__(self, entries: Iterable[tuple[str, tuple[int, ...]]]):
        self.views: dict[str, View] = {}
        offset = 0
        for name, shape in entries:
            if name in self.views:
                raise ShapeError(f"duplicate view {name!r}")
            shape = tuple(int(s) for s in shape)
            self.views[name] = View(name, shape, offset)
            offset += self.views[name].size
        self.size = offset

    def __contains__(self, name: str) -> bool:
        return name in self.views

    def __getitem__(self, name: str) -> View:
        return self.views[name]

    def __iter__(self):
        return iter(self.views.values())

    def __eq__(self, other) -> bool:
        return isinstance(other, ParamLayout) and list(self) == list(other)

    @property
    def names(self) -> list[str]:
        return list(self.views)

    def entries(self) -> list[tuple[str, tuple[int, ...]]]:
        return [(v.name, v.shape) for v in self]

    def concat(self, other: "ParamLayout") -> "ParamLayout":
        return ParamLayout(self.entries() + other.entries())

    def mask(self, predicate: Callable[[str], bool]) -> np.ndarray:
        """Boolean mask over the flat vector selecting views whose name passes."""
        out = np.zeros(self.size, dtype=bool)
        for v in self:
            if predicate(v.name):
                out[v.offset : v.stop] = True
        return out

    def index(self, predicate: Callable[[str], bool]) -> np.ndarray:
        return np.flatnonzero(self.mask(predicate))

    def view_at(self, position: int) -> str:
        for v in self:
            if v.offset <= position < v.stop:
                return v.name
        raise IndexError(position)

    def bind(self, vector: Node) -> dict[str, Node]:
        """Differentiable named views of a flat parameter node."""
        if vector.value.size != self.size:
            raise ShapeError(f"vector of size {vector.value.size} does not fit layout of size {self.size}")
        return {v.name: tape.view(vector, v.offset, v.shape) for v in self}

    def to_dict(self) -> list[dict]:
        return [{"name": v.name, "shape": list(v.shape), "offset": v.offset} for v in self]


class ParamVector:
    """A flat float64 vector paired with its layout."""

    def __init__(self, layout: ParamLayout, entries: np.ndarray | None = None):
        if entries is None:
            entries = np.zeros(layout.size)
        entries = np.asarray(entries, dtype=np.float64)
        if entries.shape != (layout.size,):
            raise ShapeError(f"entries of shape {entries.shape} do not match layout size {layout.size}")
        self.layout = layout
        self.entries = entries

    def __len__(self) -> int:
        return self.layout.size

    def view(self, name: str) -> np.ndarray:
        v = self.layout[name]
        return self.entries[v.offset : v.stop].reshape(v.shape)

    def set(self, name: str, value) -> None:
        v = self.layout[name]
        self.entries[v.offset : v.stop] = np.asarray(value, dtype=np.float64).reshape(-1)

    def copy(self) -> "ParamVector":
        return ParamVector(self.layout, self.entries.copy())

    def frozen(self) -> "ParamVector":
        """Read-only copy."""
        entries = self.entries.copy()
        entries.setflags(write=False)
        return ParamVector(self.layout, entries)

    def node(self, name: str | None = "params") -> Node:
        return tape.leaf(self.entries, name=name)
