"""Minimal reverse-mode gradient engine used by every model in the lab."""

from . import tape
from .gradcheck import finite_diff_check
from .init import orthogonal_init, orthogonal_reg
from .optim import AdamState, adam_step, clip_global_norm
from .params import ParamLayout, ParamVector, View
from .tape import Node, backward, constant, leaf

__all__ = [
    "AdamState",
    "Node",
    "ParamLayout",
    "ParamVector",
    "View",
    "adam_step",
    "backward",
    "clip_global_norm",
    "constant",
    "finite_diff_check",
    "leaf",
    "orthogonal_init",
    "orthogonal_reg",
    "tape",
]
