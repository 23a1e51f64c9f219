"""Sequential task losses.

The per-position weights of :class:`~rnn_cl_lab.data.copytask.Sample`
multiply the binary cross-entropy directly instead of tempering the
logits; positions with weight 0 contribute neither loss nor gradient.
Losses are summed over time and features and averaged over the batch.
"""

from __future__ import annotations

import numpy as np

from ..autodiff import tape
from ..autodiff.tape import Node
from ..data.copytask import Sample, SampleBatch
from ..errors import DataError, ShapeError


def _batch_size(logits: Node) -> int:
    return logits.shape[1] if logits.value.ndim == 3 else 1


def seq_bce_loss(
    logits: Node,
    sample: Sample | SampleBatch,
    target: np.ndarray | None = None,
) -> Node:
    """Weighted Bernoulli NLL; ``target`` replaces the hard bits (soft targets)."""
    target = sample.y if target is None else target
    if logits.shape != np.shape(target) or logits.shape != sample.loss_weight.shape:
        raise ShapeError(f"logits {logits.shape} vs target {np.shape(target)}")
    per_bit = tape.bce_with_logits(logits, target, sample.loss_weight)
    return tape.scale(tape.sum(per_bit), 1.0 / _batch_size(logits))


def seq_xent_loss(logits: Node, labels: np.ndarray, timestep_weights: np.ndarray) -> Node:
    """``sum_t w_t * -log softmax(z_t)[label_t]`` with 0-based labels."""
    labels = np.asarray(labels, dtype=np.int64)
    n_classes = logits.shape[-1]
    if labels.shape != logits.shape[:-1]:
        raise ShapeError(f"labels {labels.shape} for logits {logits.shape}")
    if labels.size and (labels.min() < 0 or labels.max() >= n_classes):
        raise DataError(f"labels must lie in 0..{n_classes - 1}")
    weights = np.asarray(timestep_weights, dtype=np.float64)
    weights = weights.reshape(weights.shape + (1,) * (labels.ndim - weights.ndim))
    picked = np.zeros(logits.shape)
    np.put_along_axis(picked, labels[..., None], 1.0, axis=-1)
    nll = tape.mul(tape.log_softmax(logits), -picked * weights[..., None])
    return tape.scale(tape.sum(nll), 1.0 / _batch_size(logits))
