from .checkpoint import as_param_vector, load_checkpoint, save_checkpoint
from .hnet import HnetCheckpoint, HnetConfig, Hypernetwork, checkpoint, generate_weights, hnet_regularizer
from .losses import seq_bce_loss, seq_xent_loss
from .rnn import (
    HiddenTrace,
    RNNArch,
    apply_head,
    bind,
    forward_sequence,
    init_params,
    latent_params,
    lstm_step,
    rnn_step,
    run_trunk,
)

__all__ = [
    "HiddenTrace",
    "HnetCheckpoint",
    "HnetConfig",
    "Hypernetwork",
    "RNNArch",
    "apply_head",
    "as_param_vector",
    "bind",
    "checkpoint",
    "forward_sequence",
    "generate_weights",
    "hnet_regularizer",
    "init_params",
    "latent_params",
    "load_checkpoint",
    "lstm_step",
    "rnn_step",
    "run_trunk",
    "save_checkpoint",
    "seq_bce_loss",
    "seq_xent_loss",
]
