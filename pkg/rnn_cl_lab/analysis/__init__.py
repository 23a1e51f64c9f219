from .heads import head_similarity_matrix, head_subspace, head_subspace_similarity, similarity_matrix
from .importance import ImportanceStats, fisher_stats, importance_stats
from .pca import explained_variance, intrinsic_dim_profile, pca_intrinsic_dim
from .theory import (
    QueueRNN,
    SubspaceBasis,
    build_queue_copy_rnn,
    build_subspace_rnn,
    interference_experiment,
    interference_measure,
    orthogonal_complement,
    random_bases,
    simulate_linear_rnn,
    subspace_overlap,
    subspace_retention_error,
)

__all__ = [
    "ImportanceStats",
    "QueueRNN",
    "SubspaceBasis",
    "build_queue_copy_rnn",
    "build_subspace_rnn",
    "explained_variance",
    "fisher_stats",
    "head_similarity_matrix",
    "head_subspace",
    "head_subspace_similarity",
    "importance_stats",
    "interference_experiment",
    "interference_measure",
    "intrinsic_dim_profile",
    "orthogonal_complement",
    "pca_intrinsic_dim",
    "random_bases",
    "similarity_matrix",
    "simulate_linear_rnn",
    "subspace_overlap",
    "subspace_retention_error",
]
