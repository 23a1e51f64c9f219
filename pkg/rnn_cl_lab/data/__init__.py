from .copytask import (
    CopyConfig,
    Sample,
    SampleBatch,
    TaskSpec,
    Variant,
    bit_accuracy,
    dump_samples,
    gen_batch,
    gen_sample,
    load_samples,
    make_task_suite,
)

__all__ = [
    "CopyConfig",
    "Sample",
    "SampleBatch",
    "TaskSpec",
    "Variant",
    "bit_accuracy",
    "dump_samples",
    "gen_batch",
    "gen_sample",
    "load_samples",
    "make_task_suite",
]
