"""Continual learning for recurrent networks on the Copy Task family."""

from .config import ExperimentConfig, load_config
from .manager import ExperimentManager, run_experiment
from .metrics import RunRecord, during_final_metrics

__all__ = ["ExperimentConfig", "ExperimentManager", "RunRecord", "during_final_metrics", "load_config", "run_experiment"]
