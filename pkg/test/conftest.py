from __future__ import annotations

import numpy as np
import pytest

from rnn_cl_lab.config import ExperimentConfig, build_config


def pytest_addoption(parser: pytest.Parser) -> None:
    parser.addoption("--runslow", action="store_true", default=False, help="run the long trend reproductions")


def pytest_collection_modifyitems(config: pytest.Config, items: list[pytest.Item]) -> None:
    if config.getoption("--runslow"):
        return
    skip = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip)


def tiny_config(method: str = "finetune", /, **sections) -> ExperimentConfig:
    """A configuration that trains in well under a second per task."""
    data = {
        "experiment": {"variant": "permuted", "K": 2, "p": 2, "i": 2, "F_in": 3, "seed": 0},
        "model": {"n_h": 8},
        "optim": {"batch_size": 8, "iters_per_task": 5},
        "method": {"name": method},
        "eval": {"n_test": 20, "n_fisher": 4},
        "replay": {"n_z": 2, "n_dec": 4},
        "hnet": {"hidden": [4], "task_emb_dim": 2, "chunk_emb_dim": 2, "chunk_size": 50, "max_compression": None},
    }
    for section, values in sections.items():
        data.setdefault(section, {}).update(values)
    return build_config(data)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)


@pytest.fixture
def make_config():
    return tiny_config
