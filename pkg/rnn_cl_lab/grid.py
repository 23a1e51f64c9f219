"""Hyperparameter grid search over independent runs."""

from __future__ import annotations

import asyncio
import itertools
import logging
from concurrent.futures import Executor, ProcessPoolExecutor
from dataclasses import dataclass

import pandas as pd

from .config import ExperimentConfig
from .errors import ConfigError
from .manager import run_experiment
from .metrics import RunRecord, during_final_metrics
from .printer import Printer
from .seeding import rng_stream

logger = logging.getLogger(__name__)


def expand_grid(config: ExperimentConfig, cap: int | None = None) -> list[dict[str, str]]:
    """Cartesian product of ``config.grid``, subsampled to ``cap`` combinations by a seeded choice."""
    if not config.grid:
        return [{}]
    keys = sorted(config.grid)
    combos = [dict(zip(keys, values)) for values in itertools.product(*(config.grid[k] for k in keys))]
    if cap is not None and cap < len(combos):
        if cap < 1:
            raise ConfigError("grid cap must be at least 1")
        rng = rng_stream(config.experiment.seed, "grid")
        keep = sorted(rng.choice(len(combos), size=cap, replace=False).tolist())
        combos = [combos[j] for j in keep]
    return combos


def _run_worker(config_json: str) -> str:
    config = ExperimentConfig.model_validate_json(config_json)
    return run_experiment(config).model_dump_json()


@dataclass
class GridResult:
    ranking: pd.DataFrame
    """One row per explored combination, best final accuracy first."""

    seeds: pd.DataFrame
    """The best combination re-run on every seed."""

    records: list[RunRecord]


class GridSearch:
    def __init__(self, config: ExperimentConfig, workers: int = 1, printer: Printer | None = None):
        self.config = config
        self.workers = workers
        self.printer = printer

    def _update(self, content: str, is_done: bool = False) -> None:
        if self.printer is not None:
            self.printer.update_item("grid", content, is_done=is_done)

    async def _run_all(self, configs: list[ExperimentConfig], label: str) -> list[RunRecord]:
        loop = asyncio.get_running_loop()
        executor: Executor | None = ProcessPoolExecutor(self.workers) if self.workers > 1 else None
        results: list[RunRecord | None] = [None] * len(configs)

        async def one(j: int, cfg: ExperimentConfig) -> tuple[int, str]:
            if executor is None:
                return j, _run_worker(cfg.model_dump_json())
            return j, await loop.run_in_executor(executor, _run_worker, cfg.model_dump_json())

        try:
            if executor is None:
                # single worker: run in-process
                for j, cfg in enumerate(configs):
                    _, payload = await one(j, cfg)
                    results[j] = RunRecord.model_validate_json(payload)
                    self._update(f"{label}... {j + 1}/{len(configs)} completed")
            else:
                tasks = [asyncio.create_task(one(j, cfg)) for j, cfg in enumerate(configs)]
                num_completed = 0
                for task in asyncio.as_completed(tasks):
                    j, payload = await task
                    results[j] = RunRecord.model_validate_json(payload)
                    num_completed += 1
                    self._update(f"{label}... {num_completed}/{len(tasks)} completed")
        finally:
            if executor is not None:
                executor.shutdown()
        return [r for r in results if r is not None]

    async def run(self, seeds: list[int], cap: int | None = None) -> GridResult:
        combos = expand_grid(self.config, cap)
        first = seeds[0] if seeds else self.config.experiment.seed
        configs = [self.config.with_overrides({**c, "experiment.seed": first}) for c in combos]
        records = await self._run_all(configs, "Running grid")

        rows = []
        for j, (combo, record) in enumerate(zip(combos, records)):
            during, final = during_final_metrics(record)
            rows.append({"combo": j, **combo, "status": record.status, "during": during, "final": final})
        ranking = pd.DataFrame(rows)
        ranking = ranking.sort_values(["final", "combo"], ascending=[False, True], na_position="last", kind="mergesort")
        ranking = ranking.reset_index(drop=True)

        best = combos[int(ranking.loc[0, "combo"])]
        logger.info("best combination: %s", best or "(defaults)")
        seed_configs = [self.config.with_overrides({**best, "experiment.seed": s}) for s in seeds or [first]]
        seed_records = await self._run_all(seed_configs, "Re-running best on seeds")
        seed_rows = []
        for record in seed_records:
            during, final = during_final_metrics(record)
            seed_rows.append({"seed": record.seed, "status": record.status, "during": during, "final": final})
        seed_table = pd.DataFrame(seed_rows)
        self._update(
            f"Grid done: best final {ranking.loc[0, 'final']:.4f}, "
            f"seed std {seed_table['final'].std(ddof=0):.4f}",
            is_done=True,
        )
        return GridResult(ranking, seed_table, records + seed_records)


def grid_search(
    config: ExperimentConfig,
    seeds: list[int],
    cap: int | None = None,
    workers: int = 1,
    printer: Printer | None = None,
) -> GridResult:
    return asyncio.run(GridSearch(config, workers, printer).run(seeds, cap))
