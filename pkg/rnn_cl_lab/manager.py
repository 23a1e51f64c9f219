from __future__ import annotations

import json
import logging
import time
from pathlib import Path

import numpy as np

from .autodiff import ParamVector
from .config import ExperimentConfig
from .data.copytask import SampleBatch, bit_accuracy, gen_batch, make_task_suite
from .errors import DivergenceError
from .methods import build_learner
from .methods.base import Learner
from .metrics import Failure, RunRecord, during_final_metrics
from .models.checkpoint import save_checkpoint
from .printer import Printer
from .seeding import rng_stream
from .training import train_phase

logger = logging.getLogger(__name__)


class ExperimentManager:
    """Runs one configured experiment and consolidates each finished task."""

    def __init__(self, config: ExperimentConfig, printer: Printer | None = None):
        self.config = config
        self.printer = printer
        self.learner: Learner | None = None
        self.params: ParamVector | None = None

    def _update(self, item_id: str, content: str, is_done: bool = False) -> None:
        if self.printer is not None:
            self.printer.update_item(item_id, content, is_done=is_done)

    def test_sets(self) -> list[SampleBatch]:
        """Fixed held-out data per task, shared by every method with the same seed."""
        e = self.config.experiment
        copy = self.config.copy_config()
        specs = make_task_suite(e.variant, e.K, copy, e.r, e.seed)
        return [gen_batch(copy, spec, rng_stream(e.seed, "test", k), self.config.eval.n_test) for k, spec in enumerate(specs)]

    def evaluate(self, task_id: int, test: SampleBatch) -> float:
        logits = self.learner.predict(self.params, test.x, task_id)
        return bit_accuracy(logits, test, self.config.eval.threshold)

    def run_experiment(self) -> RunRecord:
        cfg = self.config
        e = cfg.experiment
        K = e.K
        copy = cfg.copy_config()
        specs = make_task_suite(e.variant, K, copy, e.r, e.seed)
        tests = self.test_sets()
        self.learner = build_learner(cfg, specs)
        self.params = self.learner.init_params(rng_stream(e.seed, "init"))

        record = RunRecord(
            method=cfg.method.name,
            variant=e.variant.value,
            K=K,
            p=e.p,
            i=e.i,
            r=e.r,
            seed=e.seed,
            config_hash=cfg.config_hash(),
        )
        A: list[list[float | None]] = [[None] * K for _ in range(K)]
        phases = [list(range(K))] if self.learner.joint else [[k] for k in range(K)]
        start = time.perf_counter()

        for tasks in phases:
            k = tasks[-1]
            label = "all tasks" if len(tasks) > 1 else f"task {k + 1}/{K}"
            self._update("training", f"Training {label}...")
            self.params = self.learner.on_task_start(k, self.params)

            def progress(it: int, total: int, loss: float) -> None:
                self._update("training", f"Training {label}... {it}/{total} (loss {loss:.4f})")

            try:
                self.params = train_phase(self.learner, self.params, tasks, cfg.optim, e.seed, progress)
            except DivergenceError as err:
                logger.error("run diverged: %s", err)
                self._update("training", f"Diverged on task {err.task_id + 1}", is_done=True)
                record.status = "failed"
                record.failure = Failure(task_id=err.task_id, iteration=err.iteration, message=str(err))
                record.accuracy = []
                record.wall_s = time.perf_counter() - start
                return record

            self._update("training", f"Trained {label}", is_done=True)
            self._update("evaluating", f"Evaluating after {label}...")
            for j in range(k + 1):
                acc = self.evaluate(j, tests[j])
                columns = range(j, K) if self.learner.joint else (k,)
                for after in columns:
                    A[j][after] = acc
            logger.info("after %s: %s", label, ", ".join(f"{A[j][k]:.4f}" for j in range(k + 1)))
            self._update("evaluating", f"Evaluated after {label}", is_done=True)
            self.learner.on_task_end(k, self.params)

        record.accuracy = A
        record.wall_s = time.perf_counter() - start
        during, final = during_final_metrics(record)
        self._update("result", f"during {during:.4f}, final {final:.4f}", is_done=True)
        return record

    def save(self, record: RunRecord, out_dir: Path) -> Path:
        """Write the record, a timing sidecar and the final parameters plus CL state."""
        run_dir = Path(out_dir) / f"{record.method}-{record.config_hash[:12]}-s{record.seed}"
        run_dir.mkdir(parents=True, exist_ok=True)
        (run_dir / "record.json").write_text(record.model_dump_json(indent=2), encoding="utf-8")
        (run_dir / "timing.json").write_text(json.dumps({"wall_s": record.wall_s}), encoding="utf-8")
        if record.status == "ok" and self.params is not None:
            sections = {"params": self.params, **self.learner.state_arrays()}
            save_checkpoint(run_dir / "checkpoint.npz", sections, {"config_hash": record.config_hash, "method": record.method})
        logger.info("wrote %s", run_dir)
        return run_dir


def run_experiment(config: ExperimentConfig, printer: Printer | None = None) -> RunRecord:
    return ExperimentManager(config, printer).run_experiment()


def mean_accuracy(records: list[RunRecord]) -> tuple[float, float]:
    pairs = [during_final_metrics(r) for r in records if r.status == "ok"]
    if not pairs:
        return float("nan"), float("nan")
    during, final = zip(*pairs)
    return float(np.mean(during)), float(np.mean(final))
