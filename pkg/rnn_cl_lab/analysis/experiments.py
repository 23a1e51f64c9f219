"""Runners behind ``analyze``: single-task trainings and the tables read off them."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd

from ..autodiff import ParamVector
from ..config import ExperimentConfig, build_config
from ..data.copytask import CopyConfig, TaskSpec, Variant, bit_accuracy, gen_batch
from ..manager import ExperimentManager
from ..methods.ewc import EwcState, ewc_accumulate_fisher
from ..methods.si import SynapticIntelligence
from ..metrics import RunRecord
from ..printer import Printer
from ..report import plot_series
from ..seeding import rng_stream
from .heads import similarity_matrix
from .importance import fisher_stats, importance_stats
from .pca import intrinsic_dim_profile
from .theory import build_queue_copy_rnn, interference_experiment, simulate_linear_rnn

logger = logging.getLogger(__name__)


@dataclass
class SingleTaskRun:
    variant: Variant
    p: int
    i: int
    seed: int
    manager: ExperimentManager
    record: RunRecord

    @property
    def view(self) -> str:
        return "rnn.W_hh" if self.manager.learner.arch.kind == "vanilla" else "rnn.W_h"


def single_task_config(config: ExperimentConfig, variant: Variant, p: int, i: int, seed: int) -> ExperimentConfig:
    """One-task SI run of the given Copy Task shape; other sections are kept."""
    data = config.model_dump(mode="json")
    data["experiment"].update(variant=variant.value, K=1, p=p, i=i, r=0, seed=seed)
    data["method"] = {"name": "si"}
    data["grid"] = {}
    return build_config(data)


def analysis_configs(config: ExperimentConfig) -> list[tuple[Variant, int, int, int]]:
    """Basic runs with i = p, then padded runs at the smallest p."""
    a = config.analysis
    shapes = [(Variant.BASIC, p, p) for p in a.p_values]
    shapes += [(Variant.PADDED, min(a.p_values), i) for i in a.i_values]
    return [(v, p, i, seed) for v, p, i in shapes for seed in a.seeds]


def run_single_tasks(config: ExperimentConfig, printer: Printer | None = None) -> list[SingleTaskRun]:
    runs = []
    shapes = analysis_configs(config)
    for n, (variant, p, i, seed) in enumerate(shapes):
        if printer is not None:
            printer.update_item("analysis", f"Training single-task runs... {n}/{len(shapes)} completed")
        manager = ExperimentManager(single_task_config(config, variant, p, i, seed))
        record = manager.run_experiment()
        if record.status != "ok":
            logger.warning("%s p=%d i=%d seed=%d diverged; left out", variant.value, p, i, seed)
            continue
        runs.append(SingleTaskRun(variant, p, i, seed, manager, record))
    if printer is not None:
        printer.update_item("analysis", f"Trained {len(runs)} single-task runs", is_done=True)
    return runs


def pca_table(runs: list[SingleTaskRun], threshold: float = 0.75) -> pd.DataFrame:
    """Intrinsic dimension per timestep of the test-set hidden states.

    Timestep t is the state after reading input step t-1; ``stop`` marks the
    state right after the stop bit.
    """
    rows = []
    for run in runs:
        m = run.manager
        test = m.test_sets()[0]
        _, trace = m.learner.forward(m.learner.eval_params(0, m.params), test.x, 0)
        for t, dim in enumerate(intrinsic_dim_profile(trace, threshold)):
            rows.append(
                {
                    "variant": run.variant.value,
                    "p": run.p,
                    "i": run.i,
                    "seed": run.seed,
                    "timestep": t,
                    "intrinsic_dim": dim,
                    "stop": t == run.i + 1,
                }
            )
    return pd.DataFrame(rows, columns=["variant", "p", "i", "seed", "timestep", "intrinsic_dim", "stop"])


def run_fisher(run: SingleTaskRun) -> np.ndarray:
    """Empirical Fisher of the trained run over every main-network entry."""
    m = run.manager
    learner = m.learner
    ctx = learner.context
    state = EwcState.over(np.arange(learner.layout.size), 1.0)
    batch = gen_batch(ctx.copy, ctx.specs[0], rng_stream(ctx.seed, "fisher", 0), ctx.n_fisher)
    nll_fns = ((lambda node, s=batch.subset([n]): learner.sample_nll(node, s)) for n in range(batch.size))
    return ewc_accumulate_fisher(state, m.params, nll_fns)


def run_si_importance(run: SingleTaskRun) -> np.ndarray:
    si = next(p for p in run.manager.learner.protections if isinstance(p, SynapticIntelligence))
    return si.state.full(run.manager.learner.layout.size)


def importance_table(runs: list[SingleTaskRun]) -> pd.DataFrame:
    """Mean Fisher and mean SI importance of the recurrent weights per run."""
    rows = []
    for run in runs:
        layout = run.manager.learner.layout
        fisher = fisher_stats(run_fisher(run), layout, run.view)
        omega = importance_stats(run_si_importance(run), layout, run.view)
        rows.append(
            {
                "variant": run.variant.value,
                "p": run.p,
                "i": run.i,
                "seed": run.seed,
                "mean_fisher": fisher.mean,
                "max_fisher": fisher.max,
                "mean_si": omega.mean,
            }
        )
    return pd.DataFrame(rows, columns=["variant", "p", "i", "seed", "mean_fisher", "max_fisher", "mean_si"])


def task_heads(manager: ExperimentManager) -> list[np.ndarray]:
    """Head matrix each task is evaluated with, generated weights included."""
    learner = manager.learner
    heads = []
    for k in range(learner.context.n_tasks):
        psi = learner.weights(learner.eval_params(k, manager.params), k).value
        main = ParamVector(learner.arch_layout, psi)
        heads.append(main.view(f"head.{learner.arch.head_of(k)}.W"))
    return heads


def subspace_table(config: ExperimentConfig, printer: Printer | None = None) -> pd.DataFrame:
    """Head-subspace similarity of every task pair after a full configured run."""
    manager = ExperimentManager(config, printer)
    record = manager.run_experiment()
    if record.status != "ok":
        return pd.DataFrame(columns=["task_k", "task_l", "similarity"])
    S = similarity_matrix(task_heads(manager), config.analysis.rank_threshold)
    K = S.shape[0]
    return pd.DataFrame(
        [{"task_k": k, "task_l": l, "similarity": float(S[k, l])} for k in range(K) for l in range(K)]
    )


def queue_accuracy(p: int, F_out: int, n: int, rng: np.random.Generator) -> float:
    """Bit accuracy of the queue construction on ``n`` basic Copy Task samples."""
    copy = CopyConfig(p=p, i=p, F_in=F_out + 1)
    batch = gen_batch(copy, TaskSpec(variant=Variant.BASIC), rng, n)
    return bit_accuracy(simulate_linear_rnn(build_queue_copy_rnn(p, F_out), batch.x), batch)


def theory_tables(config: ExperimentConfig) -> tuple[pd.DataFrame, pd.DataFrame]:
    """Interference of growing subspaces in a fixed hidden size, and queue accuracy per p."""
    seed = config.experiment.seed
    n_h = config.model.n_h
    frames = []
    for K in (1, 2, 4, 8):
        p = max(1, n_h // 4)
        frame = interference_experiment(K, [p] * K, n_h, rng_stream(seed, "theory", K))
        frame.insert(0, "K", K)
        frames.append(frame)
    interference = pd.concat(frames, ignore_index=True)
    F_out = config.copy_config().F_out
    queue = pd.DataFrame(
        [
            {"p": p, "F_out": F_out, "accuracy": queue_accuracy(p, F_out, 100, rng_stream(seed, "queue", p))}
            for p in range(1, 11)
        ]
    )
    return interference, queue


def write_tables(tables: dict[str, pd.DataFrame], out_dir: Path) -> list[Path]:
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for name, table in tables.items():
        path = out_dir / f"{name}.csv"
        table.to_csv(path, index=False)
        logger.info("wrote %s", path)
        written.append(path)
    return written


def analyze(kind: str, config: ExperimentConfig, out_dir: Path, printer: Printer | None = None) -> list[Path]:
    """Run one analysis and write its CSV tables (plus SVG charts where there is a trend)."""
    out_dir = Path(out_dir)
    if kind == "pca":
        table = pca_table(run_single_tasks(config, printer), config.analysis.pca_threshold)
        written = write_tables({"pca": table}, out_dir)
        stops = table[table["stop"]]
        for variant, x in (("basic", "p"), ("padded", "i")):
            part = stops[stops["variant"] == variant]
            if not part.empty:
                written.append(plot_series(part, x, "intrinsic_dim", "variant", out_dir / f"pca_{variant}.svg"))
        return written
    if kind == "fisher":
        table = importance_table(run_single_tasks(config, printer))
        written = write_tables({"fisher": table}, out_dir)
        for variant, x in (("basic", "p"), ("padded", "i")):
            part = table[table["variant"] == variant]
            if not part.empty:
                written.append(plot_series(part, x, "mean_fisher", "variant", out_dir / f"fisher_{variant}.svg"))
        return written
    if kind == "subspace":
        return write_tables({"subspace": subspace_table(config, printer)}, out_dir)
    if kind == "theory":
        interference, queue = theory_tables(config)
        return write_tables({"interference": interference, "queue": queue}, out_dir)
    raise ValueError(f"unknown analysis {kind!r}")
