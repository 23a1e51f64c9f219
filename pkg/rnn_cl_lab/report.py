"""CSV, JSON and SVG reports of run records."""

from __future__ import annotations

import json
import logging
from pathlib import Path
from typing import Iterable, Literal

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import pandas as pd  # noqa: E402

from .metrics import RunRecord, during_final_metrics  # noqa: E402

logger = logging.getLogger(__name__)

Format = Literal["csv", "json", "svg"]

CSV_COLUMNS = ["method", "variant", "K", "p", "i", "r", "seed", "status", "during", "final", "wall_s"]


def records_table(records: Iterable[RunRecord]) -> pd.DataFrame:
    rows = []
    for r in records:
        during, final = during_final_metrics(r)
        rows.append(
            {
                "method": r.method,
                "variant": r.variant,
                "K": r.K,
                "p": r.p,
                "i": r.i,
                "r": r.r,
                "seed": r.seed,
                "status": r.status,
                "during": during if r.status == "ok" else None,
                "final": final if r.status == "ok" else None,
                "wall_s": r.wall_s,
            }
        )
    return pd.DataFrame(rows, columns=CSV_COLUMNS)


def load_records(directory: str | Path) -> list[RunRecord]:
    """Every ``record.json`` below ``directory``, with wall-clock from its timing sidecar."""
    records = []
    for path in sorted(Path(directory).rglob("record.json")):
        record = RunRecord.model_validate_json(path.read_text(encoding="utf-8"))
        timing = path.with_name("timing.json")
        if timing.exists():
            record.wall_s = json.loads(timing.read_text(encoding="utf-8")).get("wall_s")
        records.append(record)
    return records


def plot_accuracy(records: list[RunRecord], path: Path) -> Path:
    """Final and during accuracy per task index, one line pair per run."""
    fig, ax = plt.subplots(figsize=(6, 4))
    for r in records:
        if r.status != "ok":
            continue
        K = len(r.accuracy)
        tasks = list(range(1, K + 1))
        label = f"{r.method} s{r.seed}"
        line, = ax.plot(tasks, [r.accuracy[k][K - 1] for k in range(K)], marker="o", label=f"{label} final")
        ax.plot(tasks, [r.accuracy[k][k] for k in range(K)], linestyle="--", color=line.get_color(), label=f"{label} during")
    ax.set_xlabel("task")
    ax.set_ylabel("accuracy")
    ax.set_ylim(0.0, 1.02)
    if ax.lines:
        ax.legend(fontsize="small")
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)
    return path


def plot_series(table: pd.DataFrame, x: str, y: str, group: str, path: Path) -> Path:
    """Line chart of ``y`` against ``x`` per ``group`` (e.g. mean Fisher against p)."""
    fig, ax = plt.subplots(figsize=(6, 4))
    for name, part in table.groupby(group, sort=True):
        part = part.groupby(x, as_index=False)[y].mean().sort_values(x)
        ax.plot(part[x], part[y], marker="o", label=str(name))
    ax.set_xlabel(x)
    ax.set_ylabel(y)
    if ax.lines:
        ax.legend(fontsize="small")
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)
    return path


def emit_report(records: list[RunRecord], out_dir: str | Path, formats: Iterable[Format] = ("csv",)) -> list[Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for fmt in formats:
        if fmt == "csv":
            path = out_dir / "report.csv"
            records_table(records).to_csv(path, index=False)
        elif fmt == "json":
            path = out_dir / "report.json"
            path.write_text(json.dumps([r.model_dump(mode="json") for r in records], indent=2), encoding="utf-8")
        elif fmt == "svg":
            path = plot_accuracy(records, out_dir / "accuracy.svg")
        else:
            raise ValueError(f"unknown report format {fmt!r}")
        logger.info("wrote %s", path)
        written.append(path)
    return written
