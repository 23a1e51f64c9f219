"""Command line: ``python -m rnn_cl_lab.main {run,grid,analyze,report} ...``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from dotenv import load_dotenv
from rich.logging import RichHandler

from .analysis.experiments import analyze
from .config import ExperimentConfig, Settings, load_config
from .errors import ConfigError, DivergenceError, LabError
from .grid import grid_search
from .manager import ExperimentManager
from .metrics import during_final_metrics
from .printer import Printer
from .report import emit_report, load_records

logger = logging.getLogger("rnn_cl_lab")

EXIT_CONFIG = 2
EXIT_DIVERGED = 3


def _seeds(text: str) -> list[int]:
    try:
        return [int(s) for s in text.split(",") if s.strip()]
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"seeds must be comma-separated integers, got {text!r}") from e


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rnn_cl_lab", description="Continual learning experiments on the Copy Task.")
    parser.add_argument("--log-level", default=None, help="overrides RNNCL_LOG_LEVEL")
    parser.add_argument("--out", type=Path, default=None, help="output directory (overrides RNNCL_OUTPUT_DIR)")
    parser.add_argument("--quiet", action="store_true", help="no live progress display")
    sub = parser.add_subparsers(dest="command", required=True)

    def with_config(p: argparse.ArgumentParser) -> argparse.ArgumentParser:
        p.add_argument("--config", type=Path, default=None)
        p.add_argument("--set", dest="overrides", action="append", default=[], metavar="SECTION.KEY=VALUE")
        return p

    with_config(sub.add_parser("run", help="train and evaluate one configuration"))
    grid = with_config(sub.add_parser("grid", help="search the [grid] section"))
    grid.add_argument("--cap", type=int, default=None)
    grid.add_argument("--seeds", type=_seeds, default=None)
    grid.add_argument("--workers", type=int, default=None)
    analysis = with_config(sub.add_parser("analyze", help="diagnostic analyses"))
    analysis.add_argument("kind", choices=["pca", "fisher", "subspace", "theory"])
    report = sub.add_parser("report", help="tables and charts from saved records")
    report.add_argument("--in", dest="in_dir", type=Path, required=True)
    report.add_argument("--format", dest="formats", action="append", choices=["csv", "json", "svg"], default=None)
    return parser


def _run(config: ExperimentConfig, out_dir: Path, printer: Printer | None) -> int:
    manager = ExperimentManager(config, printer)
    record = manager.run_experiment()
    run_dir = manager.save(record, out_dir)
    if record.status != "ok":
        print(f"run diverged: {record.failure.message} ({run_dir})")
        return EXIT_DIVERGED

    during, final = during_final_metrics(record)
    print(f"{record.method}: during {during:.4f}, final {final:.4f} ({run_dir})")
    return 0


def _grid(config: ExperimentConfig, args: argparse.Namespace, settings: Settings, printer: Printer | None) -> int:
    seeds = args.seeds or [config.experiment.seed]
    result = grid_search(config, seeds, args.cap, args.workers or settings.workers, printer)
    out_dir = settings.output_dir / f"grid-{config.config_hash()[:12]}"
    out_dir.mkdir(parents=True, exist_ok=True)
    result.ranking.to_csv(out_dir / "ranking.csv", index=False)
    result.seeds.to_csv(out_dir / "seeds.csv", index=False)
    print(result.ranking.to_string(index=False))
    print(f"per-seed final accuracy std: {result.seeds['final'].std(ddof=0):.4f}")
    return 0


def main(argv: list[str] | None = None) -> int:
    load_dotenv()
    args = build_parser().parse_args(argv)
    settings = Settings.from_env()
    if args.out is not None:
        settings = settings.model_copy(update={"output_dir": args.out})
    logging.basicConfig(
        level=(args.log_level or settings.log_level).upper(),
        format="%(message)s",
        handlers=[RichHandler(rich_tracebacks=True, show_path=False)],
    )

    printer = None
    try:
        if args.command == "report":
            records = load_records(args.in_dir)
            for path in emit_report(records, args.in_dir, args.formats or ["csv"]):
                print(path)
            return 0

        config = load_config(args.config, args.overrides)
        printer = None if args.quiet else Printer()
        if args.command == "run":
            return _run(config, settings.output_dir, printer)
        if args.command == "grid":
            return _grid(config, args, settings, printer)

        out_dir = settings.output_dir / f"analyze-{args.kind}-{config.config_hash()[:12]}"
        for path in analyze(args.kind, config, out_dir, printer):
            print(path)
        return 0
    except ConfigError as e:
        logger.error("configuration error: %s", e)
        return EXIT_CONFIG
    except DivergenceError as e:
        logger.error("%s", e)
        return EXIT_DIVERGED
    except LabError as e:
        logger.error("%s", e)
        return 1
    finally:
        if printer is not None:
            printer.end()


if __name__ == "__main__":
    sys.exit(main())
