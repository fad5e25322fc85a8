"""
Command-line surface.

    python -m src.cli run      --config PATH [--seed N] [--out DIR] [--densify MINUTES]
    python -m src.cli batch    --config PATH [--runs N] [--seed N] [--workers N] [--name NAME] [--out DIR]
    python -m src.cli validate [--scenario PATH] [--out DIR]
    python -m src.cli compare  --baseline RESULT --experiment RESULT [--exclusion place|run] [--allow-partial] [--out DIR]
    python -m src.cli cv       --config PATH [--grid 10,50,100,250,500] [--repetitions N] [--seed N] [--workers N] [--name NAME] [--out DIR]
    python -m src.cli plot     --input DIR [--input DIR ...] [--out DIR]

Exit codes: 0 success, 1 usage or input error, 2 runtime error.
"""

import sys
import os
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

import argparse
import logging
import shlex
from collections import OrderedDict
from pathlib import Path
from typing import List, Optional

import dotenv
import pandas as pd

from src.aerosol import infection_probability
from src.batch import (
    BatchLog,
    BatchRunError,
    ExperimentResult,
    cv_convergence,
    cv_spread,
    run_batch,
    write_manifest,
)
from src.config import ConfigError, load_config
from src.engine import run_day
from src.entities import SimulationError
from src.history import densify, export_csv, export_json
from src.metrics import compute_metrics, metrics_frames
from src.plotting import (
    plot_activity_density,
    plot_building_densities,
    plot_cv_convergence,
    plot_distribution_ridges,
    plot_place_timelines,
    plot_validation,
)
from src.settings import SimulatorSettings
from src.stats import ComparisonError, compare_experiments
from src.validation import export_validation, load_scenario, run_validation

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_RUNTIME = 2


class _Parser(argparse.ArgumentParser):
    """argparse exits with 2 on bad flags; usage errors here are 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _positive_int(value: str) -> int:
    number = int(value)
    if number < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {value}")
    return number


def _run_grid(value: str) -> List[int]:
    try:
        grid = [int(v) for v in value.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated run counts, got {value}")
    if not grid or grid != sorted(set(grid)) or grid[0] < 2:
        raise argparse.ArgumentTypeError(f"run counts must be ascending, distinct and at least 2, got {value}")
    return grid


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="src.cli", description="Indoor air agent simulator")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    run = sub.add_parser("run", help="simulate one day and export its history")
    run.add_argument("--config", required=True)
    run.add_argument("--seed", type=int)
    run.add_argument("--out")
    run.add_argument("--densify", type=_positive_int, metavar="MINUTES")

    batch = sub.add_parser("batch", help="run S_run seeded replicates")
    batch.add_argument("--config", required=True)
    batch.add_argument("--runs", type=_positive_int, default=500)
    batch.add_argument("--seed", type=int, default=0)
    batch.add_argument("--workers", type=_positive_int)
    batch.add_argument("--name")
    batch.add_argument("--out")

    validate = sub.add_parser("validate", help="scripted two-person office CO2 series")
    validate.add_argument("--scenario")
    validate.add_argument("--out")

    compare = sub.add_parser("compare", help="compare an experiment result with the baseline")
    compare.add_argument("--baseline", required=True)
    compare.add_argument("--experiment", required=True)
    compare.add_argument("--exclusion", choices=("place", "run"), default="place")
    compare.add_argument("--allow-partial", action="store_true")
    compare.add_argument("--out")

    cv = sub.add_parser("cv", help="coefficient of variation against the run count")
    cv.add_argument("--config", required=True)
    cv.add_argument("--grid", type=_run_grid, default=[10, 50, 100, 250, 500])
    cv.add_argument("--repetitions", type=_positive_int, default=20)
    cv.add_argument("--seed", type=int, default=0)
    cv.add_argument("--workers", type=_positive_int)
    cv.add_argument("--name")
    cv.add_argument("--out")

    plot = sub.add_parser("plot", help="draw SVG charts from exported tables")
    plot.add_argument("--input", action="append", required=True)
    plot.add_argument("--out")
    return parser


def _manifest_line(argv: List[str]) -> str:
    return "manifest: python -m src.cli " + " ".join(shlex.quote(a) for a in argv)


# ----------------------------------------------------------------------
# Commands
# ----------------------------------------------------------------------

def cmd_run(args, settings: SimulatorSettings) -> int:
    config = load_config(args.config)
    seed = args.seed if args.seed is not None else config.options.seed
    out_dir = settings.resolve_output_dir(args.out)

    history = run_day(config, seed)
    metrics = compute_metrics(history)

    export_json(history, out_dir / "history.json")
    export_csv(history, out_dir)
    frames = metrics_frames(metrics)
    for level, frame in frames.items():
        frame.to_csv(out_dir / f"{level}_metrics.csv", index=False)
    summary = frames["persons"].copy()
    if not summary.empty:
        summary["infection_probability"] = summary["final_quanta"].map(infection_probability)
    summary.to_csv(out_dir / "person_summary.csv", index=False)
    if args.densify:
        densify(history, args.densify).to_csv(out_dir / "densified.csv", index=False)

    activities = {p.name: p.activity for p in history.places}
    categories = OrderedDict()
    for m in metrics.places:
        entry = categories.setdefault(activities[m.place], [0.0, 0.0])
        entry[0] = max(entry[0], m.max_co2)
        entry[1] = max(entry[1], m.max_quanta)

    print(f"\n{'='*60}")
    print(f"Run seed={seed}  people={len(history.persons)}  places={len(history.places)}")
    print(f"{'='*60}")
    for activity, (max_co2, max_quanta) in sorted(categories.items(), key=lambda kv: -kv[1][0]):
        print(f"  {activity:<16} max CO2 {max_co2:8.1f} ppm   max quanta {max_quanta:.3e}")
    print(f"  building         CO2 {metrics.building.max_co2:8.1f} ppm   "
          f"mean inhaled quanta {metrics.building.mean_quanta:.3e}")
    print(f"✓ Outputs written to {out_dir}")
    print(_manifest_line(["run", "--config", args.config, "--seed", str(seed), "--out", str(out_dir)]
                         + (["--densify", str(args.densify)] if args.densify else [])))
    return EXIT_OK


def cmd_batch(args, settings: SimulatorSettings) -> int:
    config = load_config(args.config)
    name = args.name or Path(args.config).stem
    workers = args.workers or settings.workers
    out_root = settings.resolve_output_dir(args.out)
    out_dir = out_root / name

    result = run_batch(config, args.runs, args.seed, workers, name=name)
    result.save(out_dir / "result.json")
    result.write_tables(out_dir)
    write_manifest(out_dir / "manifest.json", name, args.config, args.runs, args.seed, workers)
    log = BatchLog(out_root / "batch_history.jsonl")
    entry = log.log_batch(result, config_path=args.config, parallelism=workers)
    for other in log.conflicts(entry):
        logger.warning(
            f"Batch {name} at {other['timestamp']} had the same config, S_run and seed "
            f"but result digest {other['result_digest'][:12]}"
        )

    building = result.building_samples()
    print(f"\n{'='*60}")
    print(f"Batch {name}: S_run={result.s_run}  base seed={result.base_seed}  workers={workers}")
    print(f"{'='*60}")
    print(f"  building max CO2      mean {building['max_co2'].mean():8.1f} ppm")
    print(f"  building mean quanta  mean {building['mean_quanta'].mean():.3e}")
    print(f"  result digest         {entry['result_digest']}")
    print(f"✓ Outputs written to {out_dir}")
    print(_manifest_line(["batch", "--config", args.config, "--runs", str(args.runs),
                          "--seed", str(args.seed), "--workers", str(workers),
                          "--name", name, "--out", str(out_root)]))
    log.print_summary(name)
    return EXIT_OK


def cmd_validate(args, settings: SimulatorSettings) -> int:
    scenario = load_scenario(args.scenario)
    out_dir = settings.resolve_output_dir(args.out)
    frame = run_validation(scenario)
    csv_path = export_validation(frame, out_dir)
    plot_validation(csv_path, out_dir / "validation.svg")
    print(f"✓ Validation series ({len(frame)} points, start {frame['co2'].iloc[0]:.1f} ppm, "
          f"max {frame['co2'].max():.1f} ppm) written to {out_dir}")
    print(_manifest_line(["validate", "--out", str(out_dir)]
                         + (["--scenario", args.scenario] if args.scenario else [])))
    return EXIT_OK


def cmd_compare(args, settings: SimulatorSettings) -> int:
    baseline = ExperimentResult.load(args.baseline)
    experiment = ExperimentResult.load(args.experiment)
    out_dir = settings.resolve_output_dir(args.out)
    report = compare_experiments(baseline, experiment, args.exclusion, args.allow_partial)
    report.save(out_dir)
    print(report.format_table())
    if report.only_baseline or report.only_experiment:
        print(f"\nOnly in {baseline.name}: {', '.join(report.only_baseline) or '-'}")
        print(f"Only in {experiment.name}: {', '.join(report.only_experiment) or '-'}")
    print(f"\n✓ {len(report.significant_rows)} significant of {len(report.rows)}; written to {out_dir}")
    return EXIT_OK


def cmd_cv(args, settings: SimulatorSettings) -> int:
    config = load_config(args.config)
    name = args.name or Path(args.config).stem
    workers = args.workers or settings.workers
    out_root = settings.resolve_output_dir(args.out)
    out_dir = out_root / name

    curves = cv_convergence(config, args.seed, args.grid, args.repetitions, workers)
    spread = cv_spread(curves)
    out_dir.mkdir(parents=True, exist_ok=True)
    curves.to_csv(out_dir / "cv_convergence.csv", index=False)
    spread.to_csv(out_dir / "cv_spread.csv", index=False)
    plot_cv_convergence(out_dir / "cv_convergence.csv", out_dir / "cv_convergence.svg")

    print(f"\n{'='*60}")
    print(f"CV convergence {name}: grid={','.join(map(str, args.grid))}  repetitions={args.repetitions}")
    print(f"{'='*60}")
    for (level, parameter), rows in spread.groupby(["level", "parameter"], sort=False):
        values = "  ".join(f"{int(s)}:{v:.4f}" for s, v in zip(rows["s_run"], rows["spread"]))
        print(f"  {level:<10} {parameter:<12} {values}")
    print(f"✓ Outputs written to {out_dir}")
    print(_manifest_line(["cv", "--config", args.config, "--grid", ",".join(map(str, args.grid)),
                          "--repetitions", str(args.repetitions), "--seed", str(args.seed),
                          "--workers", str(workers), "--name", name, "--out", str(out_root)]))
    return EXIT_OK


def cmd_plot(args, settings: SimulatorSettings) -> int:
    inputs = [Path(p) for p in args.input]
    for directory in inputs:
        if not directory.is_dir():
            raise FileNotFoundError(f"input directory not found: {directory}")
    out_dir = Path(args.out) if args.out else inputs[0]
    written = []
    building = OrderedDict()
    for directory in inputs:
        prefix = directory.name if len(inputs) > 1 else ""
        tag = f"{prefix}_" if prefix else ""
        if (directory / "places.csv").exists():
            source = directory / "densified.csv"
            if not source.exists():
                source = directory / "places.csv"
            written.append(plot_place_timelines(source, out_dir / f"{tag}timelines.svg"))
        if (directory / "persons.csv").exists():
            written.append(plot_activity_density(directory / "persons.csv", out_dir / f"{tag}activity.svg"))
        if (directory / "places_metrics.csv").exists() and (directory / "result.json").exists():
            for parameter in ("max_co2", "max_quanta"):
                written.append(plot_distribution_ridges(
                    directory / "places_metrics.csv", out_dir / f"{tag}ridges_{parameter}.svg", parameter
                ))
        if (directory / "building_metrics.csv").exists() and (directory / "result.json").exists():
            building[directory.name] = directory / "building_metrics.csv"
        if (directory / "validation.csv").exists():
            written.append(plot_validation(directory / "validation.csv", out_dir / f"{tag}validation.svg"))
        if (directory / "cv_convergence.csv").exists():
            written.append(plot_cv_convergence(directory / "cv_convergence.csv", out_dir / f"{tag}cv_convergence.svg"))
    if building:
        written.append(plot_building_densities(building, out_dir / "building_densities.svg"))
    if not written:
        print(f"No exported tables found in {', '.join(str(p) for p in inputs)}")
        return EXIT_USAGE
    for path in written:
        print(f"✓ {path}")
    return EXIT_OK


COMMANDS = {
    "run": cmd_run,
    "batch": cmd_batch,
    "validate": cmd_validate,
    "compare": cmd_compare,
    "cv": cmd_cv,
    "plot": cmd_plot,
}


def main(argv: Optional[List[str]] = None) -> int:
    dotenv.load_dotenv()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        settings = SimulatorSettings()
    except EnvironmentError as e:
        print(f"❌ {e}", file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(
        level=settings.log_level,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    logger.debug(f"Settings: {settings.status()}")

    try:
        return COMMANDS[args.command](args, settings)
    except FileNotFoundError as e:
        print(f"❌ Missing input: {e.filename or e}", file=sys.stderr)
        return EXIT_USAGE
    except ConfigError as e:
        print(f"❌ Invalid configuration: {e}", file=sys.stderr)
        return EXIT_USAGE
    except ComparisonError as e:
        print(f"❌ Cannot compare: {e}", file=sys.stderr)
        return EXIT_RUNTIME
    except (SimulationError, BatchRunError) as e:
        print(f"❌ Simulation failed: {e}", file=sys.stderr)
        return EXIT_RUNTIME
    except OSError as e:
        print(f"❌ I/O error: {e}", file=sys.stderr)
        return EXIT_RUNTIME
    except ValueError as e:
        print(f"❌ Invalid input: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
