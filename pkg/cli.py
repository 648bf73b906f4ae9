"""
Experiment harness for hash-based simplification.
Runs the strategies over split seeds, writes per-run logs and models, and aggregates
paired relative changes against the no-simplification baseline.
"""
import argparse
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from pydantic import ValidationError

from config import settings
from data import Dataset, DatasetError, load_csv, make_synthetic, split, split_arrays, to_frame
from gp import evolve
from models import ConfigurationError, GpConfig, RunResult, RunSummary, Strategy

logger = logging.getLogger(__name__)

RUN_LOG_COLUMNS = ["generation", "best_val_mse", "n_simplifications", "elapsed_seconds"]
POPULATION_LOG_COLUMNS = RUN_LOG_COLUMNS + ["best_train_mse", "mean_size", "mean_complexity"]
SUMMARY_COLUMNS = list(RunSummary.model_fields)
DELTA_COLUMNS = {
    "size": "delta_size_pct",
    "complexity": "delta_complexity_pct",
    "test_mse": "delta_test_mse_pct",
}

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2


def parse_seeds(text: str) -> List[int]:
    """
    `3`, `0,1,5` or inclusive ranges such as `0..29` (combinable: `0..4,10`).
    Seeds are non-negative.
    """
    seeds: List[int] = []
    try:
        for part in text.split(","):
            part = part.strip()
            if ".." in part:
                low, high = (int(v) for v in part.split("..", 1))
                if high < low:
                    raise ValueError
                seeds.extend(range(low, high + 1))
            else:
                seeds.append(int(part))
        if any(seed < 0 for seed in seeds):
            raise ValueError
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid seed list {text!r}") from None
    return list(dict.fromkeys(seeds))


def parse_strategies(text: str) -> List[Strategy]:
    try:
        return list(dict.fromkeys(Strategy(s.strip()) for s in text.split(",")))
    except ValueError:
        choices = ", ".join(s.value for s in Strategy)
        raise argparse.ArgumentTypeError(f"strategies must be among: {choices}") from None


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description="Symbolic regression with hash-based simplification")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="Run strategies over seeds on a dataset")
    run.add_argument("--dataset", required=True, help="CSV file with a header row")
    run.add_argument("--target", default=None, help="Target column (default: last column)")
    strategies = run.add_mutually_exclusive_group()
    strategies.add_argument("--strategy", type=parse_strategies, dest="strategies")
    strategies.add_argument("--strategies", type=parse_strategies, dest="strategies")
    seeds = run.add_mutually_exclusive_group()
    seeds.add_argument("--seed", type=parse_seeds, dest="seeds")
    seeds.add_argument("--seeds", type=parse_seeds, dest="seeds")
    run.add_argument("--pop-size", type=int, default=80)
    run.add_argument("--generations", type=int, default=200)
    run.add_argument("--max-depth", type=int, default=7)
    run.add_argument("--max-size", type=int, default=128)
    run.add_argument("--tolerance", type=float, default=1e-2)
    run.add_argument("--hash-bits", type=int, default=256)
    run.add_argument("--adaptive-hash", action="store_true",
                     help="Double the hash size until terminals do not collide")
    run.add_argument("--max-variadic-arity", type=int, default=4)
    run.add_argument("--lm-max-iter", type=int, default=20)
    run.add_argument("--out-dir", default=settings.out_dir)
    run.add_argument("--truncate-hash", type=_positive_int, default=None,
                     help="Show only the first N key bits in table dumps")
    run.add_argument("--min-class-size", type=_positive_int, default=1,
                     help="Dump only table classes with at least N members")
    run.add_argument("--no-timing", action="store_true",
                     help="Write zero timings so reruns are byte-identical")

    agg = sub.add_parser("aggregate", help="Pair runs by seed and compute relative changes")
    agg.add_argument("--results-dir", default=settings.out_dir)

    synth = sub.add_parser("synth", help="Write the synthetic benchmark y = x_1*x_2 + sin(x_3)")
    synth.add_argument("--out", required=True)
    synth.add_argument("--n", type=_positive_int, default=300)
    synth.add_argument("--seed", type=int, default=0)
    synth.add_argument("--noise", type=float, default=0.0)
    return parser


def run_dir_for(out_dir: Path, dataset: str, strategy: str, seed: int) -> Path:
    return Path(out_dir) / dataset / strategy / f"seed_{seed}"


def write_run(result: RunResult, run_dir: Path) -> RunSummary:
    """Write run_log.csv, population_log.csv, summary.csv, final_model.txt, table_dump.txt."""
    run_dir.mkdir(parents=True, exist_ok=True)
    log = pd.DataFrame([row.model_dump() for row in result.log], columns=POPULATION_LOG_COLUMNS)
    log[RUN_LOG_COLUMNS].to_csv(run_dir / "run_log.csv", index=False)
    log.to_csv(run_dir / "population_log.csv", index=False)

    summary = RunSummary.from_result(result)
    pd.DataFrame([summary.model_dump()], columns=SUMMARY_COLUMNS).to_csv(
        run_dir / "summary.csv", index=False
    )
    (run_dir / "final_model.txt").write_text(result.final_model + "\n", encoding="utf-8")
    (run_dir / "table_dump.txt").write_text(result.table_dump, encoding="utf-8")
    return summary


def execute_run(dataset: Dataset, strategy: Strategy, config: GpConfig, out_dir: str,
                truncate_hash: Optional[int] = None, min_class_size: int = 1) -> RunSummary:
    """Split with the run seed, evolve, and write the run's files."""
    splits = split_arrays(dataset, split(dataset, config.seed))
    logger.info(f"Starting {dataset.name} / {strategy.value} / seed {config.seed}")
    result = evolve(config, splits, strategy, dataset.name, truncate_hash, min_class_size)
    summary = write_run(result, run_dir_for(Path(out_dir), dataset.name, strategy.value, config.seed))
    logger.info(
        f"Finished {dataset.name} / {strategy.value} / seed {config.seed}: "
        f"test mse {result.test_mse:.6g}, size {result.size}, "
        f"{result.total_simplifications} simplifications"
    )
    return summary


def _execute_job(job: Tuple) -> RunSummary:
    return execute_run(*job)


def run(args: argparse.Namespace) -> int:
    """Execute every (strategy, seed) pair; returns an exit code."""
    try:
        dataset = load_csv(args.dataset, args.target)
    except DatasetError as e:
        logger.error(f"Dataset error: {e}")
        return EXIT_FAILURE

    try:
        base = GpConfig(
            pop_size=args.pop_size, generations=args.generations, max_depth=args.max_depth,
            max_size=args.max_size, tolerance=args.tolerance, hash_bits=args.hash_bits,
            adaptive_hash=args.adaptive_hash,
            max_hash_bits=max(8192, args.hash_bits),
            max_variadic_arity=args.max_variadic_arity, lm_max_iter=args.lm_max_iter,
            record_timing=not args.no_timing,
        )
    except ValidationError as e:
        logger.error(f"Invalid configuration: {e}")
        return EXIT_USAGE

    strategies = args.strategies or [Strategy.BOTTOM_UP]
    seeds = args.seeds or [0]
    jobs = [
        (dataset, strategy, base.model_copy(update={"seed": seed}), args.out_dir,
         args.truncate_hash, args.min_class_size)
        for strategy in strategies for seed in seeds
    ]
    workers = min(settings.threads or 1, len(jobs))
    logger.info(f"{len(jobs)} runs on {dataset.name} with {workers} worker(s)")

    try:
        if workers > 1:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                summaries = list(pool.map(_execute_job, jobs))
        else:
            summaries = [_execute_job(job) for job in jobs]
    except (DatasetError, ConfigurationError) as e:
        logger.error(f"Run failed: {e}")
        return EXIT_FAILURE

    logger.info(f"Wrote {len(summaries)} runs under {args.out_dir}")
    return EXIT_OK


def _relative_change(value: float, baseline: float) -> float:
    if baseline == 0 or not np.isfinite(baseline) or not np.isfinite(value):
        return float("nan")
    return 100.0 * (value - baseline) / baseline


def _read_summary(path: Path) -> pd.DataFrame:
    # "none" is a strategy name, not a missing value
    return pd.read_csv(path, keep_default_na=False, na_values=["nan"])


def aggregate(results_dir) -> Tuple[pd.DataFrame, pd.DataFrame]:
    """
    Pair runs by (dataset, seed) against strategy `none` and write summary_all.csv,
    relative_change.csv, medians.csv and convergence.csv into `results_dir`.

    Returns:
        (all summaries, relative changes)
    """
    results_dir = Path(results_dir)
    files = sorted(results_dir.rglob("summary.csv"))
    if not files:
        raise DatasetError(f"no summary.csv files under {results_dir}")
    summaries = pd.concat([_read_summary(f) for f in files], ignore_index=True)
    summaries = summaries.sort_values(["dataset", "strategy", "seed"], kind="stable")
    summaries = summaries.reset_index(drop=True)
    summaries.to_csv(results_dir / "summary_all.csv", index=False)

    baseline = summaries[summaries["strategy"] == Strategy.NONE.value]
    baseline = baseline.set_index(["dataset", "seed"])
    rows, unmatched = [], []
    for record in summaries[summaries["strategy"] != Strategy.NONE.value].itertuples(index=False):
        key = (record.dataset, record.seed)
        if key not in baseline.index:
            unmatched.append(f"{record.dataset}/{record.strategy}/seed_{record.seed}")
            continue
        base = baseline.loc[key]
        row = {"dataset": record.dataset, "seed": record.seed, "strategy": record.strategy}
        for metric, column in DELTA_COLUMNS.items():
            row[column] = _relative_change(float(getattr(record, metric)), float(base[metric]))
        rows.append(row)
    if unmatched:
        logger.warning(f"Skipping runs without a baseline pair: {', '.join(unmatched)}")
    if any(np.isnan(v) for row in rows for k, v in row.items() if k in DELTA_COLUMNS.values()):
        logger.warning("Some relative changes are undefined (zero or non-finite baseline)")

    changes = pd.DataFrame(rows, columns=["dataset", "seed", "strategy", *DELTA_COLUMNS.values()])
    changes.to_csv(results_dir / "relative_change.csv", index=False)

    medians = summaries.groupby("strategy")[["size", "complexity", "test_mse", "wall_seconds"]]
    medians = medians.median().add_prefix("median_")
    if not changes.empty:
        deltas = changes.groupby("strategy")[list(DELTA_COLUMNS.values())].median()
        medians = medians.join(deltas.add_prefix("median_"), how="left")
    medians.reset_index().to_csv(results_dir / "medians.csv", index=False)

    logs = []
    for f in files:
        run_log = f.parent / "run_log.csv"
        if run_log.exists():
            meta = _read_summary(f).iloc[0]
            frame = pd.read_csv(run_log)
            frame["dataset"], frame["strategy"] = meta["dataset"], meta["strategy"]
            logs.append(frame)
    if logs:
        convergence = (
            pd.concat(logs, ignore_index=True)
            .groupby(["dataset", "strategy", "generation"])[["best_val_mse", "n_simplifications"]]
            .mean()
            .add_prefix("mean_")
            .reset_index()
        )
        convergence.to_csv(results_dir / "convergence.csv", index=False)

    logger.info(f"Aggregated {len(summaries)} runs, {len(changes)} paired comparisons")
    return summaries, changes


def synth(args: argparse.Namespace) -> int:
    dataset = make_synthetic(args.n, args.seed, args.noise)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    to_frame(dataset).to_csv(out, index=False)
    logger.info(f"Wrote {dataset.n_samples} synthetic rows to {out}")
    return EXIT_OK


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        # argparse exits 2 on usage errors, 0 on --help
        return int(e.code or 0)
    logging.basicConfig(
        level=settings.log_level.upper(),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )

    if args.command == "run":
        return run(args)
    if args.command == "aggregate":
        try:
            aggregate(args.results_dir)
        except DatasetError as e:
            logger.error(f"Aggregation failed: {e}")
            return EXIT_FAILURE
        return EXIT_OK
    return synth(args)


if __name__ == "__main__":
    sys.exit(main())
