"""Experiment orchestration: multi-repetition runs, comparison tables,
the evolvability pipeline, and configuration scoring.

Artifacts are deterministic: the same configuration and seed produce
byte-identical CSV files regardless of the worker-pool size. Wall-clock
durations are reported on stderr only, never written into artifacts.
"""

from __future__ import annotations

import argparse
import csv
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .algorithms import ALGORITHM_IDS, ConfigError, EngineConfig, run_evolution
from .data import (
    DatasetError,
    DatasetNotFound,
    RawDataset,
    resolve_dataset,
    split_and_standardize,
)
from .evolvability import (
    DEFAULT_GENERATION_LIMITS,
    DEFAULT_SIZE_BANDS,
    band_label,
    collect_and_bucket,
    collect_solutions,
    estimate_frequencies,
    normalize_min_max,
    write_matrix_csv,
    write_trace_csv,
)
from .fitness import Evaluator
from .metrics_stats import summarize_runs
from .variation import Primitives

EXIT_MISSING_DATASET = 2
EXIT_INVALID_CONFIG = 3


@dataclass(frozen=True)
class RunConfig:
    dataset: str
    algorithm: str
    population_size: int = 500
    tournament_size: int = 2
    crossover_prob: float = 0.9
    generations: int = 100
    seed: int = 1
    repetitions: int = 30
    train_fraction: float = 0.75

    def engine_config(self) -> EngineConfig:
        return EngineConfig(
            algorithm=self.algorithm,
            population_size=self.population_size,
            tournament_size=self.tournament_size,
            crossover_prob=self.crossover_prob,
            generations=self.generations,
        ).validate()

    def validate(self) -> "RunConfig":
        self.engine_config()
        if self.repetitions < 1:
            raise ConfigError("repetitions must be at least 1")
        if not 0.0 < self.train_fraction < 1.0:
            raise ConfigError("train fraction must be in (0, 1)")
        if not self.dataset:
            raise ConfigError("a dataset name is required")
        return self


@dataclass
class RunRecord:
    config: RunConfig
    seed: int
    metrics: list
    archive: object
    duration_seconds: float


def run_single(config: RunConfig, raw: RawDataset, seed: int) -> RunRecord:
    """One repetition: fresh train/test split under `seed`, full evolution."""
    started = time.perf_counter()
    ds = split_and_standardize(raw, config.train_fraction, seed)
    state = run_evolution(config.engine_config(), ds, seed)
    return RunRecord(
        config=config,
        seed=seed,
        metrics=state.metrics,
        archive=state.archive,
        duration_seconds=time.perf_counter() - started,
    )


def _band_columns():
    return [f"prop_{band_label(b)}" for b in DEFAULT_SIZE_BANDS]


def write_run_csv(record: RunRecord, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["generation", "train_hv", "test_hv", "alpha"] + _band_columns())
        for row in record.metrics:
            alpha = "" if row.alpha is None else repr(float(row.alpha))
            writer.writerow(
                [row.generation, repr(row.train_hv), repr(row.test_hv), alpha]
                + [repr(float(p)) for p in row.proportions]
            )


def write_archive_csv(record: RunRecord, path):
    entries = sorted(record.archive.entries, key=lambda e: (e.size, e.error, e.expression))
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["expression", "size", "train_error", "test_error", "a", "b"])
        for e in entries:
            writer.writerow(
                [e.expression, e.size, repr(e.error), repr(e.test_error), repr(e.a), repr(e.b)]
            )


def write_config_echo(config: RunConfig, path):
    with open(path, "w", encoding="utf-8") as fh:
        for key, value in sorted(asdict(config).items()):
            fh.write(f"{key}={value}\n")


def _run_repetition(payload):
    config, out_dir, rep = payload
    raw = resolve_dataset(config.dataset, _run_repetition.data_dir)
    seed = config.seed + rep
    record = run_single(config, raw, seed)
    write_run_csv(record, Path(out_dir) / f"run_{rep}.csv")
    write_archive_csv(record, Path(out_dir) / f"archive_{rep}.csv")
    final = record.metrics[-1]
    return rep, seed, final.train_hv, final.test_hv, record.duration_seconds


_run_repetition.data_dir = None


def execute_run(config: RunConfig, out_dir, data_dir=None, jobs: int = 1) -> Path:
    """Run `repetitions` independent repetitions (seeds seed, seed+1, ...)
    and write run_<i>.csv, archive_<i>.csv, config.echo, aggregate.csv."""
    config.validate()
    resolve_dataset(config.dataset, data_dir)  # fail fast on a missing dataset
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_config_echo(config, out_dir / "config.echo")
    payloads = [(config, str(out_dir), rep) for rep in range(config.repetitions)]
    _run_repetition.data_dir = data_dir
    if jobs > 1:
        with ProcessPoolExecutor(
            max_workers=jobs,
            initializer=_set_worker_data_dir,
            initargs=(data_dir,),
        ) as pool:
            results = list(pool.map(_run_repetition, payloads))
    else:
        results = [_run_repetition(p) for p in payloads]
    results.sort()
    with open(out_dir / "aggregate.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["repetition", "seed", "final_train_hv", "final_test_hv"])
        for rep, seed, train_hv, test_hv, _ in results:
            writer.writerow([rep, seed, repr(train_hv), repr(test_hv)])
    total = sum(r[4] for r in results)
    print(f"completed {config.repetitions} repetitions in {total:.1f}s", file=sys.stderr)
    return out_dir


def _set_worker_data_dir(data_dir):
    _run_repetition.data_dir = data_dir


def read_config_echo(path) -> dict:
    out = {}
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{path}: expected key=value, got {line!r}")
        key, value = line.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def read_aggregate(path) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def compare_runs(run_dirs, reference: str, family_alpha: float = 0.05, family_size: int = 1):
    """Comparison rows (dataset, algorithm, split stats, marks) for completed
    run directories sharing a dataset and budget."""
    configs = []
    samples_train = {}
    samples_test = {}
    for d in run_dirs:
        d = Path(d)
        echo = read_config_echo(d / "config.echo")
        configs.append(echo)
        rows = read_aggregate(d / "aggregate.csv")
        alg = echo["algorithm"]
        samples_train[alg] = [float(r["final_train_hv"]) for r in rows]
        samples_test[alg] = [float(r["final_test_hv"]) for r in rows]
    datasets = {c["dataset"] for c in configs}
    budgets = {(c["generations"], c["population_size"]) for c in configs}
    if len(datasets) > 1:
        raise ConfigError(f"compared runs span multiple datasets: {sorted(datasets)}")
    if len(budgets) > 1:
        raise ConfigError(f"compared runs have mismatched budgets: {sorted(budgets)}")
    dataset = datasets.pop()
    if len(samples_train) == 1:
        alg, values = next(iter(samples_train.items()))
        values = np.asarray(values)
        test_values = np.asarray(samples_test[alg])
        return dataset, [
            {
                "algorithm": alg,
                "train_mean": float(values.mean()),
                "train_std": float(values.std(ddof=1)) if values.size > 1 else 0.0,
                "train_mark": "",
                "test_mean": float(test_values.mean()),
                "test_std": float(test_values.std(ddof=1)) if test_values.size > 1 else 0.0,
                "test_mark": "",
            }
        ]
    train_rows = {r.algorithm: r for r in summarize_runs(samples_train, reference, family_alpha, family_size)}
    test_rows = {r.algorithm: r for r in summarize_runs(samples_test, reference, family_alpha, family_size)}
    out = []
    for alg in samples_train:
        tr = train_rows[alg]
        te = test_rows[alg]
        out.append(
            {
                "algorithm": alg,
                "train_mean": tr.mean,
                "train_std": tr.std,
                "train_mark": tr.mark,
                "test_mean": te.mean,
                "test_std": te.std,
                "test_mark": te.mark,
            }
        )
    return dataset, out


def _cell(mean, std, mark):
    return f"{mean:.3f}({std:.3f}){mark}"


def write_comparison_csv(dataset: str, rows, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(
            ["dataset", "algorithm", "train_mean", "train_std", "train_mark", "train_cell",
             "test_mean", "test_std", "test_mark", "test_cell"]
        )
        for r in rows:
            writer.writerow(
                [dataset, r["algorithm"],
                 repr(r["train_mean"]), repr(r["train_std"]), r["train_mark"],
                 _cell(r["train_mean"], r["train_std"], r["train_mark"]),
                 repr(r["test_mean"]), repr(r["test_std"]), r["test_mark"],
                 _cell(r["test_mean"], r["test_std"], r["test_mark"])]
            )


def score_configurations(table: dict) -> tuple[dict, str]:
    """Rank configurations per dataset by HV (1 = best), average the ranks
    across datasets, and pick the configuration whose overall score is
    closest to the mean of all overall scores."""
    configs = sorted({c for c, _ in table})
    datasets = sorted({d for _, d in table})
    for c in configs:
        for d in datasets:
            if (c, d) not in table:
                raise ConfigError(f"configuration {c!r} has no value for dataset {d!r}")
    scores = {c: 0.0 for c in configs}
    for d in datasets:
        ranked = sorted(configs, key=lambda c: (-table[(c, d)], c))
        for position, c in enumerate(ranked, start=1):
            scores[c] += position
    overall = {c: scores[c] / len(datasets) for c in configs}
    target = sum(overall.values()) / len(configs)
    chosen = min(configs, key=lambda c: (abs(overall[c] - target), c))
    return overall, chosen


def run_evolvability_pipeline(
    dataset: str,
    out_dir,
    seed: int,
    generation_limits=DEFAULT_GENERATION_LIMITS,
    runs_per_limit: int = 100,
    population_size: int = 500,
    tournament_size: int = 2,
    crossover_prob: float = 0.9,
    samples: int = 100,
    trace_algorithm: str = "nsga2",
    trace_generations: int = 100,
    train_fraction: float = 0.75,
    data_dir=None,
) -> Path:
    """End-to-end measurement: collection runs, frequency matrices per
    generation limit (raw and min-max normalized), and the size-proportion
    trace of one full run of the designated algorithm."""
    raw = resolve_dataset(dataset, data_dir)
    ds = split_and_standardize(raw, train_fraction, seed)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    size_limits = [band[1] for band in DEFAULT_SIZE_BANDS]
    collected = collect_solutions(
        ds,
        seed,
        size_limits,
        runs_per_limit,
        generation_limits,
        population_size=population_size,
        tournament_size=tournament_size,
        crossover_prob=crossover_prob,
    )
    evaluator = Evaluator(ds)
    prims = Primitives.from_dataset(ds)
    for limit in generation_limits:
        buckets, threshold = collect_and_bucket(collected[limit])
        for operator in ("crossover", "mutation"):
            matrix = estimate_frequencies(
                buckets, threshold, operator, evaluator, prims, seed, samples=samples
            )
            write_matrix_csv(matrix, out_dir / f"{operator}_gen{limit}.csv")
            write_matrix_csv(
                normalize_min_max(matrix), out_dir / f"{operator}_gen{limit}_normalized.csv"
            )
    engine = EngineConfig(
        algorithm=trace_algorithm,
        population_size=population_size,
        tournament_size=tournament_size,
        crossover_prob=crossover_prob,
        generations=trace_generations,
    ).validate()
    state = run_evolution(engine, ds, seed)
    trace = [m.proportions for m in state.metrics]
    write_trace_csv(trace, out_dir / f"trace_{trace_algorithm}.csv")
    return out_dir


# ---------------------------------------------------------------------------
# Argument handling


def _load_config_file(path) -> dict:
    values = read_config_echo(path)
    return values


_INT_KEYS = {"population_size", "tournament_size", "generations", "seed", "repetitions"}
_FLOAT_KEYS = {"crossover_prob", "train_fraction"}


def _build_run_config(args) -> RunConfig:
    values = {}
    if args.config:
        values.update(_load_config_file(args.config))
    for key in (
        "dataset",
        "algorithm",
        "population_size",
        "tournament_size",
        "crossover_prob",
        "generations",
        "seed",
        "repetitions",
        "train_fraction",
    ):
        flag_value = getattr(args, key)
        if flag_value is not None:
            values[key] = flag_value
    try:
        for key in _INT_KEYS & values.keys():
            values[key] = int(values[key])
        for key in _FLOAT_KEYS & values.keys():
            values[key] = float(values[key])
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid configuration value: {exc}") from exc
    if "dataset" not in values or "algorithm" not in values:
        raise ConfigError("both a dataset and an algorithm are required")
    return RunConfig(**values).validate()


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="paretogp",
        description="Multi-objective GP for symbolic regression: run, compare, "
        "measure evolvability, and score configurations.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="execute repeated evolutionary runs")
    run_p.add_argument("--config", help="flat key=value config file; flags override")
    run_p.add_argument("--dataset")
    run_p.add_argument("--algorithm", help=f"one of {', '.join(ALGORITHM_IDS)}")
    run_p.add_argument("--population-size", dest="population_size")
    run_p.add_argument("--tournament-size", dest="tournament_size")
    run_p.add_argument("--crossover-prob", dest="crossover_prob")
    run_p.add_argument("--generations")
    run_p.add_argument("--seed")
    run_p.add_argument("--repetitions")
    run_p.add_argument("--train-fraction", dest="train_fraction")
    run_p.add_argument("--out", required=True, help="output directory")
    run_p.add_argument("--data-dir", dest="data_dir")
    run_p.add_argument("--jobs", type=int, default=1)

    cmp_p = sub.add_parser("compare", help="summarize completed run directories")
    cmp_p.add_argument("--runs", nargs="+", required=True)
    cmp_p.add_argument("--reference", required=True)
    cmp_p.add_argument("--family-alpha", type=float, default=0.05)
    cmp_p.add_argument("--family-size", type=int, default=1)
    cmp_p.add_argument("--out", required=True)

    evo_p = sub.add_parser("evolvability", help="run the evolvability measurement pipeline")
    evo_p.add_argument("--dataset", required=True)
    evo_p.add_argument("--seed", type=int, default=1)
    evo_p.add_argument("--gen-limits", default=",".join(str(g) for g in DEFAULT_GENERATION_LIMITS))
    evo_p.add_argument("--runs-per-limit", type=int, default=100)
    evo_p.add_argument("--population-size", type=int, default=500)
    evo_p.add_argument("--tournament-size", type=int, default=2)
    evo_p.add_argument("--crossover-prob", type=float, default=0.9)
    evo_p.add_argument("--samples", type=int, default=100)
    evo_p.add_argument("--trace-algorithm", default="nsga2")
    evo_p.add_argument("--trace-generations", type=int, default=100)
    evo_p.add_argument("--train-fraction", type=float, default=0.75)
    evo_p.add_argument("--data-dir", dest="data_dir")
    evo_p.add_argument("--out", required=True)

    stats_p = sub.add_parser(
        "stats",
        help="score configurations from a long-format HV table, or pivot "
        "stacked comparison CSVs into a datasets-by-algorithms table",
    )
    stats_p.add_argument("--table", help="CSV with configuration,dataset,hv")
    stats_p.add_argument(
        "--comparisons", nargs="+", help="comparison CSVs from the compare subcommand"
    )
    stats_p.add_argument("--split", choices=("train", "test"), default="train")
    stats_p.add_argument("--out", required=True)

    return parser


def _cmd_run(args) -> int:
    config = _build_run_config(args)
    execute_run(config, args.out, data_dir=args.data_dir, jobs=args.jobs)
    return 0


def _cmd_compare(args) -> int:
    dataset, rows = compare_runs(args.runs, args.reference, args.family_alpha, args.family_size)
    write_comparison_csv(dataset, rows, args.out)
    return 0


def _cmd_evolvability(args) -> int:
    limits = tuple(int(x) for x in args.gen_limits.split(",") if x)
    run_evolvability_pipeline(
        args.dataset,
        args.out,
        args.seed,
        generation_limits=limits,
        runs_per_limit=args.runs_per_limit,
        population_size=args.population_size,
        tournament_size=args.tournament_size,
        crossover_prob=args.crossover_prob,
        samples=args.samples,
        trace_algorithm=args.trace_algorithm,
        trace_generations=args.trace_generations,
        train_fraction=args.train_fraction,
        data_dir=args.data_dir,
    )
    return 0


def pivot_comparisons(paths, split: str = "train"):
    """Stack per-dataset comparison CSVs into rows = datasets, columns =
    algorithms, cells = 'mean(std)mark'."""
    algorithms = []
    by_dataset = {}
    for path in paths:
        with open(path, newline="", encoding="utf-8") as fh:
            for row in csv.DictReader(fh):
                dataset = row["dataset"]
                alg = row["algorithm"]
                if alg not in algorithms:
                    algorithms.append(alg)
                by_dataset.setdefault(dataset, {})[alg] = row[f"{split}_cell"]
    if not by_dataset:
        raise ConfigError("no comparison rows found")
    header = ["dataset"] + algorithms
    rows = [
        [dataset] + [cells.get(alg, "") for alg in algorithms]
        for dataset, cells in sorted(by_dataset.items())
    ]
    return header, rows


def _cmd_stats(args) -> int:
    if (args.table is None) == (args.comparisons is None):
        raise ConfigError("stats needs exactly one of --table or --comparisons")
    if args.comparisons:
        header, rows = pivot_comparisons(args.comparisons, args.split)
        with open(args.out, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(header)
            writer.writerows(rows)
        return 0
    table = {}
    with open(args.table, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            table[(row["configuration"], row["dataset"])] = float(row["hv"])
    if not table:
        raise ConfigError(f"{args.table}: no rows")
    overall, chosen = score_configurations(table)
    with open(args.out, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["configuration", "overall_score", "selected"])
        for config in sorted(overall):
            writer.writerow([config, repr(overall[config]), str(config == chosen).lower()])
    print(f"average-performance configuration: {chosen}", file=sys.stderr)
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    handlers = {
        "run": _cmd_run,
        "compare": _cmd_compare,
        "evolvability": _cmd_evolvability,
        "stats": _cmd_stats,
    }
    try:
        return handlers[args.command](args)
    except DatasetNotFound as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MISSING_DATASET
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MISSING_DATASET
    except (ConfigError, DatasetError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID_CONFIG


if __name__ == "__main__":
    sys.exit(main())
