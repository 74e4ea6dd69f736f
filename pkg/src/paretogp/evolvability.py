"""Size-bucketed evolvability measurement.

Workflow: collect relatively accurate solutions of many sizes by running
size-capped single-objective GP repeatedly, bucket them by size, then
estimate how often parents from each bucket produce offspring whose error
beats the 90th-accuracy-percentile threshold of the pooled collection.
The crossover matrix is ordered (parent bucket, donor bucket) and is not
symmetric: offspring are clones of the parent with one transplanted donor
subtree.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .fitness import Evaluator
from .seeds import substream
from .variation import (
    Individual,
    Primitives,
    ramped_half_and_half,
    subtree_crossover,
    subtree_mutation,
)

# Exponential size bands partitioning 1..100.
DEFAULT_SIZE_BANDS = ((1, 1), (2, 3), (4, 7), (8, 15), (16, 31), (32, 63), (64, 100))

DEFAULT_GENERATION_LIMITS = (10, 20, 30, 40)

ABSENT_SENTINEL = "NA"


def band_label(band) -> str:
    lo, hi = band
    return str(lo) if lo == hi else f"{lo}-{hi}"


def band_of(size: int, bands=DEFAULT_SIZE_BANDS):
    for band in bands:
        if band[0] <= size <= band[1]:
            return band
    raise ValueError(f"size {size} falls outside the configured bands")


def band_proportions(sizes, bands=DEFAULT_SIZE_BANDS) -> tuple:
    """Fraction of `sizes` falling into each band; sums to 1."""
    counts = {band: 0 for band in bands}
    for s in sizes:
        counts[band_of(s, bands)] += 1
    total = len(sizes)
    if total == 0:
        raise ValueError("cannot compute proportions of an empty population")
    return tuple(counts[band] / total for band in bands)


def size_proportion_trace(size_lists, bands=DEFAULT_SIZE_BANDS) -> list[tuple]:
    """Per-generation band proportions for a sequence of populations."""
    return [band_proportions(sizes, bands) for sizes in size_lists]


def _tournament_on_error(pop, tournament_size, rng):
    winner = pop[int(rng.integers(len(pop)))]
    for _ in range(tournament_size - 1):
        challenger = pop[int(rng.integers(len(pop)))]
        if challenger.error < winner.error:
            winner = challenger
        elif challenger.error == winner.error and rng.random() < 0.5:
            winner = challenger
    return winner


def _size_capped_gp(
    evaluator: Evaluator,
    prims: Primitives,
    max_size: int,
    generations: int,
    rng,
    snapshot_at,
    population_size: int,
    tournament_size: int,
    crossover_prob: float,
) -> dict:
    """Single-objective GP on error alone; returns the best-ever individual
    at each requested generation snapshot."""
    pop = ramped_half_and_half(population_size, prims, evaluator, rng, max_size=max_size)
    best = min(pop, key=lambda ind: ind.error)
    snapshots = {}
    if 0 in snapshot_at:
        snapshots[0] = best
    for g in range(1, generations + 1):
        offspring = []
        for _ in range(population_size):
            if rng.random() < crossover_prob:
                recipient = _tournament_on_error(pop, tournament_size, rng)
                donor = _tournament_on_error(pop, tournament_size, rng)
                offspring.append(subtree_crossover(recipient, donor, evaluator, rng, max_size))
            else:
                recipient = _tournament_on_error(pop, tournament_size, rng)
                offspring.append(subtree_mutation(recipient, prims, evaluator, rng, max_size))
        pop = offspring
        for ind in pop:
            if ind.error < best.error:
                best = ind
        if g in snapshot_at:
            snapshots[g] = best
    return snapshots


def run_size_capped_gp(
    ds,
    max_size: int,
    generations: int,
    rng,
    population_size: int = 500,
    tournament_size: int = 2,
    crossover_prob: float = 0.9,
) -> Individual:
    """Best individual found by one size-capped single-objective GP run."""
    evaluator = Evaluator(ds)
    prims = Primitives.from_dataset(ds)
    snapshots = _size_capped_gp(
        evaluator,
        prims,
        max_size,
        generations,
        rng,
        snapshot_at={generations},
        population_size=population_size,
        tournament_size=tournament_size,
        crossover_prob=crossover_prob,
    )
    return snapshots[generations]


def collect_solutions(
    ds,
    master_seed: int,
    size_limits,
    runs_per_limit: int,
    generation_limits=DEFAULT_GENERATION_LIMITS,
    population_size: int = 500,
    tournament_size: int = 2,
    crossover_prob: float = 0.9,
) -> dict:
    """Best-found solutions per generation limit, pooled over all size
    limits and repetitions.

    A run truncated at an earlier generation is the same run under the same
    seed, so each repetition runs once to the largest limit and snapshots
    the best-so-far at every requested limit.
    """
    evaluator = Evaluator(ds)
    prims = Primitives.from_dataset(ds)
    horizon = max(generation_limits)
    collected = {g: [] for g in generation_limits}
    for limit in size_limits:
        for rep in range(runs_per_limit):
            rng = substream(master_seed, f"collect-{limit}", rep)
            snapshots = _size_capped_gp(
                evaluator,
                prims,
                limit,
                horizon,
                rng,
                snapshot_at=set(generation_limits),
                population_size=population_size,
                tournament_size=tournament_size,
                crossover_prob=crossover_prob,
            )
            for g in generation_limits:
                collected[g].append(snapshots[g])
    return collected


def accuracy_percentile_error(errors, accuracy_percentile: float = 90.0) -> float:
    """Error value at the nearest-rank percentile of accuracy.

    The 90th percentile of accuracy is the 10th percentile of error; with
    nearest-rank that is the ceil(0.1 * N)-th smallest error.
    """
    values = sorted(float(e) for e in errors)
    if not values:
        raise ValueError("need at least one collected solution")
    rank = math.ceil((100.0 - accuracy_percentile) / 100.0 * len(values))
    rank = min(max(rank, 1), len(values))
    return values[rank - 1]


def collect_and_bucket(collected, bands=DEFAULT_SIZE_BANDS):
    """Bucket collected solutions by size; returns (buckets, acc90 error)."""
    buckets = {band: [] for band in bands}
    for ind in collected:
        buckets[band_of(ind.size, bands)].append(ind)
    threshold = accuracy_percentile_error([ind.error for ind in collected])
    return buckets, threshold


@dataclass
class EvolvabilityMatrix:
    """Success frequencies; rows are parent buckets, columns donor buckets
    for crossover or the single mutation column. NaN marks absent cells."""

    operator: str  # 'crossover' | 'mutation'
    bands: tuple
    values: np.ndarray


def estimate_frequencies(
    buckets,
    threshold_error: float,
    operator: str,
    evaluator: Evaluator,
    prims: Primitives,
    master_seed: int,
    samples: int = 100,
    bands=DEFAULT_SIZE_BANDS,
) -> EvolvabilityMatrix:
    """Frequency of offspring beating the error threshold, per parent bucket
    (and donor bucket for crossover). Empty buckets yield absent cells."""
    if operator not in ("crossover", "mutation"):
        raise ValueError(f"unknown operator {operator!r}")
    n = len(bands)
    cols = n if operator == "crossover" else 1
    values = np.full((n, cols), np.nan)
    for r, parent_band in enumerate(bands):
        parents = buckets.get(parent_band, [])
        if not parents:
            continue
        if operator == "mutation":
            rng = substream(master_seed, "freq-mutation", r)
            wins = 0
            for _ in range(samples):
                parent = parents[int(rng.integers(len(parents)))]
                child = subtree_mutation(parent, prims, evaluator, rng)
                wins += child.error < threshold_error
            values[r, 0] = wins / samples
        else:
            for c, donor_band in enumerate(bands):
                donors = buckets.get(donor_band, [])
                if not donors:
                    continue
                rng = substream(master_seed, "freq-crossover", r * n + c)
                wins = 0
                for _ in range(samples):
                    parent = parents[int(rng.integers(len(parents)))]
                    donor = donors[int(rng.integers(len(donors)))]
                    child = subtree_crossover(parent, donor, evaluator, rng)
                    wins += child.error < threshold_error
                values[r, c] = wins / samples
    return EvolvabilityMatrix(operator=operator, bands=tuple(bands), values=values)


def normalize_min_max(matrix: EvolvabilityMatrix) -> EvolvabilityMatrix:
    """Rescale present cells to [0, 1]; a constant matrix maps to zeros."""
    values = matrix.values.copy()
    present = ~np.isnan(values)
    if present.any():
        vmin = values[present].min()
        vmax = values[present].max()
        if vmax > vmin:
            values[present] = (values[present] - vmin) / (vmax - vmin)
        else:
            values[present] = 0.0
    return EvolvabilityMatrix(operator=matrix.operator, bands=matrix.bands, values=values)


def write_matrix_csv(matrix: EvolvabilityMatrix, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        if matrix.operator == "crossover":
            writer.writerow(["parent_bucket"] + [f"donor_{band_label(b)}" for b in matrix.bands])
        else:
            writer.writerow(["parent_bucket", "frequency"])
        for r, band in enumerate(matrix.bands):
            row = [band_label(band)]
            for v in matrix.values[r]:
                row.append(ABSENT_SENTINEL if np.isnan(v) else repr(float(v)))
            writer.writerow(row)


def write_trace_csv(trace, path, bands=DEFAULT_SIZE_BANDS):
    """Long-format proportion trace: one row per (generation, band)."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["generation", "band", "proportion"])
        for g, proportions in enumerate(trace):
            for band, p in zip(bands, proportions):
                writer.writerow([g, band_label(band), repr(float(p))])
