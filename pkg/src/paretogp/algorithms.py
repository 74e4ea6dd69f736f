"""The eight evolutionary algorithms and the per-generation engine.

All algorithms share the same skeleton (offspring creation, evaluation,
archive updates, merge, non-dominated sorting, truncation); they differ in
how objectives are transformed before sorting and in the truncation step:

- nsga2          plain rank/crowding truncation
- evonsga2       truncation bounded per solution size by success ratios
- nsga2pd        duplicate expressions demoted to the worst rank
- spea2          strength-Pareto fitness with its own environmental archive
- alpha-*        dominance on (error, alpha*error + (1-alpha)*size) with a
                 linear / cosine / sigmoid / population-adaptive alpha
"""

from __future__ import annotations

import math
from bisect import bisect_left
from dataclasses import dataclass, field, replace

import numpy as np

from .evolvability import DEFAULT_SIZE_BANDS, band_proportions
from .fitness import Evaluator, ObjectiveVector
from .metrics_stats import hypervolume_2d
from .moea_core import (
    Archive,
    FrontPartition,
    crowding_distance,
    fast_non_dominated_sort,
)
from .seeds import substream
from .expr import to_string
from .variation import (
    Individual,
    Primitives,
    make_offspring_population,
    ramped_half_and_half,
    subtree_crossover,
    subtree_mutation,
)

ALGORITHM_IDS = (
    "nsga2",
    "evonsga2",
    "nsga2pd",
    "spea2",
    "alpha-lin",
    "alpha-cos",
    "alpha-sig",
    "alpha-adaptive",
)

_ALPHA_SCHEDULES = {
    "alpha-lin": "linear",
    "alpha-cos": "cosine",
    "alpha-sig": "sigmoid",
    "alpha-adaptive": "adaptive",
}


class ConfigError(ValueError):
    pass


class MissingParentSize(ValueError):
    pass


@dataclass(frozen=True)
class EngineConfig:
    algorithm: str
    population_size: int
    tournament_size: int = 2
    crossover_prob: float = 0.9
    generations: int = 100
    adaptive_alpha_step: float = 0.01

    def validate(self):
        if self.algorithm not in ALGORITHM_IDS:
            raise ConfigError(f"unknown algorithm {self.algorithm!r}; expected one of {ALGORITHM_IDS}")
        if self.population_size < 2:
            raise ConfigError("population size must be at least 2")
        if self.tournament_size < 1:
            raise ConfigError("tournament size must be at least 1")
        if not 0.0 <= self.crossover_prob <= 1.0:
            raise ConfigError("crossover probability must be in [0, 1]")
        if self.generations < 0:
            raise ConfigError("generation budget must be non-negative")
        return self


# ---------------------------------------------------------------------------
# Truncation selection


def _front_lists(fronts):
    return fronts.fronts if isinstance(fronts, FrontPartition) else fronts


def priority_order(fronts, crowding) -> list[int]:
    """Indices in rank order, descending crowding within each rank; stable
    by input index on crowding ties."""
    order = []
    for front in _front_lists(fronts):
        order.extend(sorted(front, key=lambda i: -crowding[i]))
    return order


def nsga2_truncation(fronts, crowding, target: int) -> list[int]:
    """Copy whole fronts in rank order; break the overflowing front by
    descending crowding distance. Output is in priority order."""
    selected = []
    for front in _front_lists(fronts):
        if len(selected) + len(front) <= target:
            selected.extend(sorted(front, key=lambda i: -crowding[i]))
        else:
            order = sorted(front, key=lambda i: -crowding[i])
            selected.extend(order[: target - len(selected)])
            break
    return selected


@dataclass
class BoundTable:
    """Per-size selection budgets; `ratios` keeps the filled success ratios
    before normalization (their sum times the factor gives `bounds`)."""

    bounds: dict
    ratios: dict
    max_size: int


def fill_missing_sizes(observed: dict, max_size: int) -> dict:
    """Complete a partial size->ratio map over 1..max_size: interior gaps
    interpolate linearly between the nearest observed neighbors, boundary
    gaps copy the nearest observed ratio."""
    if not observed:
        raise ValueError("need at least one observed ratio")
    anchors = sorted(observed)
    out = {}
    for s in range(1, max_size + 1):
        if s in observed:
            out[s] = float(observed[s])
            continue
        pos = bisect_left(anchors, s)
        lower = anchors[pos - 1] if pos > 0 else None
        upper = anchors[pos] if pos < len(anchors) else None
        if lower is None:
            out[s] = float(observed[upper])
        elif upper is None:
            out[s] = float(observed[lower])
        else:
            w = (s - lower) / (upper - lower)
            out[s] = float((1.0 - w) * observed[lower] + w * observed[upper])
    return out


def build_bound_table(population, offspring) -> BoundTable:
    """Estimate per-size selection budgets from offspring success ratios.

    For each offspring, the recipient parent's size is credited with an
    attempt, and with a success iff the offspring beats the median error of
    the current population. Ratios are completed over 1..max_size and
    normalized to sum to the population size.
    """
    max_size = max(ind.size for ind in population)
    for ind in offspring:
        max_size = max(max_size, ind.size)
    median_error = float(np.median([ind.error for ind in population]))
    attempts = {}
    successes = {}
    for off in offspring:
        s = off.parent_size
        if s is None:
            raise MissingParentSize("offspring without parent size cannot enter the bound table")
        attempts[s] = attempts.get(s, 0) + 1
        if off.error < median_error:
            successes[s] = successes.get(s, 0) + 1
    observed = {s: successes.get(s, 0) / n for s, n in attempts.items()}
    ratios = fill_missing_sizes(observed, max_size)
    total = sum(ratios.values())
    budget = float(len(population))
    if total <= 0.0:
        bounds = {s: budget / max_size for s in range(1, max_size + 1)}
    else:
        factor = budget / total
        bounds = {s: r * factor for s, r in ratios.items()}
    return BoundTable(bounds=bounds, ratios=ratios, max_size=max_size)


def evo_truncation(fronts, crowding, sizes, table: BoundTable, target: int) -> list[int]:
    """Truncation bounded per size: traverse in priority order selecting an
    individual of size s only while its running count stays strictly below
    the bound. An exhausted traversal resets the counters and starts over on
    the remaining individuals; a pass without progress falls back to plain
    priority order so the result always has exactly `target` members."""
    order = priority_order(fronts, crowding)
    taken = np.zeros(len(order), dtype=bool)
    chosen = []
    counts = {}
    while len(chosen) < target:
        progress = False
        for i in order:
            if taken[i]:
                continue
            s = sizes[i]
            if counts.get(s, 0.0) < table.bounds.get(s, 0.0):
                taken[i] = True
                chosen.append(i)
                counts[s] = counts.get(s, 0.0) + 1.0
                progress = True
                if len(chosen) == target:
                    return chosen
        if not progress:
            for i in order:
                if not taken[i]:
                    taken[i] = True
                    chosen.append(i)
                    if len(chosen) == target:
                        return chosen
            break
        counts = {}
    return chosen


def pd_rank_adjust(expressions, partition: FrontPartition):
    """Demote duplicate expressions to one past the worst rank; the first
    occurrence of each expression keeps its true rank.

    Returns (adjusted ranks, indices of demoted individuals).
    """
    ranks = partition.ranks.copy()
    worst = len(partition.fronts) + 1
    seen = set()
    demoted = []
    for i, text in enumerate(expressions):
        if text in seen:
            ranks[i] = worst
            demoted.append(i)
        else:
            seen.add(text)
    return ranks, np.asarray(demoted, dtype=np.int64)


def _fronts_from_ranks(ranks) -> list:
    n_fronts = int(ranks.max())
    fronts = [[] for _ in range(n_fronts)]
    for i, r in enumerate(ranks):
        fronts[r - 1].append(int(i))
    return fronts


# ---------------------------------------------------------------------------
# Alpha-dominance machinery


@dataclass(frozen=True)
class AlphaState:
    schedule: str  # linear | cosine | sigmoid | adaptive
    horizon: int
    generation: int = 0
    alpha: float = 0.0


def alpha_value(state: AlphaState) -> float:
    """Schedule value at state.generation out of state.horizon."""
    if state.schedule == "adaptive":
        return state.alpha
    if state.horizon <= 0:
        return 0.0
    t = state.generation / state.horizon
    if state.schedule == "linear":
        return t
    if state.schedule == "cosine":
        return (1.0 - math.cos(math.pi * t)) / 2.0
    if state.schedule == "sigmoid":
        return 1.0 / (1.0 + math.exp(-10.0 * (t - 0.5)))
    raise ValueError(f"unknown alpha schedule {state.schedule!r}")


def alpha_adapt(state: AlphaState, population, step: float = 0.01) -> AlphaState:
    """Nudge alpha toward accuracy pressure when small solutions outnumber
    accurate ones (strictly), toward size pressure otherwise."""
    sizes = np.array([ind.size for ind in population])
    errors = np.array([ind.error for ind in population])
    small = int(np.sum(sizes <= np.median(sizes)))
    accurate = int(np.sum(errors <= np.median(errors)))
    delta = step if small > accurate else -step
    return replace(state, alpha=float(np.clip(state.alpha + delta, 0.0, 1.0)))


def alpha_transform(obj: ObjectiveVector, alpha: float) -> ObjectiveVector:
    return ObjectiveVector(obj.error, alpha * obj.error + (1.0 - alpha) * obj.size_norm)


def alpha_transform_points(pts: np.ndarray, alpha: float) -> np.ndarray:
    out = np.array(pts, dtype=np.float64, copy=True)
    out[:, 1] = alpha * pts[:, 0] + (1.0 - alpha) * pts[:, 1]
    return out


# ---------------------------------------------------------------------------
# SPEA2


def spea2_fitness(points: np.ndarray):
    """Canonical strength-Pareto fitness: raw dominated-strength sum plus a
    k-th nearest neighbor density term, k = floor(sqrt(#points))."""
    pts = np.asarray(points, dtype=np.float64)
    n = pts.shape[0]
    e = pts[:, 0]
    s = pts[:, 1]
    no_worse = (e[:, None] <= e[None, :]) & (s[:, None] <= s[None, :])
    strictly = (e[:, None] < e[None, :]) | (s[:, None] < s[None, :])
    dom = no_worse & strictly
    strength = dom.sum(axis=1).astype(np.float64)
    raw = (strength[:, None] * dom).sum(axis=0)
    diff = pts[:, None, :] - pts[None, :, :]
    dist = np.sqrt((diff**2).sum(axis=2))
    np.fill_diagonal(dist, np.inf)
    dist_sorted = np.sort(dist, axis=1)
    k = int(math.floor(math.sqrt(n)))
    k = max(1, min(k, n - 1))
    sigma = dist_sorted[:, k - 1]
    density = 1.0 / (sigma + 2.0)
    return raw + density


def _spea2_truncate(points: np.ndarray, members: list, capacity: int) -> list:
    """Iteratively drop the member with the lexicographically smallest
    nearest-neighbor distance profile (ties resolved by lowest index).

    Works on squared distances (order-preserving), computed once.
    """
    members = list(members)
    pts = points[members]
    # Explicit differences keep the matrix exactly symmetric, so conceptual
    # ties stay ties and the lowest-index rule is meaningful.
    diff = pts[:, None, :] - pts[None, :, :]
    dist2 = (diff**2).sum(axis=2)
    np.fill_diagonal(dist2, np.inf)
    alive = list(range(len(members)))
    while len(alive) > capacity:
        sub = dist2[np.ix_(alive, alive)]
        nearest = sub.min(axis=1)
        tied = np.flatnonzero(nearest == nearest.min())
        if tied.size == 1:
            pos = int(tied[0])
        else:
            profiles = np.sort(sub[tied], axis=1)
            pos = int(tied[np.lexsort(profiles.T[::-1])[0]])
        del alive[pos]
    return [members[i] for i in alive]


def spea2_environmental_selection(points: np.ndarray, fitness: np.ndarray, capacity: int) -> list[int]:
    """Fill the archive with non-dominated individuals (fitness < 1),
    truncating by nearest-neighbor removal when over capacity and padding
    with the best dominated individuals when under."""
    nondominated = [int(i) for i in np.flatnonzero(fitness < 1.0)]
    if len(nondominated) > capacity:
        return _spea2_truncate(points, nondominated, capacity)
    if len(nondominated) < capacity:
        dominated = [int(i) for i in np.argsort(fitness, kind="stable") if fitness[i] >= 1.0]
        nondominated = nondominated + dominated[: capacity - len(nondominated)]
    return nondominated


def _spea2_mate(archive, fitness, rng):
    i = int(rng.integers(len(archive)))
    j = int(rng.integers(len(archive)))
    if fitness[i] != fitness[j]:
        return archive[i] if fitness[i] < fitness[j] else archive[j]
    return archive[i] if rng.random() < 0.5 else archive[j]


def spea2_generation(population, spea2_archive, config: EngineConfig, prims, evaluator, rng):
    """One SPEA2 step: fitness over population plus archive, environmental
    selection into the next archive, then a fresh offspring population mated
    from the archive by binary tournaments on fitness."""
    union = list(population) + list(spea2_archive)
    pts = np.array([(ind.error, ind.size_norm) for ind in union])
    fitness = spea2_fitness(pts)
    chosen = spea2_environmental_selection(pts, fitness, capacity=config.population_size)
    archive = [union[i] for i in chosen]
    archive_fitness = fitness[chosen]
    offspring = []
    for _ in range(config.population_size):
        if rng.random() < config.crossover_prob:
            recipient = _spea2_mate(archive, archive_fitness, rng)
            donor = _spea2_mate(archive, archive_fitness, rng)
            offspring.append(subtree_crossover(recipient, donor, evaluator, rng))
        else:
            recipient = _spea2_mate(archive, archive_fitness, rng)
            offspring.append(subtree_mutation(recipient, prims, evaluator, rng))
    return offspring, archive


# ---------------------------------------------------------------------------
# Engine


@dataclass
class GenerationMetrics:
    generation: int
    train_hv: float
    test_hv: float
    proportions: tuple
    alpha: float | None
    max_tree_size: int


@dataclass
class RunState:
    config: EngineConfig
    seed: int
    population: list
    archive: Archive
    prims: Primitives
    evaluator: Evaluator
    generation: int = 0
    alpha_state: AlphaState | None = None
    spea2_archive: list = field(default_factory=list)
    metrics: list = field(default_factory=list)


def _rank_population(individuals, alpha=None, penalize_duplicates=False):
    """Sort, assign rank/crowding in place, and return the front lists."""
    pts = np.array([(ind.error, ind.size_norm) for ind in individuals])
    if alpha is not None:
        pts = alpha_transform_points(pts, alpha)
    partition = fast_non_dominated_sort(pts)
    crowd = np.zeros(len(individuals))
    for front in partition.fronts:
        crowd[front] = crowding_distance(pts[front])
    ranks = partition.ranks
    fronts = partition.fronts
    if penalize_duplicates:
        texts = [to_string(ind.tree) for ind in individuals]
        ranks, demoted = pd_rank_adjust(texts, partition)
        if demoted.size:
            crowd[demoted] = 0.0
            fronts = _fronts_from_ranks(ranks)
    for i, ind in enumerate(individuals):
        ind.rank = int(ranks[i])
        ind.crowding = float(crowd[i])
    return fronts, crowd


def _archive_add(state: RunState, individual):
    entry = state.archive.insert(individual)
    if entry is not None:
        entry.test_error = state.evaluator.test_error(individual.tree, entry.a, entry.b)


def _current_alpha(state: RunState) -> float | None:
    if state.alpha_state is None:
        return None
    return alpha_value(state.alpha_state)


def _capture_metrics(state: RunState):
    sizes = [ind.size for ind in state.population]
    state.metrics.append(
        GenerationMetrics(
            generation=state.generation,
            train_hv=hypervolume_2d(state.archive.training_points()),
            test_hv=hypervolume_2d(state.archive.test_points()),
            proportions=band_proportions(sizes, DEFAULT_SIZE_BANDS),
            alpha=_current_alpha(state),
            max_tree_size=max(sizes),
        )
    )


def initialize_state(config: EngineConfig, ds, seed: int) -> RunState:
    config.validate()
    evaluator = Evaluator(ds)
    prims = Primitives.from_dataset(ds)
    state = RunState(
        config=config,
        seed=seed,
        population=[],
        archive=Archive(),
        prims=prims,
        evaluator=evaluator,
    )
    if config.algorithm in _ALPHA_SCHEDULES:
        state.alpha_state = AlphaState(
            schedule=_ALPHA_SCHEDULES[config.algorithm], horizon=config.generations
        )
    rng = substream(seed, "init")
    state.population = ramped_half_and_half(config.population_size, prims, evaluator, rng)
    for ind in state.population:
        _archive_add(state, ind)
    if config.algorithm != "spea2":
        _rank_population(
            state.population,
            alpha=_current_alpha(state),
            penalize_duplicates=config.algorithm == "nsga2pd",
        )
    _capture_metrics(state)
    return state


def run_generation(state: RunState) -> RunState:
    """Advance one generation and capture its metrics."""
    config = state.config
    g = state.generation + 1
    rng = substream(state.seed, "gen", g)

    if state.alpha_state is not None:
        if state.alpha_state.schedule == "adaptive":
            state.alpha_state = alpha_adapt(
                state.alpha_state, state.population, step=config.adaptive_alpha_step
            )
        else:
            state.alpha_state = replace(state.alpha_state, generation=g - 1)

    if config.algorithm == "spea2":
        offspring, state.spea2_archive = spea2_generation(
            state.population, state.spea2_archive, config, state.prims, state.evaluator, rng
        )
        for ind in offspring:
            _archive_add(state, ind)
        state.population = offspring
    else:
        offspring = make_offspring_population(
            state.population,
            config.population_size,
            config.crossover_prob,
            config.tournament_size,
            state.prims,
            state.evaluator,
            rng,
        )
        for ind in offspring:
            _archive_add(state, ind)
        merged = state.population + offspring
        table = None
        if config.algorithm == "evonsga2":
            table = build_bound_table(state.population, offspring)
        fronts, crowd = _rank_population(
            merged,
            alpha=_current_alpha(state),
            penalize_duplicates=config.algorithm == "nsga2pd",
        )
        if table is not None:
            sizes = [ind.size for ind in merged]
            selected = evo_truncation(fronts, crowd, sizes, table, config.population_size)
        else:
            selected = nsga2_truncation(fronts, crowd, config.population_size)
        state.population = [merged[i] for i in selected]

    state.generation = g
    _capture_metrics(state)
    return state


def run_evolution(config: EngineConfig, ds, seed: int) -> RunState:
    """Initialize and run the configured generation budget."""
    state = initialize_state(config, ds, seed)
    for _ in range(config.generations):
        run_generation(state)
    return state
