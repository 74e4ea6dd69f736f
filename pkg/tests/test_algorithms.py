"""Tests for the bound table, truncation variants, alpha machinery, SPEA2,
and the per-generation engine."""

import math

import numpy as np
import pytest

from paretogp import algorithms
from paretogp.algorithms import (
    AlphaState,
    BoundTable,
    ConfigError,
    EngineConfig,
    MissingParentSize,
    _rank_population,
    alpha_adapt,
    alpha_transform,
    alpha_transform_points,
    alpha_value,
    build_bound_table,
    evo_truncation,
    fill_missing_sizes,
    initialize_state,
    nsga2_truncation,
    pd_rank_adjust,
    run_evolution,
    run_generation,
    spea2_environmental_selection,
    spea2_fitness,
)
from paretogp.data import make_synthetic, split_and_standardize
from paretogp.expr import sqrt, const, to_string, var
from paretogp.moea_core import crowding_distance, fast_non_dominated_sort
from paretogp.variation import Individual


def mk(error, size, parent_size=None, tag=0.0):
    tree = const(tag) if size >= 1 else None
    for _ in range(size - 1):
        tree = sqrt(tree)
    return Individual(tree=tree, error=error, a=0.0, b=1.0, parent_size=parent_size)


@pytest.fixture(scope="module")
def ds():
    return split_and_standardize(make_synthetic(), 0.75, seed=1)


class TestNsga2Truncation:
    def test_exact_front_is_copied_verbatim(self):
        fronts = [[0, 1, 2]]
        crowd = np.array([np.inf, 1.0, np.inf])
        assert sorted(nsga2_truncation(fronts, crowd, 3)) == [0, 1, 2]

    def test_overflow_front_filtered_by_crowding(self):
        fronts = [[0, 1, 2], [3, 4, 5, 6, 7]]
        crowd = np.array([np.inf, 1.0, np.inf, 0.1, np.inf, 0.7, 0.3, 0.2])
        selected = nsga2_truncation(fronts, crowd, 4)
        assert set(selected[:3]) == {0, 1, 2}
        assert selected[3] == 4  # the crowding-best of front 2

    def test_matches_straight_line_simulation(self):
        rng = np.random.default_rng(3)
        for _ in range(20):
            pts = np.round(rng.uniform(0, 1, size=(40, 2)), 1)
            part = fast_non_dominated_sort(pts)
            crowd = np.zeros(len(pts))
            for front in part.fronts:
                crowd[front] = crowding_distance(pts[front])
            got = nsga2_truncation(part, crowd, 20)
            # Independent re-derivation of the rule.
            want = []
            for front in part.fronts:
                ordered = sorted(front, key=lambda i: (-crowd[i], i))
                if len(want) + len(front) <= 20:
                    want.extend(ordered)
                else:
                    want.extend(ordered[: 20 - len(want)])
                    break
            assert got == want


class TestFillMissingSizes:
    def test_equidistant_interpolation(self):
        assert fill_missing_sizes({1: 0.5, 3: 1.0}, 3)[2] == pytest.approx(0.75)

    def test_single_anchor_extrapolates_everywhere(self):
        filled = fill_missing_sizes({2: 0.4}, 4)
        assert filled == {1: 0.4, 2: 0.4, 3: 0.4, 4: 0.4}

    def test_linear_interpolation_at_thirds(self):
        filled = fill_missing_sizes({1: 0.0, 4: 0.9}, 4)
        assert filled[2] == pytest.approx(0.3)
        assert filled[3] == pytest.approx(0.6)

    def test_requires_an_anchor(self):
        with pytest.raises(ValueError):
            fill_missing_sizes({}, 5)


class TestBuildBoundTable:
    def test_worked_example(self):
        population = [mk(0.1, 1), mk(0.2, 2), mk(0.3, 3), mk(0.4, 2)]
        offspring = [
            mk(0.05, 1, parent_size=1),
            mk(0.30, 1, parent_size=1),
            mk(0.10, 1, parent_size=3),
            mk(0.20, 1, parent_size=3),
        ]
        table = build_bound_table(population, offspring)
        assert table.max_size == 3
        assert table.ratios[1] == pytest.approx(0.5)
        assert table.ratios[2] == pytest.approx(0.75)
        assert table.ratios[3] == pytest.approx(1.0)
        assert table.bounds[1] == pytest.approx(0.8889, abs=1e-4)
        assert table.bounds[2] == pytest.approx(1.3333, abs=1e-4)
        assert table.bounds[3] == pytest.approx(1.7778, abs=1e-4)

    def test_all_failures_fall_back_to_uniform(self):
        population = [mk(0.1, 1), mk(0.1, 2), mk(0.1, 3)]
        offspring = [mk(0.9, 1, parent_size=s) for s in (1, 2, 3)]
        table = build_bound_table(population, offspring)
        assert all(b == pytest.approx(1.0) for b in table.bounds.values())

    def test_single_size_takes_full_budget(self):
        population = [mk(0.5, 1), mk(0.6, 1)]
        offspring = [mk(0.1, 1, parent_size=1), mk(0.9, 1, parent_size=1)]
        table = build_bound_table(population, offspring)
        assert table.bounds == {1: pytest.approx(2.0)}

    def test_missing_parent_size_is_a_contract_violation(self):
        with pytest.raises(MissingParentSize):
            build_bound_table([mk(0.5, 1)], [mk(0.5, 1, parent_size=None)])

    def test_invariants_on_randomized_pairs(self):
        rng = np.random.default_rng(7)
        for _ in range(100):
            n = int(rng.integers(2, 30))
            population = [mk(float(rng.uniform()), int(rng.integers(1, 60))) for _ in range(n)]
            pop_sizes = [p.size for p in population]
            offspring = [
                mk(
                    float(rng.uniform()),
                    int(rng.integers(1, 60)),
                    parent_size=int(rng.choice(pop_sizes)),
                )
                for _ in range(n)
            ]
            table = build_bound_table(population, offspring)
            max_size = max(pop_sizes + [o.size for o in offspring])
            assert sorted(table.bounds) == list(range(1, max_size + 1))
            assert sum(table.bounds.values()) == pytest.approx(n, abs=1e-6)
            assert all(0.0 <= r <= 1.0 for r in table.ratios.values())


def evo_truncation_oracle(fronts, crowd, sizes, bounds, target):
    """Independent re-derivation: priority traversal with per-size counters,
    counter reset on an exhausted pass, plain priority fallback."""
    order = []
    for front in fronts:
        order.extend(sorted(front, key=lambda i: (-crowd[i], i)))
    picked = []
    used = set()
    counts = {}
    while len(picked) < target:
        newly = 0
        for i in order:
            if i in used or len(picked) >= target:
                continue
            s = sizes[i]
            if counts.get(s, 0) < bounds[s]:
                used.add(i)
                picked.append(i)
                counts[s] = counts.get(s, 0) + 1
                newly += 1
        if len(picked) >= target:
            break
        if newly == 0:
            for i in order:
                if i not in used:
                    used.add(i)
                    picked.append(i)
                    if len(picked) == target:
                        break
            break
        counts = {}
    return picked


class TestEvoTruncation:
    def _ranked(self, pts):
        part = fast_non_dominated_sort(pts)
        crowd = np.zeros(len(pts))
        for front in part.fronts:
            crowd[front] = crowding_distance(pts[front])
        return part, crowd

    def test_unbinding_bounds_reduce_to_nsga2(self):
        rng = np.random.default_rng(11)
        loose = BoundTable(
            bounds={s: math.inf for s in range(1, 101)}, ratios={}, max_size=100
        )
        for _ in range(100):
            n = int(rng.integers(4, 60))
            pts = np.round(rng.uniform(0, 1, size=(n, 2)), 1)
            sizes = [max(1, int(round(p[1] * 100))) for p in pts]
            part, crowd = self._ranked(pts)
            target = n // 2
            assert evo_truncation(part, crowd, sizes, loose, target) == nsga2_truncation(
                part, crowd, target
            )

    def test_zero_bound_sizes_enter_only_via_fallback(self):
        # Sizes 1 and 3 only; size 1 is banned, size 3 has the whole budget.
        pts = np.array([[0.1, 0.01], [0.2, 0.01], [0.3, 0.03], [0.4, 0.03], [0.5, 0.03]])
        sizes = [1, 1, 3, 3, 3]
        part, crowd = self._ranked(pts)
        table = BoundTable(bounds={1: 0.0, 2: 0.0, 3: 5.0}, ratios={}, max_size=3)
        selected = evo_truncation(part, crowd, sizes, table, 4)
        assert [sizes[i] for i in selected[:3]] == [3, 3, 3]
        assert sizes[selected[3]] == 1  # fallback admits a banned size

    def test_counter_reset_reuses_scarce_sizes(self):
        # Bound of 1 per size but only two sizes available: the reset loop
        # must top the selection up to the target.
        pts = np.array([[0.1, 0.01], [0.2, 0.01], [0.3, 0.02], [0.4, 0.02]])
        sizes = [1, 1, 2, 2]
        part, crowd = self._ranked(pts)
        table = BoundTable(bounds={1: 1.0, 2: 1.0}, ratios={}, max_size=2)
        selected = evo_truncation(part, crowd, sizes, table, 4)
        assert len(selected) == 4 and set(selected) == {0, 1, 2, 3}

    def test_matches_independent_oracle(self):
        rng = np.random.default_rng(13)
        for _ in range(30):
            n = 30
            pts = np.round(rng.uniform(0, 1, size=(n, 2)), 1)
            sizes = [int(rng.integers(1, 8)) for _ in range(n)]
            part, crowd = self._ranked(pts)
            bounds = {s: float(rng.uniform(0, 4)) for s in range(1, 8)}
            table = BoundTable(bounds=bounds, ratios={}, max_size=7)
            want = evo_truncation_oracle(part.fronts, crowd, sizes, bounds, 15)
            got = evo_truncation(part, crowd, sizes, table, 15)
            assert got == want

    def test_single_pass_respects_ceil_of_bound(self):
        pts = np.array([[e, 0.01] for e in (0.1, 0.2, 0.3, 0.4, 0.5, 0.6)])
        sizes = [1] * 6
        part, crowd = self._ranked(pts)
        table = BoundTable(bounds={1: 2.3}, ratios={}, max_size=1)
        selected = evo_truncation(part, crowd, sizes, table, 3)
        # One pass admits ceil(2.3) = 3 of size 1, and no more.
        assert len(selected) == 3


class TestPdRankAdjust:
    def test_duplicate_demoted_past_worst_front(self):
        inds = [mk(0.1, 1, tag=1.0), mk(0.1, 1, tag=1.0), mk(0.2, 1, tag=2.0)]
        pts = [(i.error, i.size_norm) for i in inds]
        part = fast_non_dominated_sort(pts)
        ranks, demoted = pd_rank_adjust([to_string(i.tree) for i in inds], part)
        assert ranks.tolist() == [1, 3, 2]
        assert demoted.tolist() == [1]

    def test_no_duplicates_means_no_change(self):
        inds = [mk(0.1, 1, tag=1.0), mk(0.2, 2, tag=2.0)]
        pts = [(i.error, i.size_norm) for i in inds]
        part = fast_non_dominated_sort(pts)
        ranks, demoted = pd_rank_adjust([to_string(i.tree) for i in inds], part)
        assert ranks.tolist() == part.ranks.tolist()
        assert demoted.size == 0

    def test_all_copies_keep_one_representative(self):
        inds = [mk(0.1, 1, tag=5.0) for _ in range(6)]
        pts = [(i.error, i.size_norm) for i in inds]
        part = fast_non_dominated_sort(pts)
        ranks, demoted = pd_rank_adjust([to_string(i.tree) for i in inds], part)
        assert ranks.tolist() == [1, 2, 2, 2, 2, 2]
        assert demoted.tolist() == [1, 2, 3, 4, 5]


class TestAlpha:
    def test_linear_endpoints(self):
        assert alpha_value(AlphaState("linear", horizon=10, generation=0)) == 0.0
        assert alpha_value(AlphaState("linear", horizon=10, generation=10)) == 1.0

    def test_cosine_midpoint(self):
        assert alpha_value(AlphaState("cosine", horizon=10, generation=5)) == pytest.approx(0.5)

    def test_sigmoid_midpoint(self):
        assert alpha_value(AlphaState("sigmoid", horizon=10, generation=5)) == pytest.approx(0.5)

    def test_adaptive_returns_stored_value(self):
        assert alpha_value(AlphaState("adaptive", horizon=10, alpha=0.37)) == 0.37

    def test_adapt_increases_when_small_outnumber_accurate(self):
        pop = [mk(0.9, 1), mk(0.8, 1), mk(0.7, 1), mk(0.1, 9)]
        state = alpha_adapt(AlphaState("adaptive", horizon=10, alpha=0.5), pop)
        assert state.alpha == pytest.approx(0.51)

    def test_adapt_decreases_on_balanced_counts(self):
        pop = [mk(0.1, 1), mk(0.2, 2), mk(0.3, 3), mk(0.4, 4)]
        state = alpha_adapt(AlphaState("adaptive", horizon=10, alpha=0.5), pop)
        assert state.alpha == pytest.approx(0.49)

    def test_adapt_clamps_at_one(self):
        pop = [mk(0.9, 1), mk(0.8, 1), mk(0.7, 1), mk(0.1, 9)]
        state = alpha_adapt(AlphaState("adaptive", horizon=10, alpha=1.0), pop)
        assert state.alpha == 1.0

    def test_transform_degenerates_at_zero(self):
        obj = alpha_transform(algorithms.ObjectiveVector(0.2, 0.6), 0.0)
        assert obj == (0.2, 0.6)

    def test_transform_is_pure_accuracy_at_one(self):
        obj = alpha_transform(algorithms.ObjectiveVector(0.2, 0.6), 1.0)
        assert obj == (0.2, 0.2)

    def test_transform_midpoint(self):
        obj = alpha_transform(algorithms.ObjectiveVector(0.2, 0.6), 0.5)
        assert obj == (0.2, pytest.approx(0.4))

    def test_zero_alpha_selection_matches_plain_nsga2(self):
        rng = np.random.default_rng(19)
        for _ in range(20):
            n = int(rng.integers(6, 40))
            inds_a = [mk(round(float(rng.uniform()), 1), int(rng.integers(1, 10))) for _ in range(n)]
            inds_b = [
                Individual(tree=i.tree, error=i.error, a=0.0, b=1.0) for i in inds_a
            ]
            fronts_a, crowd_a = _rank_population(inds_a, alpha=0.0)
            fronts_b, crowd_b = _rank_population(inds_b, alpha=None)
            target = n // 2
            assert nsga2_truncation(fronts_a, crowd_a, target) == nsga2_truncation(
                fronts_b, crowd_b, target
            )
            assert [i.rank for i in inds_a] == [i.rank for i in inds_b]


class TestSpea2:
    # Five points, one dominated pair: B=(0.3,0.5) dominates E=(0.4,0.6).
    POINTS = np.array([[0.1, 0.9], [0.3, 0.5], [0.5, 0.3], [0.9, 0.1], [0.4, 0.6]])

    def test_fitness_matches_hand_computation(self):
        fitness = spea2_fitness(self.POINTS)
        # Strengths: only B dominates anything (E); raw fitness: R_E = S_B = 1.
        # k = floor(sqrt(5)) = 2, so sigma is each point's 2nd-nearest distance.
        sigma = [
            math.sqrt(0.20),  # A: E at sqrt(0.18), then B at sqrt(0.20)
            math.sqrt(0.08),  # B: E at sqrt(0.02), then C at sqrt(0.08)
            math.sqrt(0.10),  # C: B at sqrt(0.08), then E at sqrt(0.10)
            math.sqrt(0.50),  # D: C at sqrt(0.20), then E at sqrt(0.50)
            math.sqrt(0.10),  # E: B at sqrt(0.02), then C at sqrt(0.10)
        ]
        want = [0.0, 0.0, 0.0, 0.0, 1.0]
        want = [r + 1.0 / (s + 2.0) for r, s in zip(want, sigma)]
        assert fitness == pytest.approx(want)

    def test_dominating_two_of_four_gives_strength_two(self):
        pts = np.array([[0.1, 0.1], [0.5, 0.5], [0.6, 0.6], [0.05, 0.9], [0.9, 0.05]])
        fitness = spea2_fitness(pts)
        # The first point dominates exactly two others, so each of those two
        # accumulates its strength.
        assert fitness[1] >= 2.0 and fitness[2] >= 2.0

    def test_nondominated_fitness_below_one(self):
        fitness = spea2_fitness(self.POINTS)
        assert all(fitness[i] < 1.0 for i in range(4))
        assert fitness[4] >= 1.0

    def test_truncation_removes_densest_tied_lowest_index(self):
        fitness = spea2_fitness(self.POINTS)
        chosen = spea2_environmental_selection(self.POINTS, fitness, capacity=3)
        assert chosen == [0, 2, 3]

    def test_padding_with_best_dominated(self):
        fitness = spea2_fitness(self.POINTS)
        chosen = spea2_environmental_selection(self.POINTS, fitness, capacity=5)
        assert sorted(chosen) == [0, 1, 2, 3, 4]


class TestEngine:
    def test_unknown_algorithm_rejected(self):
        with pytest.raises(ConfigError):
            EngineConfig(algorithm="foo", population_size=10).validate()

    def test_zero_generations_only_capture_initial_metrics(self, ds):
        cfg = EngineConfig(algorithm="nsga2", population_size=16, generations=0)
        state = run_evolution(cfg, ds, seed=2)
        assert state.generation == 0
        assert len(state.metrics) == 1
        assert len(state.population) == 16

    def test_runs_are_deterministic(self, ds):
        cfg = EngineConfig(algorithm="evonsga2", population_size=20, generations=4)
        a = run_evolution(cfg, ds, seed=3)
        b = run_evolution(cfg, ds, seed=3)
        assert [to_string(i.tree) for i in a.population] == [
            to_string(i.tree) for i in b.population
        ]
        assert [m.train_hv for m in a.metrics] == [m.train_hv for m in b.metrics]

    def test_unbinding_bounds_make_evonsga2_equal_nsga2(self, ds, monkeypatch):
        def loose_table(population, offspring):
            return BoundTable(
                bounds={s: math.inf for s in range(1, 101)}, ratios={}, max_size=100
            )

        monkeypatch.setattr(algorithms, "build_bound_table", loose_table)
        cfg_evo = EngineConfig(algorithm="evonsga2", population_size=24, generations=3)
        cfg_base = EngineConfig(algorithm="nsga2", population_size=24, generations=3)
        evo = run_evolution(cfg_evo, ds, seed=5)
        base = run_evolution(cfg_base, ds, seed=5)
        assert [to_string(i.tree) for i in evo.population] == [
            to_string(i.tree) for i in base.population
        ]

    def test_alpha_schedules_start_at_plain_nsga2(self, ds):
        # At the first generation the linear and cosine schedules are exactly
        # zero, so the selected population matches plain NSGA-II's.
        base = run_evolution(
            EngineConfig(algorithm="nsga2", population_size=20, generations=1), ds, seed=7
        )
        for alg in ("alpha-lin", "alpha-cos"):
            other = run_evolution(
                EngineConfig(algorithm=alg, population_size=20, generations=1), ds, seed=7
            )
            assert [to_string(i.tree) for i in other.population] == [
                to_string(i.tree) for i in base.population
            ]

    @pytest.mark.parametrize("algorithm", algorithms.ALGORITHM_IDS)
    def test_archive_hv_monotone_and_sizes_capped(self, ds, algorithm):
        cfg = EngineConfig(algorithm=algorithm, population_size=16, generations=5)
        for seed in range(2):
            state = run_evolution(cfg, ds, seed=seed)
            hvs = [m.train_hv for m in state.metrics]
            assert all(b >= a - 1e-12 for a, b in zip(hvs, hvs[1:]))
            assert all(m.max_tree_size <= 100 for m in state.metrics)
            assert len(state.population) == 16

    def test_metrics_expose_alpha_only_for_alpha_algorithms(self, ds):
        plain = run_evolution(
            EngineConfig(algorithm="nsga2", population_size=12, generations=1), ds, seed=1
        )
        alpha = run_evolution(
            EngineConfig(algorithm="alpha-lin", population_size=12, generations=2), ds, seed=1
        )
        assert all(m.alpha is None for m in plain.metrics)
        assert alpha.metrics[1].alpha == pytest.approx(0.0)
        assert alpha.metrics[2].alpha == pytest.approx(0.5)

    def test_initialize_state_seeds_archive(self, ds):
        cfg = EngineConfig(algorithm="nsga2", population_size=12, generations=0)
        state = initialize_state(cfg, ds, seed=9)
        assert len(state.archive) >= 1
        assert all(e.test_error is not None for e in state.archive.entries)

    def test_run_generation_increments_and_appends(self, ds):
        cfg = EngineConfig(algorithm="spea2", population_size=12, generations=0)
        state = initialize_state(cfg, ds, seed=4)
        run_generation(state)
        assert state.generation == 1
        assert len(state.metrics) == 2
        assert len(state.spea2_archive) == 12
