"""Tests for the constrained evolutionary search and the reference searches."""

from __future__ import annotations

import itertools

import pytest
from pydantic import ValidationError

from driftnas.errors import InfeasibleSearch, SubspaceTooLarge
from driftnas.evaluation import SyntheticOracle
from driftnas.imc import RpuConfig
from driftnas.sampling import sample_lhs
from driftnas.search import (
    SearchConfig,
    SearchContext,
    exhaustive,
    init_population,
    random_search,
    run,
    step,
)
from driftnas.space import SearchSpace, arch_id, param_count
from driftnas.surrogate import OracleSurrogate
from tests.conftest import ConstantSurrogate


class TestSearchConfig:
    def test_odd_population(self):
        with pytest.raises(ValidationError, match="even"):
            SearchConfig(population_size=7)

    def test_growth_damping_for_small_budgets(self):
        assert SearchConfig(t_p=100_000).effective_probs().max_growth_prob == 0.2
        assert SearchConfig(t_p=1_000_000).effective_probs().max_growth_prob == 1.0
        assert SearchConfig().effective_probs().max_growth_prob == 1.0

    def test_defaults(self):
        cfg = SearchConfig()
        assert (cfg.population_size, cfg.n_iterations, cfg.t_avm) == (200, 200, 0.10)


class TestPopulation:
    def test_unconstrained_init_is_plain_lhs(self, constant_surrogate):
        cfg = SearchConfig(population_size=10, t_avm=None)
        population = init_population(cfg, constant_surrogate, seed=4)
        assert [ind.arch for ind in population] == sample_lhs(10, seed=4)

    def test_init_respects_t_p(self, constant_surrogate):
        cfg = SearchConfig(population_size=20, t_p=250_000)
        assert all(ind.params < 250_000 for ind in init_population(cfg, constant_surrogate, seed=0))

    def test_survivors_ordered_by_id_on_ties(self, constant_surrogate):
        cfg = SearchConfig(population_size=10, t_avm=None)
        population = init_population(cfg, constant_surrogate, seed=1)
        after = step(population, constant_surrogate, cfg, seed=1)
        assert len(after) == 10
        assert [ind.id for ind in after[:5]] == sorted(ind.id for ind in population)[:5]

    def test_population_of_two(self, shallow_surrogate):
        cfg = SearchConfig(population_size=2, n_iterations=3, t_avm=None)
        result = run(cfg, shallow_surrogate, seed=0)
        assert result.generations == 3
        assert len(result.top) == 2


class TestRun:
    def test_prefers_what_the_surrogate_prefers(self, shallow_surrogate):
        cfg = SearchConfig(population_size=20, n_iterations=30, t_avm=None)
        result = run(cfg, shallow_surrogate, seed=0)
        assert result.history[-1].mean_depth < result.initial.mean_depth
        best = [rec.best_score for rec in result.history]
        assert best == sorted(best)

    def test_zero_iterations(self, shallow_surrogate):
        result = run(SearchConfig(population_size=6, n_iterations=0), shallow_surrogate, seed=0)
        assert result.generations == 0
        assert result.history == []
        assert result.best_record is None and not result.verified

    def test_history_counts_mutations(self, shallow_surrogate):
        result = run(SearchConfig(population_size=10, n_iterations=5), shallow_surrogate, seed=2)
        assert len(result.history) == 5
        assert all(sum(rec.mutations.values()) > 0 for rec in result.history)
        assert [rec.generation for rec in result.history] == [1, 2, 3, 4, 5]

    def test_best_is_feasible(self, shallow_surrogate):
        cfg = SearchConfig(population_size=20, n_iterations=10, t_p=150_000)
        result = run(cfg, shallow_surrogate, seed=3)
        assert param_count(result.best_architecture) < 150_000
        assert result.best_prediction.feasible
        assert result.best_id == arch_id(result.best_architecture)

    def test_infeasible(self):
        cfg = SearchConfig(population_size=6, n_iterations=2, t_avm=0.1, cull_retries=2)
        with pytest.raises(InfeasibleSearch) as exc:
            run(cfg, ConstantSurrogate(avm=0.5), seed=0)
        assert exc.value.diagnostics["ever_feasible"] == 0
        assert exc.value.diagnostics["min_predicted_avm"] == 0.5

    def test_time_budget(self, shallow_surrogate):
        ticks = itertools.count(0, 10)
        cfg = SearchConfig(population_size=6, n_iterations=100, time_budget=25.0)
        result = run(cfg, shallow_surrogate, seed=0, clock=lambda: next(ticks))
        assert result.stopped_by == "time_budget"
        assert result.generations == 2

    def test_same_seed_same_result(self, tiny_surrogate, oracle):
        cfg = SearchConfig(population_size=10, n_iterations=4, surrogate_check_interval=2, tau_floor=1.0, t_avm=0.5)
        a = run(cfg, tiny_surrogate, oracle, seed=7)
        b = run(cfg, tiny_surrogate, oracle, seed=7)
        assert a.model_dump_json() == b.model_dump_json()

    def test_checkpoints_harvest_ground_truth(self, tiny_surrogate, oracle):
        cfg = SearchConfig(population_size=10, n_iterations=4, surrogate_check_interval=2, tau_floor=1.0, t_avm=0.5)
        result = run(cfg, tiny_surrogate, oracle, seed=7)
        assert [rec.tau is not None for rec in result.history] == [False, True, False, True]
        assert result.harvested_rows == len(result.harvested) > 0
        assert all(row.provenance == "search-harvested" for row in result.harvested)
        assert result.best_record is not None

    def test_wall_time_not_serialized(self, shallow_surrogate):
        result = run(SearchConfig(population_size=4, n_iterations=1), shallow_surrogate, seed=0)
        assert "wall_time" not in result.model_dump()
        assert "harvested" not in result.model_dump()


class TestReferenceSearches:
    def test_exhaustive_singleton(self, oracle):
        space = SearchSpace(
            oc0=(16, 16), ks0=(3,), m=(1, 1), r=(1, 1), b=(1, 1), ct=("B",), wf=(1, 1), allow_skip=False
        )
        (only,) = list(space.enumerate())
        assert exhaustive(space, oracle, n_trials=2) == only

    def test_exhaustive_cap(self, small_space, oracle):
        with pytest.raises(SubspaceTooLarge) as exc:
            exhaustive(small_space, oracle, cap=10)
        assert exc.value.cardinality == 48

    def test_exhaustive_infeasible(self, small_space, oracle):
        with pytest.raises(InfeasibleSearch):
            exhaustive(small_space, oracle, n_trials=2, t_p=10)

    def test_random_search(self, shallow_surrogate):
        cfg = SearchConfig(t_p=200_000)
        arch = random_search(cfg, shallow_surrogate, 30, seed=0)
        assert param_count(arch) < 200_000


@pytest.mark.slow
def test_matches_exhaustive_on_small_space(small_space):
    oracle = SyntheticOracle()
    ctx = SearchContext(space=small_space)
    cfg = SearchConfig(population_size=24, n_iterations=50, t_p=1e6, t_avm=0.10, verify_top_k=0)
    matches = 0
    for seed in range(20):
        model = OracleSurrogate(oracle, RpuConfig(), seed=seed, objective="ratio")
        found = run(cfg, model, ctx=ctx, seed=seed).best_architecture
        truth = exhaustive(small_space, oracle, seed=seed, t_p=1e6, t_avm=0.10)
        matches += found == truth
    assert matches >= 19


@pytest.mark.slow
def test_stricter_avm_threshold_culls_more():
    oracle = SyntheticOracle()
    for seed in range(3):
        culled = []
        for t_avm in (0.01, 0.03, 0.05):
            cfg = SearchConfig(population_size=20, n_iterations=10, t_avm=t_avm)
            model = OracleSurrogate(oracle, RpuConfig(), seed=seed)
            result = run(cfg, model, oracle, seed=seed)
            culled.append(result.initial.culled)
            assert result.verified
            assert result.best_record.avm < t_avm
        assert culled == sorted(culled, reverse=True)


@pytest.mark.slow
def test_evolution_favors_shallow_wide_networks():
    oracle = SyntheticOracle()
    improved = 0
    for seed in range(5):
        model = OracleSurrogate(oracle, RpuConfig(), seed=seed)
        result = run(SearchConfig(population_size=50, n_iterations=200), model, seed=seed)
        first, last = result.initial, result.history[-1]
        improved += last.mean_depth < first.mean_depth and last.mean_wf > first.mean_wf
    assert improved >= 4
