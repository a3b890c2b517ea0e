"""Constrained evolutionary search driven by a surrogate.

Maximizes the surrogate score subject to ``param_count < t_p`` and
``predicted AVM < t_avm``:

  1. Latin-hypercube initial population under t_p; individuals predicted to
     violate t_avm are redrawn inside their hypercube cell.
  2. Each generation keeps the top half (feasible first, then score, then
     arch_id) and refills the other half with one mutant per survivor slot.
  3. Every `surrogate_check_interval` generations the population is
     evaluated with the ground-truth backend; the surrogate is fine-tuned on
     the harvested rows when its Kendall tau drops below `tau_floor`.
  4. The top feasible candidates are verified with the backend before the
     winner is returned.

All randomness is keyed on (seed, generation, slot), so a run does not
depend on worker count.
"""

from __future__ import annotations

import logging
import time
from collections import Counter
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field
from typing import Any, Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from driftnas.dataset import Dataset, DatasetRow, rows_from_records
from driftnas.errors import InfeasibleSearch, SubspaceTooLarge
from driftnas.evaluation import Backend, EvalRecord, evaluate_many
from driftnas.imc import RpuConfig
from driftnas.models import DEFAULT_TRIALS, SCHEMA_VERSION
from driftnas.mutation import MutationProbs, mutate_traced
from driftnas.sampling import draw_in_cell, resample_within_budget, sample_lhs_cells
from driftnas.seeding import derive_rng
from driftnas.space import FULL_SPACE, Architecture, SearchSpace, arch_id, depth, from_dict, param_count
from driftnas.surrogate import Surrogate, SurrogateEnsemble, fine_tune, kendall_tau, objective_ratio
from driftnas.zoo import CIFAR10, Task

logger = logging.getLogger(__name__)

DEFAULT_EXHAUSTIVE_CAP = 10_000
TOP_CANDIDATES = 10


class SearchConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    population_size: int = Field(default=200, ge=2)
    n_iterations: int = Field(default=200, ge=0)
    time_budget: float | None = Field(default=None, gt=0, description="Seconds; stop when either limit is hit")
    t_p: float | None = Field(default=None, gt=0, description="Parameter threshold; None = unconstrained")
    t_avm: float | None = Field(default=0.10, gt=0, description="AVM threshold; None = unconstrained")
    mutation_probs: MutationProbs = MutationProbs()
    lessen_growth_below: float = Field(default=200_000, ge=0)
    lessened_growth_prob: float = Field(default=0.2, ge=0.0, le=1.0)
    surrogate_check_interval: int = Field(default=100, ge=1)
    tau_floor: float = Field(default=0.9, ge=-1.0, le=1.0)
    cull_retries: int = Field(default=50, ge=0)
    verify_top_k: int = Field(default=5, ge=0)
    seed: int | None = None

    @model_validator(mode="after")
    def _even_population(self) -> SearchConfig:
        if self.population_size % 2:
            raise ValueError(f"population_size must be even, got {self.population_size}")
        return self

    def effective_probs(self) -> MutationProbs:
        """Mutation probabilities with the growth limit applied for small parameter budgets."""
        probs = self.mutation_probs
        if self.t_p is not None and self.t_p <= self.lessen_growth_below:
            return probs.model_copy(update={"max_growth_prob": min(probs.max_growth_prob, self.lessened_growth_prob)})
        return probs


@dataclass(frozen=True, slots=True)
class SearchContext:
    """What the search runs against: space, task, hardware and evaluation settings."""

    space: SearchSpace = FULL_SPACE
    task: Task = CIFAR10
    rpu: RpuConfig = field(default_factory=RpuConfig)
    n_trials: int = DEFAULT_TRIALS
    workers: int = 1


@dataclass(frozen=True, slots=True)
class Individual:
    arch: Architecture
    id: str
    score: float
    avm: float
    std: float
    params: int
    cell: tuple[int, ...] | None = None
    violation: bool = False


class GenerationRecord(BaseModel):
    model_config = ConfigDict(extra="forbid")

    generation: int
    best_score: float | None
    mean_score: float
    mean_depth: float
    mean_wf: float
    mean_params: float
    feasible: int
    violations: int
    culled: int
    mutations: dict[str, int] = Field(default_factory=dict)
    tau: float | None = None
    fine_tuned: bool = False


class Candidate(BaseModel):
    model_config = ConfigDict(extra="forbid")

    arch_id: str
    arch: dict[str, Any]
    score: float
    avm: float
    std: float
    params: int
    feasible: bool


class SearchResult(BaseModel):
    model_config = ConfigDict(extra="forbid")

    schema_version: str = SCHEMA_VERSION
    best: dict[str, Any]
    best_id: str
    best_prediction: Candidate
    verified: bool
    best_record: EvalRecord | None = None
    generations: int
    stopped_by: Literal["iterations", "time_budget"] = "iterations"
    initial: GenerationRecord
    history: list[GenerationRecord]
    top: list[Candidate]
    harvested_path: str | None = None
    harvested_rows: int = 0
    config: dict[str, Any] = Field(default_factory=dict)
    engine_config: dict[str, Any] = Field(default_factory=dict)
    seed: int = 0
    wall_time: float = Field(default=0.0, exclude=True)
    harvested: list[DatasetRow] = Field(default_factory=list, exclude=True)

    @property
    def best_architecture(self) -> Architecture:
        return from_dict(self.best)


# ---------------------------------------------------------------------------
# Scoring helpers
# ---------------------------------------------------------------------------


class _Scorer:
    """Memoized surrogate predictions for one model."""

    def __init__(self, model: Surrogate, ctx: SearchContext) -> None:
        self.model = model
        self.ctx = ctx
        self._cache: dict[Architecture, tuple[float, float, float]] = {}

    def __call__(self, archs: Sequence[Architecture]) -> list[tuple[float, float, float]]:
        missing = list(dict.fromkeys(a for a in archs if a not in self._cache))
        if missing:
            pred = self.model.predict(missing, self.ctx.rpu)
            for a, s, v, d in zip(missing, pred.scores, pred.avm, pred.std, strict=True):
                self._cache[a] = (float(s), float(v), float(d))
        return [self._cache[a] for a in archs]

    def individuals(
        self, archs: Sequence[Architecture], cells: Sequence[tuple[int, ...] | None], violations: Sequence[bool]
    ) -> list[Individual]:
        shape, classes = self.ctx.task.input_shape, self.ctx.task.num_classes
        return [
            Individual(
                arch=a, id=arch_id(a), score=s, avm=v, std=d, params=param_count(a, shape, classes),
                cell=c, violation=bad,
            )
            for a, (s, v, d), c, bad in zip(archs, self(archs), cells, violations, strict=True)
        ]


def _seed(cfg: SearchConfig, seed: int | None) -> int:
    if seed is not None:
        return seed
    return cfg.seed if cfg.seed is not None else 0


def is_feasible(ind: Individual, cfg: SearchConfig) -> bool:
    if cfg.t_p is not None and ind.params >= cfg.t_p:
        return False
    return cfg.t_avm is None or ind.avm < cfg.t_avm


def _rank_key(cfg: SearchConfig) -> Callable[[Individual], tuple]:
    return lambda ind: (not is_feasible(ind, cfg), -ind.score, ind.id)


def _violates_avm(avm: float, cfg: SearchConfig) -> bool:
    return cfg.t_avm is not None and avm >= cfg.t_avm


def _record(
    generation: int,
    population: Sequence[Individual],
    cfg: SearchConfig,
    culled: int,
    mutations: Counter | None = None,
) -> GenerationRecord:
    feasible = [ind.score for ind in population if is_feasible(ind, cfg)]
    return GenerationRecord(
        generation=generation,
        best_score=max(feasible) if feasible else None,
        mean_score=float(np.mean([ind.score for ind in population])),
        mean_depth=float(np.mean([depth(ind.arch) for ind in population])),
        mean_wf=float(np.mean([ind.arch.mean_wf for ind in population])),
        mean_params=float(np.mean([ind.params for ind in population])),
        feasible=len(feasible),
        violations=sum(ind.violation for ind in population),
        culled=culled,
        mutations=dict(sorted((mutations or Counter()).items())),
    )


def _candidate(ind: Individual, cfg: SearchConfig) -> Candidate:
    return Candidate(
        arch_id=ind.id, arch=ind.arch.to_dict(), score=ind.score, avm=ind.avm, std=ind.std,
        params=ind.params, feasible=is_feasible(ind, cfg),
    )


# ---------------------------------------------------------------------------
# Algorithm steps
# ---------------------------------------------------------------------------


def _init_population(
    cfg: SearchConfig, scorer: _Scorer, ctx: SearchContext, seed: int
) -> tuple[list[Individual], int]:
    shape, classes = ctx.task.input_shape, ctx.task.num_classes
    samples = sample_lhs_cells(cfg.population_size, derive_rng(seed, 0), cfg.t_p, ctx.space, shape, classes)
    slot_rngs: dict[int, np.random.Generator] = {}
    culled = 0
    bad: list[int] = []
    for attempt in range(cfg.cull_retries + 1):
        preds = scorer([s.arch for s in samples])
        bad = [k for k, (_, avm, _) in enumerate(preds) if _violates_avm(avm, cfg)]
        if not bad or attempt == cfg.cull_retries:
            break
        for k in bad:
            rng = slot_rngs.setdefault(k, derive_rng(seed, 0, k + 1))
            fresh = draw_in_cell(samples[k].cell, samples[k].n, rng, ctx.space)
            if cfg.t_p is not None:
                fresh = resample_within_budget(fresh, cfg.t_p, rng, ctx.space, shape, classes)
            samples[k] = fresh
            culled += 1
    if bad:
        logger.warning("%d initial individuals still violate t_avm after %d redraws", len(bad), cfg.cull_retries)
    flagged = set(bad)
    population = scorer.individuals(
        [s.arch for s in samples], [s.cell for s in samples], [k in flagged for k in range(len(samples))]
    )
    return population, culled


def init_population(
    cfg: SearchConfig, model: Surrogate, ctx: SearchContext | None = None, seed: int | None = None
) -> list[Individual]:
    """LHS population of cfg.population_size individuals, AVM-culled within their hypercube cells."""
    ctx = ctx or SearchContext()
    population, _ = _init_population(cfg, _Scorer(model, ctx), ctx, _seed(cfg, seed))
    return population


def _step(
    population: Sequence[Individual],
    scorer: _Scorer,
    cfg: SearchConfig,
    ctx: SearchContext,
    generation: int,
    seed: int,
) -> tuple[list[Individual], GenerationRecord]:
    shape, classes = ctx.task.input_shape, ctx.task.num_classes
    probs = cfg.effective_probs()
    ranked = sorted(population, key=_rank_key(cfg))
    survivors = ranked[: len(ranked) // 2]
    n_children = len(ranked) - len(survivors)
    parents = [survivors[k % len(survivors)] for k in range(n_children)]
    rngs = [derive_rng(seed, generation, k) for k in range(n_children)]

    outcomes = [
        mutate_traced(p.arch, probs, cfg.t_p, rng, ctx.space, shape, classes)
        for p, rng in zip(parents, rngs, strict=True)
    ]
    culled = 0
    bad: list[int] = []
    for attempt in range(cfg.cull_retries + 1):
        preds = scorer([o.child for o in outcomes])
        bad = [k for k, (_, avm, _) in enumerate(preds) if _violates_avm(avm, cfg)]
        if not bad or attempt == cfg.cull_retries:
            break
        for k in bad:
            outcomes[k] = mutate_traced(parents[k].arch, probs, cfg.t_p, rngs[k], ctx.space, shape, classes)
            culled += 1

    mutations = Counter(kind for o in outcomes for kind in o.applied)
    flagged = set(bad)
    children = scorer.individuals(
        [o.child for o in outcomes], [p.cell for p in parents], [k in flagged for k in range(n_children)]
    )
    new_population = list(survivors) + children
    return new_population, _record(generation, new_population, cfg, culled, mutations)


def step(
    population: Sequence[Individual],
    model: Surrogate,
    cfg: SearchConfig,
    ctx: SearchContext | None = None,
    generation: int = 1,
    seed: int | None = None,
) -> list[Individual]:
    """One generation: keep the top half, refill with AVM-culled mutants of the survivors."""
    ctx = ctx or SearchContext()
    new_population, _ = _step(population, _Scorer(model, ctx), cfg, ctx, generation, _seed(cfg, seed))
    return new_population


def _ground_truth(
    population: Sequence[Individual], backend: Backend, ctx: SearchContext, seed: int
) -> tuple[list[Individual], list[EvalRecord]]:
    unique = list({ind.id: ind for ind in population}.values())
    records = evaluate_many([u.arch for u in unique], ctx.rpu, backend, ctx.n_trials, seed, workers=ctx.workers)
    return unique, records


def run(
    cfg: SearchConfig,
    model: Surrogate,
    backend: Backend | None = None,
    ctx: SearchContext | None = None,
    seed: int | None = None,
    clock: Callable[[], float] = time.monotonic,
) -> SearchResult:
    """Evolve until n_iterations generations ran or time_budget seconds passed, whichever comes first."""
    ctx = ctx or SearchContext()
    seed = _seed(cfg, seed)
    shape, classes = ctx.task.input_shape, ctx.task.num_classes
    started = clock()
    scorer = _Scorer(model, ctx)
    harvested = Dataset(input_shape=shape, num_classes=classes)

    population, culled = _init_population(cfg, scorer, ctx, seed)
    initial = _record(0, population, cfg, culled)
    history: list[GenerationRecord] = []
    ever_feasible = initial.feasible
    stopped_by: Literal["iterations", "time_budget"] = "iterations"

    generation = 0
    while generation < cfg.n_iterations:
        if cfg.time_budget is not None and clock() - started >= cfg.time_budget:
            stopped_by = "time_budget"
            break
        generation += 1
        population, rec = _step(population, scorer, cfg, ctx, generation, seed)

        if backend is not None and generation % cfg.surrogate_check_interval == 0:
            unique, records = _ground_truth(population, backend, ctx, seed)
            rows = rows_from_records([u.arch for u in unique], records, ctx.rpu, "search-harvested", shape, classes)
            harvested.extend(rows, skip_duplicates=True)
            if len(unique) >= 2:
                rec.tau = kendall_tau([u.score for u in unique], [r.acc_1day_mean for r in records])
            logger.info("Generation %d: checkpoint tau=%s, best score=%s", generation, rec.tau, rec.best_score)
            if rec.tau is not None and rec.tau < cfg.tau_floor and isinstance(model, SurrogateEnsemble):
                tuned = fine_tune(model, harvested.rows)
                if tuned is not model:
                    model = tuned
                    scorer = _Scorer(model, ctx)
                    population = scorer.individuals(
                        [p.arch for p in population], [p.cell for p in population], [p.violation for p in population]
                    )
                    rec.fine_tuned = True
        ever_feasible = max(ever_feasible, rec.feasible)
        history.append(rec)

    ranked = sorted(population, key=_rank_key(cfg))
    feasible = [ind for ind in ranked if is_feasible(ind, cfg)]
    if not feasible:
        raise InfeasibleSearch({
            "generations": generation,
            "population": len(population),
            "ever_feasible": ever_feasible,
            "min_params": min(ind.params for ind in population),
            "min_predicted_avm": min(ind.avm for ind in population),
            "t_p": cfg.t_p,
            "t_avm": cfg.t_avm,
        })

    best, best_record, verified = feasible[0], None, False
    if backend is not None and cfg.verify_top_k > 0:
        top_k = feasible[: cfg.verify_top_k]
        records = evaluate_many([c.arch for c in top_k], ctx.rpu, backend, ctx.n_trials, seed, workers=ctx.workers)
        harvested.extend(
            rows_from_records([c.arch for c in top_k], records, ctx.rpu, "search-harvested", shape, classes),
            skip_duplicates=True,
        )
        for cand, record in zip(top_k, records, strict=True):
            if cfg.t_avm is None or record.avm < cfg.t_avm:
                best, best_record, verified = cand, record, True
                break
        if not verified:
            best_record = records[0]
            logger.warning("None of the top %d candidates meets t_avm on the ground-truth backend", len(top_k))

    return SearchResult(
        best=best.arch.to_dict(),
        best_id=best.id,
        best_prediction=_candidate(best, cfg),
        verified=verified,
        best_record=best_record,
        generations=generation,
        stopped_by=stopped_by,
        initial=initial,
        history=history,
        top=[_candidate(ind, cfg) for ind in ranked[:TOP_CANDIDATES]],
        harvested_rows=len(harvested),
        config=cfg.model_dump(mode="json"),
        seed=seed,
        wall_time=clock() - started,
        harvested=harvested.rows,
    )


# ---------------------------------------------------------------------------
# Reference searches
# ---------------------------------------------------------------------------


def random_search(
    cfg: SearchConfig,
    model: Surrogate,
    n_samples: int,
    ctx: SearchContext | None = None,
    seed: int | None = None,
) -> Architecture:
    """Best feasible architecture among n_samples LHS draws, ranked by the surrogate."""
    ctx = ctx or SearchContext()
    seed = _seed(cfg, seed)
    samples = sample_lhs_cells(
        n_samples, derive_rng(seed, "random"), cfg.t_p, ctx.space, ctx.task.input_shape, ctx.task.num_classes
    )
    scorer = _Scorer(model, ctx)
    population = scorer.individuals([s.arch for s in samples], [s.cell for s in samples], [False] * len(samples))
    feasible = sorted((ind for ind in population if is_feasible(ind, cfg)), key=_rank_key(cfg))
    if not feasible:
        raise InfeasibleSearch({"samples": n_samples, "t_p": cfg.t_p, "t_avm": cfg.t_avm})
    return feasible[0].arch


def exhaustive(
    space: SearchSpace,
    backend: Backend,
    rpu: RpuConfig | None = None,
    task: Task = CIFAR10,
    n_trials: int = DEFAULT_TRIALS,
    seed: int = 0,
    t_p: float | None = None,
    t_avm: float | None = None,
    cap: int = DEFAULT_EXHAUSTIVE_CAP,
    workers: int = 1,
) -> Architecture:
    """Argmax of ACC/max(std, SIGMA_FLOOR) over every feasible architecture of a small space."""
    cardinality = space.cardinality()
    if cardinality > cap:
        raise SubspaceTooLarge(cardinality, cap)
    rpu = rpu or RpuConfig()
    archs = list(space.enumerate())
    records = evaluate_many(archs, rpu, backend, n_trials, seed, workers=workers)
    scored = []
    for arch, rec in zip(archs, records, strict=True):
        if t_p is not None and param_count(arch, task.input_shape, task.num_classes) >= t_p:
            continue
        if t_avm is not None and rec.avm >= t_avm:
            continue
        scored.append((-objective_ratio(rec), arch_id(arch), arch))
    if not scored:
        raise InfeasibleSearch({"cardinality": cardinality, "t_p": t_p, "t_avm": t_avm})
    return min(scored, key=lambda s: (s[0], s[1]))[2]
