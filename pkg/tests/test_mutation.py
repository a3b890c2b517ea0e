"""Tests for mutation operators."""

from __future__ import annotations

from unittest.mock import patch

import pytest
from pydantic import ValidationError

from driftnas.errors import BudgetUnreachable
from driftnas.mutation import (
    MUTATION_CLASSES,
    MutationOutcome,
    MutationProbs,
    mutate,
    mutate_traced,
    propose_mutation,
)
from driftnas.seeding import derive_rng
from driftnas.space import FULL_SPACE, Architecture, MainBlockSpec, SearchSpace, param_count

OFF = MutationProbs(depth=0.0, width=0.0, other=0.0)


class TestProposeMutation:
    def test_no_trigger_no_change(self, t500):
        outcome = propose_mutation(t500, OFF, derive_rng(0, 1))
        assert outcome.child == t500
        assert outcome.applied == ()

    @pytest.mark.parametrize("cls", list(MUTATION_CLASSES))
    def test_one_mutation_per_triggered_class(self, t500, cls):
        probs = OFF.model_copy(update={cls: 1.0})
        for seed in range(20):
            outcome = propose_mutation(t500, probs, derive_rng(seed, 1))
            assert len(outcome.applied) == 1
            assert outcome.applied[0] in MUTATION_CLASSES[cls]

    def test_children_stay_in_space(self, t500):
        probs = MutationProbs()
        arch = t500
        for seed in range(200):
            arch = propose_mutation(arch, probs, derive_rng(seed, 2)).child
            assert FULL_SPACE.contains(arch)

    def test_children_stay_in_small_space(self, small_space):
        arch = next(small_space.enumerate())
        for seed in range(100):
            arch = propose_mutation(arch, MutationProbs(), derive_rng(seed, 3), small_space).child
            assert small_space.contains(arch)

    def test_skip_toggle_needs_allow_skip(self, small_arch):
        space = SearchSpace(allow_skip=False)
        probs = OFF.model_copy(update={"other": 1.0})
        for seed in range(30):
            outcome = propose_mutation(small_arch, probs, derive_rng(seed, 4), space)
            assert outcome.applied == ("ks0",)
            assert not any(b.st for b in outcome.child.blocks)

    def test_deterministic(self, t500):
        a = propose_mutation(t500, MutationProbs(), derive_rng(7, 1))
        b = propose_mutation(t500, MutationProbs(), derive_rng(7, 1))
        assert a == b

    def test_class_frequencies(self, t500):
        probs = MutationProbs()
        rng = derive_rng(0, 7)
        n = 10_000
        hits = dict.fromkeys(MUTATION_CLASSES, 0)
        for _ in range(n):
            applied = propose_mutation(t500, probs, rng).applied
            for cls, kinds in MUTATION_CLASSES.items():
                hits[cls] += any(k in kinds for k in applied)
        for cls in MUTATION_CLASSES:
            assert hits[cls] / n == pytest.approx(getattr(probs, cls), abs=0.02)


class TestGrowthDamping:
    def test_never_reaches_max_main_blocks(self):
        blk = MainBlockSpec(r=2, b=1, ct="B", wf=1)
        arch = Architecture(oc0=16, ks0=3, blocks=(blk,) * 4)
        probs = MutationProbs(depth=1.0, width=0.0, other=0.0, max_growth_prob=0.0)
        for seed in range(100):
            assert propose_mutation(arch, probs, derive_rng(seed, 5)).child.m <= 4

    def test_never_reaches_max_width(self):
        arch = Architecture(oc0=16, ks0=3, blocks=(MainBlockSpec(r=2, b=1, ct="B", wf=3),))
        probs = MutationProbs(depth=0.0, width=1.0, other=0.0, max_growth_prob=0.0)
        for seed in range(100):
            assert propose_mutation(arch, probs, derive_rng(seed, 6)).child.blocks[0].wf <= 3

    def test_growth_allowed_by_default(self):
        arch = Architecture(oc0=16, ks0=3, blocks=(MainBlockSpec(r=2, b=1, ct="B", wf=3),))
        probs = MutationProbs(depth=0.0, width=1.0, other=0.0)
        widths = {propose_mutation(arch, probs, derive_rng(seed, 6)).child.blocks[0].wf for seed in range(100)}
        assert 4 in widths


class TestBudgetedMutation:
    @pytest.mark.parametrize("t_p", [200_000, 600_000])
    def test_children_respect_t_p(self, t500, t_p):
        probs = MutationProbs(depth=1.0, width=1.0, other=1.0)
        for seed in range(30):
            child = mutate(t500, probs, t_p, derive_rng(seed, 8))
            assert param_count(child) < t_p

    def test_shrink_is_reported(self, resnet32):
        outcome = mutate_traced(resnet32, OFF, 50_000, derive_rng(0, 9), retries=0)
        assert outcome.applied[-1] == "shrink"
        assert param_count(outcome.child) < 50_000

    def test_no_budget(self, t500):
        child = mutate(t500, MutationProbs(), None, derive_rng(0, 10))
        assert FULL_SPACE.contains(child)

    def test_unreachable_budget_raises(self, resnet32):
        with pytest.raises(BudgetUnreachable):
            mutate_traced(resnet32, OFF, 10, derive_rng(0, 11), retries=0)

    def test_parent_kept_when_no_child_fits(self, small_arch, resnet32):
        t_p = param_count(small_arch) + 1
        oversized = MutationOutcome(child=resnet32, applied=("wf",))
        with (
            patch("driftnas.mutation.propose_mutation", return_value=oversized),
            patch("driftnas.mutation.shrink_to_budget", side_effect=BudgetUnreachable(t_p, t_p + 1)),
        ):
            outcome = mutate_traced(small_arch, MutationProbs(), t_p, derive_rng(0, 12))
        assert outcome.child == small_arch
        assert outcome.applied == ()


class TestMutationProbs:
    def test_defaults(self):
        probs = MutationProbs()
        assert (probs.depth, probs.width, probs.other, probs.max_growth_prob) == (0.8, 0.8, 0.5, 1.0)

    def test_out_of_range(self):
        with pytest.raises(ValidationError):
            MutationProbs(depth=1.5)

    def test_unknown_field(self):
        with pytest.raises(ValidationError):
            MutationProbs(size=0.5)
