"""Mutation operators for the evolutionary search.

Mutations come in three classes, each triggered independently:

  - depth: add/remove a main block (M), add/remove a residual block (R),
    change a main block's convolution type (CT)
  - width: change a widening factor (WF), add/remove a branch (B), change
    the stem's output channels (OC0)
  - other: change the stem kernel size (KS0), toggle a main block's
    forced skip projection (ST)

Inside a triggered class exactly one mutation is picked uniformly. Results
are clamped to the search space, so a child is always valid.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from driftnas.errors import BudgetUnreachable
from driftnas.models import DEFAULT_INPUT_SHAPE, DEFAULT_NUM_CLASSES
from driftnas.sampling import shrink_to_budget
from driftnas.space import FULL_SPACE, Architecture, InputShape, SearchSpace, param_count

logger = logging.getLogger(__name__)

MUTATION_CLASSES: dict[str, tuple[str, ...]] = {
    "depth": ("m", "r", "ct"),
    "width": ("wf", "b", "oc0"),
    "other": ("ks0", "st"),
}
OC0_STEP = 8
DEFAULT_MUTATION_RETRIES = 10


class MutationProbs(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    depth: float = Field(default=0.8, ge=0.0, le=1.0)
    width: float = Field(default=0.8, ge=0.0, le=1.0)
    other: float = Field(default=0.5, ge=0.0, le=1.0)
    max_growth_prob: float = Field(
        default=1.0, ge=0.0, le=1.0,
        description="Probability of keeping a mutation that raises M, R or WF to its maximum value",
    )


@dataclass(frozen=True, slots=True)
class MutationOutcome:
    child: Architecture
    applied: tuple[str, ...]


def _step(value: int, lo: int, hi: int, rng: np.random.Generator) -> int:
    if lo == hi:
        return value
    if value >= hi:
        return value - 1
    if value <= lo:
        return value + 1
    return value + (1 if rng.random() < 0.5 else -1)


def _apply(kind: str, arch: Architecture, space: SearchSpace, rng: np.random.Generator) -> Architecture:
    j = int(rng.integers(arch.m))
    blk = arch.blocks[j]
    match kind:
        case "m":
            lo, hi = space.m
            target = _step(arch.m, lo, hi, rng)
            if target > arch.m:
                return replace(arch, blocks=arch.blocks + (replace(arch.blocks[-1], st=False),))
            if target < arch.m:
                return replace(arch, blocks=arch.blocks[:-1])
            return arch
        case "r" | "b" | "wf":
            lo, hi = getattr(space, kind)
            return arch.with_block(j, **{kind: _step(getattr(blk, kind), lo, hi, rng)})
        case "ct":
            others = [c for c in space.values("ct") if c != blk.ct]
            return arch.with_block(j, ct=others[int(rng.integers(len(others)))]) if others else arch
        case "oc0":
            lo, hi = space.oc0
            direction = _step(arch.oc0, lo, hi, rng) - arch.oc0
            return replace(arch, oc0=space.clamp("oc0", arch.oc0 + direction * OC0_STEP))
        case "ks0":
            choices = space.values("ks0")
            i = _step(choices.index(arch.ks0), 0, len(choices) - 1, rng)
            return replace(arch, ks0=choices[i])
        case "st":
            return arch.with_block(j, st=not blk.st) if space.allow_skip else arch
    raise ValueError(f"unknown mutation kind {kind!r}")


def _reaches_max(kind: str, before: Architecture, after: Architecture, space: SearchSpace) -> bool:
    if kind == "m":
        return after.m > before.m and after.m == space.m[1]
    if kind in ("r", "wf"):
        hi = getattr(space, kind)[1]
        return any(
            getattr(a, kind) == hi and getattr(a, kind) > getattr(b, kind)
            for a, b in zip(after.blocks, before.blocks, strict=False)
        )
    return False


def propose_mutation(
    arch: Architecture,
    probs: MutationProbs,
    rng: np.random.Generator,
    space: SearchSpace = FULL_SPACE,
) -> MutationOutcome:
    """One unconstrained mutation draw; `applied` names the mutations actually attempted."""
    triggers = rng.random(len(MUTATION_CLASSES))
    child = arch
    applied = []
    for (cls, kinds), u in zip(MUTATION_CLASSES.items(), triggers, strict=True):
        if u >= getattr(probs, cls):
            continue
        if cls == "other" and not space.allow_skip:
            kinds = tuple(k for k in kinds if k != "st")
        kind = kinds[int(rng.integers(len(kinds)))]
        mutated = _apply(kind, child, space, rng)
        if probs.max_growth_prob < 1.0 and _reaches_max(kind, child, mutated, space):
            if rng.random() >= probs.max_growth_prob:
                mutated = child
        child = mutated
        applied.append(kind)
    return MutationOutcome(child=child, applied=tuple(applied))


def mutate_traced(
    arch: Architecture,
    probs: MutationProbs,
    t_p: float | None,
    rng: np.random.Generator,
    space: SearchSpace = FULL_SPACE,
    input_shape: InputShape = DEFAULT_INPUT_SHAPE,
    num_classes: int = DEFAULT_NUM_CLASSES,
    retries: int = DEFAULT_MUTATION_RETRIES,
) -> MutationOutcome:
    """Mutate under the parameter budget: redraw up to `retries` times, then shrink.

    When no shrunk child fits, the parent is kept if it fits; otherwise
    BudgetUnreachable propagates.
    """
    budget = math.inf if t_p is None else t_p
    outcome = propose_mutation(arch, probs, rng, space)
    attempt = 0
    while param_count(outcome.child, input_shape, num_classes) >= budget and attempt < retries:
        outcome = propose_mutation(arch, probs, rng, space)
        attempt += 1
    if param_count(outcome.child, input_shape, num_classes) >= budget:
        try:
            shrunk = shrink_to_budget(outcome.child, budget, space, input_shape, num_classes)
        except BudgetUnreachable:
            if param_count(arch, input_shape, num_classes) >= budget:
                raise
            logger.debug("No child of %s fits t_p=%s, keeping the parent", arch, t_p)
            return MutationOutcome(child=arch, applied=())
        outcome = MutationOutcome(child=shrunk, applied=outcome.applied + ("shrink",))
    return outcome


def mutate(
    arch: Architecture,
    probs: MutationProbs,
    t_p: float | None,
    rng: np.random.Generator,
    space: SearchSpace = FULL_SPACE,
    input_shape: InputShape = DEFAULT_INPUT_SHAPE,
    num_classes: int = DEFAULT_NUM_CLASSES,
) -> Architecture:
    return mutate_traced(arch, probs, t_p, rng, space, input_shape, num_classes).child
