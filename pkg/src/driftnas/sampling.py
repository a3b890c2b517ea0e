"""Latin hypercube sampling over the search space.

Each searchable dimension (OC0, KS0, M and R/B/CT/WF of every main-block
slot) is split into n strata; every stratum receives exactly one of the n
samples. Integer and categorical dimensions are stratified on their index
range: for K admissible values, stratum k covers indices
``[floor(k*K/n), floor((k+1)*K/n) - 1]``. When n > K strata collapse onto
single values, so each value is drawn floor(n/K) or ceil(n/K) times.

A sample remembers its cell (stratum per dimension) so it can be redrawn
"in the same hypercube cell" when a constraint rejects it.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from driftnas.errors import BudgetUnreachable
from driftnas.models import DEFAULT_INPUT_SHAPE, DEFAULT_NUM_CLASSES
from driftnas.seeding import derive_rng
from driftnas.space import (
    FULL_SPACE,
    Architecture,
    InputShape,
    MainBlockSpec,
    SearchSpace,
    param_count,
)

logger = logging.getLogger(__name__)

DEFAULT_CELL_RETRIES = 10


@dataclass(frozen=True, slots=True)
class Dimension:
    name: str
    values: tuple
    block: int | None = None

    @property
    def size(self) -> int:
        return len(self.values)


@dataclass(frozen=True, slots=True)
class LhsSample:
    """A sampled architecture, its hypercube cell and the value index drawn per dimension."""

    arch: Architecture
    cell: tuple[int, ...]
    indices: tuple[int, ...]
    n: int


def lhs_dimensions(space: SearchSpace = FULL_SPACE) -> list[Dimension]:
    """Searchable dimensions in genome order; block dimensions exist for every possible slot."""
    dims = [Dimension(name, space.values(name)) for name in ("oc0", "ks0", "m")]
    for j in range(space.m[1]):
        dims.extend(Dimension(name, space.values(name), block=j) for name in ("r", "b", "ct", "wf"))
    return dims


def stratum_bounds(k: int, n: int, size: int) -> tuple[int, int]:
    """Inclusive index range of stratum k when `size` values are split into n strata."""
    lo = (k * size) // n
    hi = max(lo, ((k + 1) * size) // n - 1)
    return lo, hi


def stratum_of(index: int, n: int, size: int) -> int:
    """Stratum holding value `index`; strata partition the indices when n <= size."""
    return math.ceil((index + 1) * n / size) - 1


def _draw_index(k: int, n: int, size: int, rng: np.random.Generator) -> int:
    lo, hi = stratum_bounds(k, n, size)
    return lo + int(rng.integers(hi - lo + 1))


def _build(dims: list[Dimension], indices: list[int]) -> Architecture:
    picked = {(d.name, d.block): d.values[i] for d, i in zip(dims, indices, strict=True)}
    m = picked[("m", None)]
    blocks = tuple(
        MainBlockSpec(r=picked[("r", j)], b=picked[("b", j)], ct=picked[("ct", j)], wf=picked[("wf", j)])
        for j in range(m)
    )
    return Architecture(oc0=picked[("oc0", None)], ks0=picked[("ks0", None)], blocks=blocks)


def draw_in_cell(
    cell: tuple[int, ...], n: int, rng: np.random.Generator, space: SearchSpace = FULL_SPACE
) -> LhsSample:
    """A fresh sample drawn uniformly from one hypercube cell."""
    dims = lhs_dimensions(space)
    indices = tuple(_draw_index(k, n, d.size, rng) for d, k in zip(dims, cell, strict=True))
    return LhsSample(arch=_build(dims, list(indices)), cell=cell, indices=indices, n=n)


def lhs_design(n: int, rng: np.random.Generator, space: SearchSpace = FULL_SPACE) -> np.ndarray:
    """(n, d) matrix of strata; column j is a random permutation of range(n)."""
    d = len(lhs_dimensions(space))
    return np.column_stack([rng.permutation(n) for _ in range(d)])


# ---------------------------------------------------------------------------
# Parameter-budget repair
# ---------------------------------------------------------------------------


def _scaled(arch: Architecture, alpha: float, space: SearchSpace) -> Architecture:
    def scale(value: int, name: str) -> int:
        return space.clamp(name, max(1, round(value * alpha)))

    blocks = tuple(
        MainBlockSpec(r=scale(b.r, "r"), b=scale(b.b, "b"), ct=b.ct, wf=scale(b.wf, "wf"), st=b.st)
        for b in arch.blocks
    )
    return Architecture(oc0=arch.oc0, ks0=arch.ks0, blocks=blocks)


def shrink_to_budget(
    arch: Architecture,
    t_p: float,
    space: SearchSpace = FULL_SPACE,
    input_shape: InputShape = DEFAULT_INPUT_SHAPE,
    num_classes: int = DEFAULT_NUM_CLASSES,
) -> Architecture:
    """Clamp widening/depth downward until param_count < t_p.

    R, B and WF of every main block are scaled by a common factor found by
    bisection; if even the minimal per-block settings are too large, trailing
    main blocks are dropped, then OC0 and KS0 are reduced. Raises
    BudgetUnreachable when even that smallest architecture does not fit.
    """

    def fits(a: Architecture) -> bool:
        return param_count(a, input_shape, num_classes) < t_p

    if fits(arch):
        return arch
    floor = _scaled(arch, 0.0, space)
    if fits(floor):
        lo, hi = 0.0, 1.0
        for _ in range(12):
            mid = (lo + hi) / 2
            if fits(_scaled(arch, mid, space)):
                lo = mid
            else:
                hi = mid
        logger.debug("Shrunk %s by factor %.3f to meet t_p=%s", arch, lo, t_p)
        return _scaled(arch, lo, space)

    current = floor
    while current.m > space.m[0] and not fits(current):
        current = Architecture(oc0=current.oc0, ks0=current.ks0, blocks=current.blocks[:-1])
    while current.oc0 > space.oc0[0] and not fits(current):
        current = Architecture(oc0=space.clamp("oc0", current.oc0 // 2), ks0=current.ks0, blocks=current.blocks)
    smaller_ks = [k for k in space.values("ks0") if k < current.ks0]
    while smaller_ks and not fits(current):
        current = Architecture(oc0=current.oc0, ks0=smaller_ks.pop(), blocks=current.blocks)
    if not fits(current):
        raise BudgetUnreachable(t_p, param_count(current, input_shape, num_classes))
    return current


# ---------------------------------------------------------------------------
# Sampling entry points
# ---------------------------------------------------------------------------


def sample_lhs_cells(
    n: int,
    rng: np.random.Generator,
    t_p: float | None = None,
    space: SearchSpace = FULL_SPACE,
    input_shape: InputShape = DEFAULT_INPUT_SHAPE,
    num_classes: int = DEFAULT_NUM_CLASSES,
    retries: int = DEFAULT_CELL_RETRIES,
) -> list[LhsSample]:
    """n stratified samples with their cells.

    Samples failing ``param_count < t_p`` are redrawn in their own cell up to
    `retries` times; violations left after that are repaired with
    :func:`shrink_to_budget` (the repaired sample keeps its cell), so every
    returned sample has fewer than t_p parameters.
    """
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    design = lhs_design(n, rng, space)
    samples = []
    for row in design:
        cell = tuple(int(k) for k in row)
        sample = draw_in_cell(cell, n, rng, space)
        if t_p is not None:
            sample = resample_within_budget(sample, t_p, rng, space, input_shape, num_classes, retries)
        samples.append(sample)
    return samples


def resample_within_budget(
    sample: LhsSample,
    t_p: float,
    rng: np.random.Generator,
    space: SearchSpace = FULL_SPACE,
    input_shape: InputShape = DEFAULT_INPUT_SHAPE,
    num_classes: int = DEFAULT_NUM_CLASSES,
    retries: int = DEFAULT_CELL_RETRIES,
) -> LhsSample:
    attempt = 0
    while param_count(sample.arch, input_shape, num_classes) >= t_p and attempt < retries:
        sample = draw_in_cell(sample.cell, sample.n, rng, space)
        attempt += 1
    arch = shrink_to_budget(sample.arch, t_p, space, input_shape, num_classes)
    if arch is sample.arch:
        return sample
    return LhsSample(arch=arch, cell=sample.cell, indices=sample.indices, n=sample.n)


def sample_lhs(
    n: int,
    seed: int,
    t_p: float | None = None,
    space: SearchSpace = FULL_SPACE,
    input_shape: InputShape = DEFAULT_INPUT_SHAPE,
    num_classes: int = DEFAULT_NUM_CLASSES,
) -> list[Architecture]:
    """n Latin-hypercube architectures, deterministic in `seed`."""
    rng = derive_rng(seed, 0)
    return [s.arch for s in sample_lhs_cells(n, rng, t_p, space, input_shape, num_classes)]
