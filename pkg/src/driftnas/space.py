"""ResNet-like search space: architecture types, genome codec and static accounting.

An architecture is a stem convolution (OC0 output channels, KS0 kernel)
followed by M main blocks. Main block i holds R residual blocks of B parallel
branches of convolution-block type CT, at output width ``OC0 * 2**i * WF``.
The first residual block of every main block after the first halves the
spatial size. A 1x1 projection sits on the identity path whenever the input
and output shapes differ, or when the main block's ST flag forces it.

Counting conventions (kept in one place so every count agrees):

  - conv layers carry no bias; batch norm follows every conv (2 per channel)
  - classifier: global average pool + linear layer with bias
  - ``depth`` follows the ResNet naming convention: stem + branch convs +
    classifier, projections excluded. ``conv_count`` includes projections.
"""

from __future__ import annotations

import hashlib
import itertools
import json
import logging
import math
from collections.abc import Iterator, Sequence
from dataclasses import dataclass, field, replace
from enum import StrEnum
from typing import Any, Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from driftnas.errors import InvalidArchitecture, InvalidGenome, ShapeError
from driftnas.models import (
    BOTTLENECK_RATIO,
    BOTTLENECK_TYPES,
    CONV_TYPES,
    DEFAULT_INPUT_SHAPE,
    DEFAULT_NUM_CLASSES,
    MAX_MAIN_BLOCKS,
    SCHEMA_VERSION,
    STANDARD_TILE_SIZES,
)

logger = logging.getLogger(__name__)

InputShape = tuple[int, int, int]

# ---------------------------------------------------------------------------
# Architecture value types
# ---------------------------------------------------------------------------


@dataclass(frozen=True, slots=True)
class MainBlockSpec:
    r: int
    b: int
    ct: str
    wf: int
    st: bool = False

    def to_dict(self) -> dict[str, Any]:
        return {"r": self.r, "b": self.b, "ct": self.ct, "wf": self.wf, "st": self.st}


@dataclass(frozen=True, slots=True)
class Architecture:
    """Decoded genome: stem hyper-parameters plus one spec per main block."""

    oc0: int
    ks0: int
    blocks: tuple[MainBlockSpec, ...] = field(default_factory=tuple)

    @property
    def m(self) -> int:
        return len(self.blocks)

    @property
    def mean_wf(self) -> float:
        return sum(b.wf for b in self.blocks) / len(self.blocks)

    @property
    def mean_branches(self) -> float:
        return sum(b.b for b in self.blocks) / len(self.blocks)

    @property
    def total_branches(self) -> int:
        return sum(b.b * b.r for b in self.blocks)

    def with_block(self, index: int, **changes: Any) -> Architecture:
        blocks = list(self.blocks)
        blocks[index] = replace(blocks[index], **changes)
        return replace(self, blocks=tuple(blocks))

    def to_dict(self) -> dict[str, Any]:
        return {
            "schema_version": SCHEMA_VERSION,
            "oc0": self.oc0,
            "ks0": self.ks0,
            "blocks": [b.to_dict() for b in self.blocks],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))


def arch_id(arch: Architecture) -> str:
    """Content hash of the canonical JSON; stable tie-break key everywhere."""
    return hashlib.sha256(arch.to_json().encode()).hexdigest()[:16]


def from_dict(data: dict[str, Any], space: SearchSpace | None = None) -> Architecture:
    """Build and validate an Architecture from its JSON object form."""
    version = str(data.get("schema_version", SCHEMA_VERSION))
    if version != SCHEMA_VERSION:
        raise InvalidArchitecture(f"unsupported schema_version {version!r}")
    try:
        blocks = tuple(
            MainBlockSpec(
                r=int(b["r"]), b=int(b["b"]), ct=str(b["ct"]).upper(), wf=int(b["wf"]), st=bool(b.get("st", False))
            )
            for b in data["blocks"]
        )
        arch = Architecture(oc0=int(data["oc0"]), ks0=int(data["ks0"]), blocks=blocks)
    except (KeyError, TypeError, ValueError) as e:
        raise InvalidArchitecture(f"malformed architecture object: {e}") from e
    validate(arch, space)
    return arch


def from_json(text: str, space: SearchSpace | None = None) -> Architecture:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise InvalidArchitecture(f"invalid JSON: {e}") from e
    if not isinstance(data, dict):
        raise InvalidArchitecture("architecture JSON must be an object")
    return from_dict(data, space)


# ---------------------------------------------------------------------------
# Search-space ranges
# ---------------------------------------------------------------------------


class SearchSpace(BaseModel):
    """Per-dimension ranges. Defaults are the full searchable space.

    Integer ranges are inclusive ``(lo, hi)`` pairs; KS0 and CT are explicit
    choice lists. Narrower spaces describe subspaces (exhaustive oracle,
    config overrides).
    """

    model_config = ConfigDict(frozen=True, extra="forbid")

    oc0: tuple[int, int] = (8, 128)
    ks0: tuple[int, ...] = (1, 3, 5, 7)
    m: tuple[int, int] = (1, MAX_MAIN_BLOCKS)
    r: tuple[int, int] = (1, 16)
    b: tuple[int, int] = (1, 12)
    ct: tuple[Literal["A", "B", "C", "D"], ...] = CONV_TYPES
    wf: tuple[int, int] = (1, 4)
    allow_skip: bool = Field(default=True, description="Whether the ST projection toggle is searchable")

    @model_validator(mode="after")
    def _check_bounds(self) -> SearchSpace:
        limits = {"oc0": (8, 128), "m": (1, MAX_MAIN_BLOCKS), "r": (1, 16), "b": (1, 12), "wf": (1, 4)}
        for name, (lo, hi) in limits.items():
            a, z = getattr(self, name)
            if not lo <= a <= z <= hi:
                raise ValueError(f"{name} range {(a, z)} must satisfy {lo} <= lo <= hi <= {hi}")
        if not self.ks0 or any(k not in (1, 3, 5, 7) for k in self.ks0):
            raise ValueError(f"ks0 choices {self.ks0} must be a non-empty subset of (1, 3, 5, 7)")
        if not self.ct or len(set(self.ct)) != len(self.ct):
            raise ValueError(f"ct choices {self.ct} must be non-empty and unique")
        return self

    def values(self, name: str) -> tuple[Any, ...]:
        """Admissible values of one dimension, in sorted order."""
        if name == "ks0":
            return tuple(sorted(self.ks0))
        if name == "ct":
            return tuple(c for c in CONV_TYPES if c in self.ct)
        if name == "st":
            return (False, True) if self.allow_skip else (False,)
        lo, hi = getattr(self, name)
        return tuple(range(lo, hi + 1))

    def contains(self, arch: Architecture) -> bool:
        try:
            validate(arch, self)
        except InvalidArchitecture:
            return False
        return True

    def cardinality(self) -> int:
        """Number of distinct architectures (reported, never asserted against the literature)."""
        stem = len(self.values("oc0")) * len(self.values("ks0"))
        per_block = math.prod(len(self.values(n)) for n in ("r", "b", "ct", "wf", "st"))
        return sum(stem * per_block**m for m in self.values("m"))

    def enumerate(self) -> Iterator[Architecture]:
        """All architectures in lexicographic slot order."""
        block_choices = [
            MainBlockSpec(r=r, b=b, ct=ct, wf=wf, st=st)
            for r, b, ct, wf, st in itertools.product(*(self.values(n) for n in ("r", "b", "ct", "wf", "st")))
        ]
        for oc0, ks0, m in itertools.product(self.values("oc0"), self.values("ks0"), self.values("m")):
            for blocks in itertools.product(block_choices, repeat=m):
                yield Architecture(oc0=oc0, ks0=ks0, blocks=blocks)

    def clamp(self, name: str, value: int) -> int:
        vals = self.values(name)
        if name == "ks0":
            return min(vals, key=lambda k: (abs(k - value), k))
        return max(vals[0], min(vals[-1], value))


FULL_SPACE = SearchSpace()


def validate(arch: Architecture, space: SearchSpace | None = None) -> None:
    """Raise InvalidArchitecture unless every field lies inside `space`."""
    space = space or FULL_SPACE
    problems = []
    lo, hi = space.oc0
    if not lo <= arch.oc0 <= hi:
        problems.append(f"oc0={arch.oc0} outside [{lo}, {hi}]")
    if arch.ks0 not in space.ks0:
        problems.append(f"ks0={arch.ks0} not in {space.ks0}")
    lo, hi = space.m
    if not lo <= arch.m <= hi:
        problems.append(f"M={arch.m} outside [{lo}, {hi}]")
    for i, blk in enumerate(arch.blocks):
        for name in ("r", "b", "wf"):
            lo, hi = getattr(space, name)
            value = getattr(blk, name)
            if not lo <= value <= hi:
                problems.append(f"blocks[{i}].{name}={value} outside [{lo}, {hi}]")
        if blk.ct not in space.ct:
            problems.append(f"blocks[{i}].ct={blk.ct!r} not in {space.ct}")
        if blk.st and not space.allow_skip:
            problems.append(f"blocks[{i}].st set but the space disallows skip toggling")
    if problems:
        raise InvalidArchitecture("; ".join(problems))


# ---------------------------------------------------------------------------
# Genome codec: real-number encoding, fixed length
# ---------------------------------------------------------------------------

STEM_SLOTS = ("oc0", "ks0", "m")
BLOCK_SLOTS = ("r", "b", "ct", "wf", "st")
GENOME_LENGTH = len(STEM_SLOTS) + MAX_MAIN_BLOCKS * len(BLOCK_SLOTS)
SENTINEL = -1.0


def block_slot(block: int, name: str) -> int:
    return len(STEM_SLOTS) + block * len(BLOCK_SLOTS) + BLOCK_SLOTS.index(name)


def slot_names() -> list[str]:
    names = list(STEM_SLOTS)
    for j in range(MAX_MAIN_BLOCKS):
        names.extend(f"{n}{j}" for n in BLOCK_SLOTS)
    return names


def encode(arch: Architecture) -> np.ndarray:
    """Fixed-length float genome; absent main blocks are padded with SENTINEL."""
    genome = np.full(GENOME_LENGTH, SENTINEL, dtype=np.float64)
    genome[0] = arch.oc0
    genome[1] = arch.ks0
    genome[2] = arch.m
    for j, blk in enumerate(arch.blocks):
        base = block_slot(j, "r")
        genome[base : base + len(BLOCK_SLOTS)] = (blk.r, blk.b, CONV_TYPES.index(blk.ct), blk.wf, float(blk.st))
    return genome


def _integral(genome: np.ndarray, slot: int) -> int:
    value = float(genome[slot])
    if not math.isfinite(value):
        raise InvalidGenome(slot, value, "not a finite number")
    rounded = round(value)
    if abs(value - rounded) > 1e-6:
        raise InvalidGenome(slot, value, "not an integral value")
    return int(rounded)


def _in_range(genome: np.ndarray, slot: int, lo: int, hi: int, what: str) -> int:
    value = _integral(genome, slot)
    if not lo <= value <= hi:
        raise InvalidGenome(slot, float(genome[slot]), f"{what} must lie in [{lo}, {hi}]")
    return value


def decode(genome: Sequence[float] | np.ndarray, space: SearchSpace | None = None) -> Architecture:
    """Map a genome back to the unique Architecture it encodes."""
    space = space or FULL_SPACE
    g = np.asarray(genome, dtype=np.float64)
    if g.shape != (GENOME_LENGTH,):
        raise ShapeError(f"genome must have shape ({GENOME_LENGTH},), got {g.shape}")

    oc0 = _in_range(g, 0, *space.oc0, "oc0")
    ks0 = _integral(g, 1)
    if ks0 not in space.ks0:
        raise InvalidGenome(1, float(g[1]), f"ks0 must be one of {space.ks0}")
    m = _in_range(g, 2, *space.m, "M")

    blocks = []
    for j in range(MAX_MAIN_BLOCKS):
        base = block_slot(j, "r")
        if j >= m:
            for k in range(len(BLOCK_SLOTS)):
                if g[base + k] != SENTINEL:
                    raise InvalidGenome(base + k, float(g[base + k]), f"slot beyond M={m} must hold the sentinel")
            continue
        r = _in_range(g, base, *space.r, "R")
        b = _in_range(g, base + 1, *space.b, "B")
        ct_index = _in_range(g, base + 2, 0, len(CONV_TYPES) - 1, "CT index")
        ct = CONV_TYPES[ct_index]
        if ct not in space.ct:
            raise InvalidGenome(base + 2, float(g[base + 2]), f"CT {ct} not in {space.ct}")
        wf = _in_range(g, base + 3, *space.wf, "WF")
        st = _in_range(g, base + 4, 0, 1 if space.allow_skip else 0, "ST")
        blocks.append(MainBlockSpec(r=r, b=b, ct=ct, wf=wf, st=bool(st)))
    return Architecture(oc0=oc0, ks0=ks0, blocks=tuple(blocks))


# ---------------------------------------------------------------------------
# Layer plan and static accounting
# ---------------------------------------------------------------------------


class Mapping(StrEnum):
    COLUMN_DIFFERENTIAL = "column-differential"
    TILE_DIFFERENTIAL = "tile-differential"


class Counting(StrEnum):
    TRAINABLE = "trainable"
    CROSSBAR = "crossbar"


@dataclass(frozen=True, slots=True)
class LayerMatrix:
    """Unrolled weight matrix of one layer: conv k x k, c_in -> c_out gives rows=c_in*k*k, cols=c_out."""

    rows: int
    cols: int
    count: int = 1

    def __post_init__(self) -> None:
        if self.rows < 1 or self.cols < 1 or self.count < 1:
            raise ShapeError(f"LayerMatrix needs positive rows/cols/count, got {self}")


@dataclass(frozen=True, slots=True)
class _Conv:
    c_in: int
    c_out: int
    k: int
    count: int
    role: str  # stem | branch | projection


def _main_block_width(arch: Architecture, i: int) -> int:
    return arch.oc0 * 2**i * arch.blocks[i].wf


def _layer_plan(arch: Architecture, input_shape: InputShape) -> tuple[list[_Conv], int]:
    """Every conv in network order plus the classifier's input width."""
    c, h, w = input_shape
    convs = [_Conv(c, arch.oc0, arch.ks0, 1, "stem")]
    c_in = arch.oc0
    for i, blk in enumerate(arch.blocks):
        c_out = _main_block_width(arch, i)
        for rb in range(blk.r):
            first = rb == 0
            new_h, new_w = (math.ceil(h / 2), math.ceil(w / 2)) if first and i > 0 else (h, w)
            if blk.ct in BOTTLENECK_TYPES:
                mid = max(1, c_out // BOTTLENECK_RATIO)
                convs.append(_Conv(c_in, mid, 1, 1, "branch"))
                convs.append(_Conv(mid, mid, 3, blk.b, "branch"))
                convs.append(_Conv(mid, c_out, 1, 1, "branch"))
            else:
                convs.append(_Conv(c_in, c_out, 3, blk.b, "branch"))
                convs.append(_Conv(c_out, c_out, 3, blk.b, "branch"))
            if c_in != c_out or (new_h, new_w) != (h, w) or (first and blk.st):
                convs.append(_Conv(c_in, c_out, 1, 1, "projection"))
            c_in, h, w = c_out, new_h, new_w
    return convs, c_in


def layer_matrices(
    arch: Architecture,
    input_shape: InputShape = DEFAULT_INPUT_SHAPE,
    num_classes: int = DEFAULT_NUM_CLASSES,
) -> list[LayerMatrix]:
    """One entry per weight-bearing layer; parallel identical branches share an entry via `count`."""
    convs, c_last = _layer_plan(arch, input_shape)
    mats = [LayerMatrix(rows=cv.c_in * cv.k * cv.k, cols=cv.c_out, count=cv.count) for cv in convs]
    mats.append(LayerMatrix(rows=c_last, cols=num_classes))
    return mats


def weight_count(
    arch: Architecture,
    input_shape: InputShape = DEFAULT_INPUT_SHAPE,
    num_classes: int = DEFAULT_NUM_CLASSES,
) -> int:
    """Crossbar-mapped weights: conv kernels, projections and classifier matrix."""
    return sum(lm.rows * lm.cols * lm.count for lm in layer_matrices(arch, input_shape, num_classes))


def param_count(
    arch: Architecture,
    input_shape: InputShape = DEFAULT_INPUT_SHAPE,
    num_classes: int = DEFAULT_NUM_CLASSES,
    counting: Counting | str = Counting.TRAINABLE,
) -> int:
    """Exact number of trainable parameters (or crossbar weights with counting="crossbar")."""
    weights = weight_count(arch, input_shape, num_classes)
    if Counting(counting) is Counting.CROSSBAR:
        return weights
    convs, _ = _layer_plan(arch, input_shape)
    batch_norm = sum(2 * cv.c_out * cv.count for cv in convs)
    return weights + batch_norm + num_classes


def depth(arch: Architecture) -> int:
    """Stem + branch convolutions + classifier; A/C blocks count b+2 per residual block, B/D count 2b.

    1x1 downsample projections are not counted (``conv_count`` includes them),
    following the ResNet naming convention: ResNet-32 has depth 32.
    """
    total = 2
    for blk in arch.blocks:
        per_block = blk.b + 2 if blk.ct in BOTTLENECK_TYPES else 2 * blk.b
        total += blk.r * per_block
    return total


def conv_count(arch: Architecture, input_shape: InputShape = DEFAULT_INPUT_SHAPE) -> int:
    """Every convolution, 1x1 projections included."""
    convs, _ = _layer_plan(arch, input_shape)
    return sum(cv.count for cv in convs)


def tile_count(
    layers: Sequence[LayerMatrix],
    tile_size: int,
    mapping: Mapping | str = Mapping.COLUMN_DIFFERENTIAL,
) -> int:
    """Tiles needed when every layer is partitioned on its own (layers never share a tile)."""
    if tile_size < 1:
        raise ShapeError(f"tile_size must be positive, got {tile_size}")
    if tile_size not in STANDARD_TILE_SIZES:
        logger.warning("Non-standard tile size %s (calibrated for %s)", tile_size, sorted(STANDARD_TILE_SIZES))
    mapping = Mapping(mapping)
    total = 0
    for lm in layers:
        row_tiles = math.ceil(lm.rows / tile_size)
        if mapping is Mapping.COLUMN_DIFFERENTIAL:
            total += row_tiles * math.ceil(2 * lm.cols / tile_size) * lm.count
        else:
            total += 2 * row_tiles * math.ceil(lm.cols / tile_size) * lm.count
    return total


def tile_utilization(
    layers: Sequence[LayerMatrix],
    tile_size: int,
    mapping: Mapping | str = Mapping.COLUMN_DIFFERENTIAL,
) -> float:
    """Fraction of the allocated tiles' cells that hold a device of some weight."""
    tiles = tile_count(layers, tile_size, mapping)
    used = sum(2 * lm.rows * lm.cols * lm.count for lm in layers)
    return used / (tiles * tile_size * tile_size)
