"""Architecture dataset: evaluated rows plus their features, stored as NDJSON.

File layout: one ``{"kind": "header", ...}`` line carrying the schema
version, feature schema, task and config echo, then one ``{"kind": "row"}``
line per (architecture, hardware config) pair.
"""

from __future__ import annotations

import itertools
import json
import logging
from collections.abc import Iterable, Iterator, Sequence
from pathlib import Path
from typing import Any, Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError

from driftnas.errors import SchemaError
from driftnas.evaluation import Backend, EvalRecord, evaluate_many
from driftnas.features import FEATURE_SCHEMA, featurize
from driftnas.imc import RpuConfig, rpu_id
from driftnas.models import DEFAULT_INPUT_SHAPE, DEFAULT_NUM_CLASSES, DEFAULT_TRIALS, SCHEMA_VERSION
from driftnas.sampling import sample_lhs
from driftnas.seeding import derive_rng
from driftnas.space import FULL_SPACE, Architecture, InputShape, SearchSpace, arch_id, from_dict

logger = logging.getLogger(__name__)

Provenance = Literal["lhs", "search-harvested"]


class DatasetConfig(BaseModel):
    """Dataset creation settings; empty grid axes fall back to the base RpuConfig value."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    n_lhs: int = Field(default=1000, ge=1)
    tile_sizes: list[int] = Field(default_factory=list)
    prog_noise_stds: list[float] = Field(default_factory=list)
    t_p: float | None = Field(default=None, gt=0)

    def grid(self, base: RpuConfig) -> list[RpuConfig]:
        return rpu_grid(base, self.tile_sizes, self.prog_noise_stds)


def rpu_grid(
    base: RpuConfig, tile_sizes: Sequence[int] = (), prog_noise_stds: Sequence[float] = ()
) -> list[RpuConfig]:
    """Cartesian product tiles x noise levels, tile-major."""
    tiles = list(tile_sizes) or [base.tile_size]
    noises = list(prog_noise_stds) or [base.prog_noise_std]
    return [
        base.model_copy(update={"tile_size": ts, "prog_noise_std": ns})
        for ts, ns in itertools.product(tiles, noises)
    ]


class DatasetRow(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    kind: Literal["row"] = "row"
    arch: dict[str, Any]
    arch_id: str
    rpu: RpuConfig
    rpu_id: str
    features: list[float]
    acc_1day: float
    avm: float
    acc_1day_std: float
    provenance: Provenance
    record: EvalRecord

    @classmethod
    def from_record(
        cls,
        arch: Architecture,
        rpu: RpuConfig,
        record: EvalRecord,
        provenance: Provenance,
        input_shape: InputShape = DEFAULT_INPUT_SHAPE,
        num_classes: int = DEFAULT_NUM_CLASSES,
    ) -> DatasetRow:
        return cls(
            arch=arch.to_dict(),
            arch_id=arch_id(arch),
            rpu=rpu,
            rpu_id=rpu_id(rpu),
            features=featurize(arch, rpu, input_shape, num_classes).tolist(),
            acc_1day=record.acc_1day_mean,
            avm=record.avm,
            acc_1day_std=record.acc_1day_std,
            provenance=provenance,
            record=record,
        )

    @property
    def key(self) -> tuple[str, str]:
        return self.arch_id, self.rpu_id

    @property
    def architecture(self) -> Architecture:
        return from_dict(self.arch)


class DatasetHeader(BaseModel):
    model_config = ConfigDict(extra="forbid")

    kind: Literal["header"] = "header"
    schema_version: str = SCHEMA_VERSION
    feature_schema: list[str]
    input_shape: tuple[int, int, int] = DEFAULT_INPUT_SHAPE
    num_classes: int = DEFAULT_NUM_CLASSES
    config: dict[str, Any] = Field(default_factory=dict)


class Dataset:
    """Ordered rows with unique (arch_id, rpu_id) keys and one feature schema."""

    def __init__(
        self,
        rows: Iterable[DatasetRow] = (),
        feature_schema: Sequence[str] = FEATURE_SCHEMA,
        input_shape: InputShape = DEFAULT_INPUT_SHAPE,
        num_classes: int = DEFAULT_NUM_CLASSES,
        config: dict[str, Any] | None = None,
    ) -> None:
        self.feature_schema = tuple(feature_schema)
        self.input_shape = tuple(input_shape)
        self.num_classes = num_classes
        self.config = config or {}
        self._rows: list[DatasetRow] = []
        self._keys: set[tuple[str, str]] = set()
        self.extend(rows)

    def __len__(self) -> int:
        return len(self._rows)

    def __iter__(self) -> Iterator[DatasetRow]:
        return iter(self._rows)

    @property
    def rows(self) -> list[DatasetRow]:
        return list(self._rows)

    def add(self, row: DatasetRow) -> None:
        if len(row.features) != len(self.feature_schema):
            raise SchemaError(len(self.feature_schema), len(row.features))
        if row.key in self._keys:
            raise ValueError(f"duplicate row for arch {row.arch_id} on rpu {row.rpu_id}")
        self._keys.add(row.key)
        self._rows.append(row)

    def extend(self, rows: Iterable[DatasetRow], skip_duplicates: bool = False) -> int:
        """Append rows; returns how many were added."""
        added = 0
        for row in rows:
            if skip_duplicates and row.key in self._keys:
                continue
            self.add(row)
            added += 1
        return added

    def like(self, rows: Iterable[DatasetRow] = ()) -> Dataset:
        """A dataset sharing this one's schema, task and config."""
        return Dataset(rows, self.feature_schema, self.input_shape, self.num_classes, self.config)

    def features(self) -> np.ndarray:
        if not self._rows:
            return np.empty((0, len(self.feature_schema)))
        return np.asarray([r.features for r in self._rows], dtype=np.float64)

    def acc_1day(self) -> np.ndarray:
        return np.asarray([r.acc_1day for r in self._rows], dtype=np.float64)

    def avm(self) -> np.ndarray:
        return np.asarray([r.avm for r in self._rows], dtype=np.float64)

    def std(self) -> np.ndarray:
        return np.asarray([r.acc_1day_std for r in self._rows], dtype=np.float64)

    def split(self, holdout: float, seed: int) -> tuple[Dataset, Dataset]:
        """Seeded random (train, held-out) split; the held-out part gets round(holdout * n) rows."""
        if not 0.0 < holdout < 1.0:
            raise ValueError(f"holdout fraction must lie in (0, 1), got {holdout}")
        order = derive_rng(seed, "split").permutation(len(self._rows))
        n_test = round(holdout * len(self._rows))
        test_idx = set(order[:n_test].tolist())
        train = [r for i, r in enumerate(self._rows) if i not in test_idx]
        test = [r for i, r in enumerate(self._rows) if i in test_idx]
        return self.like(train), self.like(test)

    def header(self) -> DatasetHeader:
        return DatasetHeader(
            feature_schema=list(self.feature_schema),
            input_shape=self.input_shape,
            num_classes=self.num_classes,
            config=self.config,
        )

    def save(self, path: str | Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        lines = [json.dumps(self.header().model_dump(mode="json"), sort_keys=True)]
        lines.extend(json.dumps(r.model_dump(mode="json"), sort_keys=True) for r in self._rows)
        path.write_text("\n".join(lines) + "\n")
        return path

    @classmethod
    def load(cls, path: str | Path) -> Dataset:
        lines = [ln for ln in Path(path).read_text().splitlines() if ln.strip()]
        if not lines:
            raise SchemaError("dataset header", "empty file")
        try:
            header = DatasetHeader.model_validate_json(lines[0])
        except ValidationError as e:
            raise SchemaError("dataset header", str(e)) from e
        if header.schema_version != SCHEMA_VERSION:
            raise SchemaError(SCHEMA_VERSION, header.schema_version)
        if tuple(header.feature_schema) != FEATURE_SCHEMA:
            raise SchemaError(list(FEATURE_SCHEMA), header.feature_schema)
        try:
            rows = [DatasetRow.model_validate_json(ln) for ln in lines[1:]]
        except ValidationError as e:
            raise SchemaError("dataset row", str(e)) from e
        return cls(rows, header.feature_schema, header.input_shape, header.num_classes, header.config)


def rows_from_records(
    archs: Sequence[Architecture],
    records: Sequence[EvalRecord | None],
    rpu: RpuConfig,
    provenance: Provenance,
    input_shape: InputShape = DEFAULT_INPUT_SHAPE,
    num_classes: int = DEFAULT_NUM_CLASSES,
) -> list[DatasetRow]:
    return [
        DatasetRow.from_record(a, rpu, rec, provenance, input_shape, num_classes)
        for a, rec in zip(archs, records, strict=True)
        if rec is not None
    ]


def build_dataset(
    n_lhs: int,
    backend: Backend,
    rpu_grid: Sequence[RpuConfig],
    seed: int,
    n_trials: int = DEFAULT_TRIALS,
    space: SearchSpace = FULL_SPACE,
    input_shape: InputShape = DEFAULT_INPUT_SHAPE,
    num_classes: int = DEFAULT_NUM_CLASSES,
    t_p: float | None = None,
    workers: int = 1,
    config: dict[str, Any] | None = None,
) -> Dataset:
    """Evaluate n_lhs Latin-hypercube architectures under every hardware config."""
    if n_lhs < 1:
        raise ValueError(f"n_lhs must be >= 1, got {n_lhs}")
    archs = sample_lhs(n_lhs, seed, t_p, space, input_shape, num_classes)
    ds = Dataset(input_shape=input_shape, num_classes=num_classes, config=config)
    dropped = duplicates = 0
    for rpu in rpu_grid:
        records = evaluate_many(archs, rpu, backend, n_trials, seed, workers=workers, skip_errors=True)
        dropped += sum(rec is None for rec in records)
        rows = rows_from_records(archs, records, rpu, "lhs", input_shape, num_classes)
        duplicates += len(rows) - ds.extend(rows, skip_duplicates=True)
    if dropped:
        logger.warning("Dropped %d rows after evaluation errors", dropped)
    if duplicates:
        logger.info("Skipped %d duplicate architectures drawn by LHS", duplicates)
    logger.info("Built dataset: %d rows from %d architectures x %d hardware configs", len(ds), n_lhs, len(rpu_grid))
    return ds
