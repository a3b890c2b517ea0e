"""Surrogate models: a pairwise ranker plus AVM and std regressors.

The ranker is trained on the pair hinge loss ``max(0, m - (P(a_i) - P(a_j)))``
over pairs with ``acc_i > acc_j``, so only the order of its scores carries
meaning. The regressors predict AVM and the 1-day std under squared error.
"""

from __future__ import annotations

import json
import logging
import math
from collections.abc import Sequence
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Literal, NamedTuple, Protocol, runtime_checkable

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from scipy.stats import kendalltau

from driftnas.boosting import AVM_STREAM, STD_STREAM, BoostedTrees, fit_ranker, fit_regressor
from driftnas.dataset import Dataset, DatasetRow
from driftnas.errors import SchemaError, ShapeError, TrainError
from driftnas.evaluation import Backend, EvalRecord, evaluate_many
from driftnas.features import FEATURE_SCHEMA, featurize_many
from driftnas.imc import RpuConfig
from driftnas.models import DEFAULT_INPUT_SHAPE, DEFAULT_NUM_CLASSES, DEFAULT_TRIALS, SCHEMA_VERSION, SIGMA_FLOOR
from driftnas.space import Architecture, InputShape

logger = logging.getLogger(__name__)

MODEL_KIND = "driftnas-surrogate"


class SurrogateHyper(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    margin: float = Field(default=0.1, gt=0.0)
    n_rounds: int = Field(default=300, ge=1)
    max_depth: int = Field(default=6, ge=1)
    learning_rate: float = Field(default=0.1, gt=0.0)
    subsample: float = Field(default=0.8, gt=0.0, le=1.0)
    pairs_per_anchor: int = Field(default=16, ge=1)
    fine_tune_rounds: int = Field(default=50, ge=1)
    holdout: float = Field(default=0.2, gt=0.0, lt=1.0)
    seed: int = 0


class Predictions(NamedTuple):
    scores: np.ndarray
    avm: np.ndarray
    std: np.ndarray


@runtime_checkable
class Surrogate(Protocol):
    def predict(self, archs: Sequence[Architecture], rpu: RpuConfig | None = None) -> Predictions: ...


# ---------------------------------------------------------------------------
# Losses and metrics
# ---------------------------------------------------------------------------


def hinge_pair_loss(s_i: float, s_j: float, margin: float = 0.1) -> float:
    """Loss of a pair where item i should rank above item j."""
    return max(0.0, margin - (s_i - s_j))


def ranking_loss(scores: Sequence[float], labels: Sequence[float], margin: float = 0.1) -> float:
    """Sum of the pair hinge loss over every ordered pair with labels[i] > labels[j]."""
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    if s.shape != y.shape:
        raise ShapeError(f"scores {s.shape} and labels {y.shape} differ in shape")
    ordered = y[:, None] > y[None, :]
    gaps = margin - (s[:, None] - s[None, :])
    return float(np.maximum(gaps, 0.0)[ordered].sum())


def kendall_tau(scores: Sequence[float], labels: Sequence[float]) -> float:
    """Tau-b; constant inputs (undefined tau) give 0.0."""
    if len(scores) != len(labels):
        raise ShapeError(f"scores ({len(scores)}) and labels ({len(labels)}) differ in length")
    if len(scores) < 2:
        raise ShapeError("kendall_tau needs at least 2 items")
    tau = kendalltau(scores, labels, variant="b").statistic
    return 0.0 if math.isnan(tau) else float(tau)


class ModelMetrics(BaseModel):
    model_config = ConfigDict(frozen=True)

    n: int
    kendall_tau: float
    avm_rmse: float
    std_rmse: float
    avm_label_std: float
    std_label_std: float


# ---------------------------------------------------------------------------
# The ensemble
# ---------------------------------------------------------------------------


@dataclass
class TrainingData:
    keys: list[str] = field(default_factory=list)
    features: list[list[float]] = field(default_factory=list)
    acc_1day: list[float] = field(default_factory=list)
    avm: list[float] = field(default_factory=list)
    std: list[float] = field(default_factory=list)

    @classmethod
    def from_rows(cls, rows: Sequence[DatasetRow]) -> TrainingData:
        return cls(
            keys=[f"{r.arch_id}:{r.rpu_id}" for r in rows],
            features=[list(r.features) for r in rows],
            acc_1day=[r.acc_1day for r in rows],
            avm=[r.avm for r in rows],
            std=[r.acc_1day_std for r in rows],
        )

    def merged(self, other: TrainingData) -> TrainingData:
        """Union keyed on arch/rpu; rows of `other` replace stale ones with the same key."""
        replaced = set(other.keys)
        keep = [k for k, key in enumerate(self.keys) if key not in replaced]
        return TrainingData(
            keys=[self.keys[k] for k in keep] + other.keys,
            features=[self.features[k] for k in keep] + other.features,
            acc_1day=[self.acc_1day[k] for k in keep] + other.acc_1day,
            avm=[self.avm[k] for k in keep] + other.avm,
            std=[self.std[k] for k in keep] + other.std,
        )

    def arrays(self) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        return (
            np.asarray(self.features, dtype=np.float64),
            np.asarray(self.acc_1day, dtype=np.float64),
            np.asarray(self.avm, dtype=np.float64),
            np.asarray(self.std, dtype=np.float64),
        )


@dataclass
class SurrogateEnsemble:
    ranker: BoostedTrees
    avm_regressor: BoostedTrees
    std_regressor: BoostedTrees
    hyper: SurrogateHyper
    feature_schema: tuple[str, ...] = FEATURE_SCHEMA
    input_shape: InputShape = DEFAULT_INPUT_SHAPE
    num_classes: int = DEFAULT_NUM_CLASSES
    rpu: RpuConfig | None = None
    training_data: TrainingData = field(default_factory=TrainingData)
    fine_tunes: int = 0

    @property
    def margin(self) -> float:
        return self.hyper.margin

    def predict_features(self, x: np.ndarray) -> Predictions:
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        if x.shape[1] != len(self.feature_schema):
            raise SchemaError(len(self.feature_schema), x.shape[1])
        return Predictions(self.ranker.predict(x), self.avm_regressor.predict(x), self.std_regressor.predict(x))

    def predict(self, archs: Sequence[Architecture], rpu: RpuConfig | None = None) -> Predictions:
        if tuple(self.feature_schema) != FEATURE_SCHEMA:
            raise SchemaError(list(self.feature_schema), list(FEATURE_SCHEMA))
        x = featurize_many(list(archs), rpu or self.rpu, self.input_shape, self.num_classes)
        return self.predict_features(x)

    def to_dict(self) -> dict[str, Any]:
        return {
            "kind": MODEL_KIND,
            "schema_version": SCHEMA_VERSION,
            "feature_schema": list(self.feature_schema),
            "margin": self.hyper.margin,
            "hyper": self.hyper.model_dump(mode="json"),
            "input_shape": list(self.input_shape),
            "num_classes": self.num_classes,
            "rpu": self.rpu.model_dump(mode="json") if self.rpu else None,
            "fine_tunes": self.fine_tunes,
            "ranker": self.ranker.to_dict(),
            "avm_regressor": self.avm_regressor.to_dict(),
            "std_regressor": self.std_regressor.to_dict(),
            "training_data": {
                "keys": self.training_data.keys,
                "features": self.training_data.features,
                "acc_1day": self.training_data.acc_1day,
                "avm": self.training_data.avm,
                "std": self.training_data.std,
            },
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> SurrogateEnsemble:
        if data.get("kind") != MODEL_KIND:
            raise SchemaError(MODEL_KIND, data.get("kind"))
        if str(data.get("schema_version")) != SCHEMA_VERSION:
            raise SchemaError(SCHEMA_VERSION, data.get("schema_version"))
        schema = tuple(data["feature_schema"])
        if schema != FEATURE_SCHEMA:
            raise SchemaError(list(FEATURE_SCHEMA), list(schema))
        return cls(
            ranker=BoostedTrees.from_dict(data["ranker"]),
            avm_regressor=BoostedTrees.from_dict(data["avm_regressor"]),
            std_regressor=BoostedTrees.from_dict(data["std_regressor"]),
            hyper=SurrogateHyper.model_validate(data["hyper"]),
            feature_schema=schema,
            input_shape=tuple(data["input_shape"]),
            num_classes=int(data["num_classes"]),
            rpu=RpuConfig.model_validate(data["rpu"]) if data.get("rpu") else None,
            training_data=TrainingData(**data["training_data"]),
            fine_tunes=int(data.get("fine_tunes", 0)),
        )

    def save(self, path: str | Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":")))
        return path

    @classmethod
    def load(cls, path: str | Path) -> SurrogateEnsemble:
        try:
            data = json.loads(Path(path).read_text())
        except json.JSONDecodeError as e:
            raise SchemaError("surrogate model JSON", str(e)) from e
        return cls.from_dict(data)


def predict(model: Surrogate, archs: Sequence[Architecture], rpu: RpuConfig | None = None) -> Predictions:
    return model.predict(archs, rpu)


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------


def _check_trainable(acc: np.ndarray) -> None:
    if len(acc) < 2:
        raise TrainError(f"need at least 2 rows to train a ranker, got {len(acc)}")
    if np.all(acc == acc[0]):
        raise TrainError("degenerate dataset: every acc_1day label is equal")


def _fit(
    data: TrainingData, hyper: SurrogateHyper, start: SurrogateEnsemble | None, n_rounds: int
) -> tuple[BoostedTrees, BoostedTrees, BoostedTrees]:
    x, acc, avm, std = data.arrays()
    _check_trainable(acc)
    common = {"max_depth": hyper.max_depth, "learning_rate": hyper.learning_rate, "subsample": hyper.subsample}
    ranker = fit_ranker(
        x, acc, margin=hyper.margin, n_rounds=n_rounds, pairs_per_anchor=hyper.pairs_per_anchor,
        seed=hyper.seed, start=start.ranker if start else None, **common,
    )
    avm_model = fit_regressor(
        x, avm, n_rounds=n_rounds, seed=hyper.seed, stream=AVM_STREAM,
        start=start.avm_regressor if start else None, **common,
    )
    std_model = fit_regressor(
        x, std, n_rounds=n_rounds, seed=hyper.seed, stream=STD_STREAM,
        start=start.std_regressor if start else None, **common,
    )
    return ranker, avm_model, std_model


def train_ranker(ds: Dataset, margin: float | None = None, hyper: SurrogateHyper | None = None) -> SurrogateEnsemble:
    """Fit the ranker and both regressors on every row of `ds`."""
    hyper = hyper or SurrogateHyper()
    if margin is not None:
        hyper = hyper.model_copy(update={"margin": margin})
    if tuple(ds.feature_schema) != FEATURE_SCHEMA:
        raise SchemaError(list(FEATURE_SCHEMA), list(ds.feature_schema))
    rows = ds.rows
    data = TrainingData.from_rows(rows)
    ranker, avm_model, std_model = _fit(data, hyper, None, hyper.n_rounds)
    logger.info("Trained surrogate on %d rows (%d ranking trees)", len(rows), len(ranker.trees))
    return SurrogateEnsemble(
        ranker=ranker,
        avm_regressor=avm_model,
        std_regressor=std_model,
        hyper=hyper,
        input_shape=ds.input_shape,
        num_classes=ds.num_classes,
        rpu=rows[0].rpu,
        training_data=data,
    )


def fine_tune(model: SurrogateEnsemble, new_rows: Dataset | Sequence[DatasetRow]) -> SurrogateEnsemble:
    """Continue boosting on the retained training data plus `new_rows`.

    The tuned model is returned only if its Kendall tau on the new rows is at
    least the current model's; otherwise `model` comes back unchanged.
    """
    rows = list(new_rows)
    if not rows:
        raise TrainError("fine_tune needs at least one new row")
    fresh = TrainingData.from_rows(rows)
    x_new, y_new, _, _ = fresh.arrays()
    if x_new.shape[1] != len(model.feature_schema):
        raise SchemaError(len(model.feature_schema), x_new.shape[1])

    data = model.training_data.merged(fresh)
    ranker, avm_model, std_model = _fit(data, model.hyper, model, model.hyper.fine_tune_rounds)
    tuned = SurrogateEnsemble(
        ranker=ranker,
        avm_regressor=avm_model,
        std_regressor=std_model,
        hyper=model.hyper,
        feature_schema=model.feature_schema,
        input_shape=model.input_shape,
        num_classes=model.num_classes,
        rpu=model.rpu,
        training_data=data,
        fine_tunes=model.fine_tunes + 1,
    )
    if len(rows) >= 2:
        before = kendall_tau(model.predict_features(x_new).scores, y_new)
        after = kendall_tau(tuned.predict_features(x_new).scores, y_new)
        if after < before:
            logger.info("Fine-tune rejected: tau on new rows %.4f -> %.4f", before, after)
            return model
        logger.info("Fine-tuned surrogate on %d new rows: tau %.4f -> %.4f", len(rows), before, after)
    return tuned


def evaluate_model(model: SurrogateEnsemble, ds: Dataset) -> ModelMetrics:
    """Held-out Kendall tau of the ranker and RMSE of both regressors."""
    if len(ds) < 2:
        raise ShapeError("evaluate_model needs at least 2 rows")
    pred = model.predict_features(ds.features())
    acc, avm, std = ds.acc_1day(), ds.avm(), ds.std()
    return ModelMetrics(
        n=len(ds),
        kendall_tau=kendall_tau(pred.scores, acc),
        avm_rmse=float(np.sqrt(np.mean((pred.avm - avm) ** 2))),
        std_rmse=float(np.sqrt(np.mean((pred.std - std) ** 2))),
        avm_label_std=float(np.std(avm)),
        std_label_std=float(np.std(std)),
    )


# ---------------------------------------------------------------------------
# Ground truth as a surrogate
# ---------------------------------------------------------------------------


@dataclass
class OracleSurrogate:
    """Scores architectures with a ground-truth backend; results are cached per (arch, rpu).

    `objective="ratio"` scores by ``acc_1day_mean / max(acc_1day_std, SIGMA_FLOOR)``,
    `"accuracy"` by the 1-day mean alone.
    """

    backend: Backend
    rpu: RpuConfig = field(default_factory=RpuConfig)
    n_trials: int = DEFAULT_TRIALS
    seed: int = 0
    objective: Literal["ratio", "accuracy"] = "accuracy"
    workers: int = 1
    _cache: dict[tuple[Architecture, str], EvalRecord] = field(default_factory=dict, repr=False)

    def records(self, archs: Sequence[Architecture], rpu: RpuConfig | None = None) -> list[EvalRecord]:
        rpu = rpu or self.rpu
        key = rpu.model_dump_json()
        missing = list(dict.fromkeys(a for a in archs if (a, key) not in self._cache))
        if missing:
            fresh = evaluate_many(missing, rpu, self.backend, self.n_trials, self.seed, workers=self.workers)
            for a, rec in zip(missing, fresh, strict=True):
                self._cache[(a, key)] = rec
        return [self._cache[(a, key)] for a in archs]

    def predict(self, archs: Sequence[Architecture], rpu: RpuConfig | None = None) -> Predictions:
        recs = self.records(archs, rpu)
        if self.objective == "ratio":
            scores = [objective_ratio(r) for r in recs]
        else:
            scores = [r.acc_1day_mean for r in recs]
        return Predictions(
            np.asarray(scores, dtype=np.float64),
            np.asarray([r.avm for r in recs], dtype=np.float64),
            np.asarray([r.acc_1day_std for r in recs], dtype=np.float64),
        )


def objective_ratio(record: EvalRecord) -> float:
    """Mean 1-day accuracy over its std, with the std floored at SIGMA_FLOOR."""
    return record.acc_1day_mean / max(record.acc_1day_std, SIGMA_FLOOR)
