"""Ground-truth fitness: accuracy at drift time points across trials.

A backend answers one question, "accuracy of `arch` on hardware `rpu` read
at time t, for the trial whose generator is `rng`". :func:`evaluate` runs it
for every (trial, time) pair and reduces the matrix to the 1-day mean/std
and the accuracy variation over one month (AVM, positive = degradation).

The generator of a trial is recreated from the same seed at every time
point, so a trial sees one set of programmed devices drifting over time.
"""

from __future__ import annotations

import functools
import logging
import math
from collections.abc import Sequence
from typing import Literal, Protocol, runtime_checkable

import numpy as np
from joblib import Parallel, delayed
from pydantic import BaseModel, ConfigDict, Field, model_validator

from driftnas.errors import EvalError
from driftnas.imc import RpuConfig, linear_forward, rpu_id
from driftnas.models import (
    DEFAULT_INPUT_SHAPE,
    DEFAULT_NUM_CLASSES,
    DEFAULT_TIMES,
    DEFAULT_TRIALS,
    ONE_DAY,
    ONE_MONTH,
    ONE_SECOND,
    SCHEMA_VERSION,
)
from driftnas.seeding import derive_rng
from driftnas.space import Architecture, InputShape, arch_id, depth, layer_matrices, param_count, tile_utilization

logger = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# Records
# ---------------------------------------------------------------------------


def avm_columns(times: Sequence[float]) -> tuple[int, int]:
    """Indices of the 1 s and 1 month reads, located by value."""

    def index(target: float) -> int:
        for k, t in enumerate(times):
            if math.isclose(t, target):
                return k
        raise ValueError(f"times must include {target:g} s to define AVM, got {list(times)}")

    return index(ONE_SECOND), index(ONE_MONTH)


def _avm(acc: np.ndarray, times: Sequence[float]) -> float:
    first, last = avm_columns(times)
    return float(acc[:, first].mean() - acc[:, last].mean())


class EvalRecord(BaseModel):
    """Accuracies of one architecture: ``acc[trial][time]``."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    schema_version: str = SCHEMA_VERSION
    arch_id: str
    times: list[float]
    t0: float
    acc: list[list[float]]
    acc_1day_mean: float
    acc_1day_std: float = Field(ge=0.0)
    avm: float
    backend: str
    seed: int
    rpu_id: str = ""

    @model_validator(mode="after")
    def _check(self) -> EvalRecord:
        for row in self.acc:
            if len(row) != len(self.times):
                raise ValueError(f"every trial needs {len(self.times)} accuracies, got {len(row)}")
            if any(not 0.0 <= a <= 1.0 for a in row):
                raise ValueError("accuracies must lie in [0, 1]")
        if not self.acc:
            raise ValueError("a record needs at least one trial")
        expected = _avm(np.asarray(self.acc), self.times)
        if not math.isclose(self.avm, expected, rel_tol=1e-9, abs_tol=1e-12):
            raise ValueError(f"avm {self.avm} does not match acc(1 s) - acc(1 month) = {expected}")
        return self

    @property
    def n_trials(self) -> int:
        return len(self.acc)

    @classmethod
    def from_matrix(
        cls,
        arch_id: str,
        times: Sequence[float],
        acc: np.ndarray,
        *,
        t0: float,
        backend: str,
        seed: int,
        rpu_id: str = "",
    ) -> EvalRecord:
        """Reduce a (trials, times) matrix; 1-day stats use the time closest to one day."""
        acc = np.asarray(acc, dtype=np.float64)
        day = int(np.argmin([abs(t - ONE_DAY) for t in times]))
        column = acc[:, day]
        std = float(np.std(column, ddof=1)) if len(column) > 1 else 0.0
        return cls(
            arch_id=arch_id,
            times=[float(t) for t in times],
            t0=t0,
            acc=acc.tolist(),
            acc_1day_mean=float(column.mean()),
            acc_1day_std=std,
            avm=_avm(acc, times),
            backend=backend,
            seed=seed,
            rpu_id=rpu_id,
        )


@runtime_checkable
class Backend(Protocol):
    name: str

    def accuracy(self, arch: Architecture, rpu: RpuConfig, t: float, rng: np.random.Generator) -> float: ...


# ---------------------------------------------------------------------------
# Synthetic oracle
# ---------------------------------------------------------------------------


class OracleCoefficients(BaseModel):
    """Constants of the synthetic oracle. Changing any value invalidates golden fixtures."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    version: Literal["1"] = "1"
    acc_floor: float = 0.45
    acc_span: float = 0.40
    depth_peak: float = 24.0
    depth_width: float = 1.5
    capacity_center: float = 4.7
    capacity_scale: float = 0.35
    width_bonus: float = 0.06
    branch_bonus: float = 0.02
    noise_coef: float = 0.04
    drift_coef: float = 0.004
    nu_ref: float = 0.06
    depth_ref: float = 24.0
    utilization_relief: float = 0.5
    jitter_std: float = 0.006
    drift_jitter: float = 0.15


@functools.lru_cache(maxsize=65536)
def _static_features(
    arch: Architecture, input_shape: InputShape, num_classes: int, tile_size: int, mapping: str
) -> tuple[int, int, float]:
    layers = layer_matrices(arch, input_shape, num_classes)
    return depth(arch), param_count(arch, input_shape, num_classes), tile_utilization(layers, tile_size, mapping)


def base_accuracy(
    arch: Architecture,
    coeffs: OracleCoefficients,
    input_shape: InputShape = DEFAULT_INPUT_SHAPE,
    num_classes: int = DEFAULT_NUM_CLASSES,
) -> float:
    """Drift-free accuracy: peaks at moderate depth, saturates with capacity, rewards width and branches."""
    d, params, _ = _static_features(arch, input_shape, num_classes, 512, "column-differential")
    depth_term = math.exp(-0.5 * (math.log(d / coeffs.depth_peak) / coeffs.depth_width) ** 2)
    capacity = 1.0 / (1.0 + math.exp(-(math.log10(params) - coeffs.capacity_center) / coeffs.capacity_scale))
    width = coeffs.width_bonus * (arch.mean_wf - 1.0) / 3.0
    branches = coeffs.branch_bonus * (1.0 - math.exp(-(arch.mean_branches - 1.0) / 2.0))
    return coeffs.acc_floor + coeffs.acc_span * depth_term * capacity + width + branches


def noise_penalty(arch: Architecture, rpu: RpuConfig, coeffs: OracleCoefficients) -> float:
    return coeffs.noise_coef * rpu.prog_noise_std / math.sqrt(arch.mean_wf)


def drift_penalty(
    arch: Architecture,
    rpu: RpuConfig,
    t: float,
    coeffs: OracleCoefficients,
    input_shape: InputShape = DEFAULT_INPUT_SHAPE,
    num_classes: int = DEFAULT_NUM_CLASSES,
) -> float:
    """Accuracy lost to drift at time t: log-time growth, deeper and narrower nets lose more."""
    if t <= rpu.t0 or rpu.nu_mean == 0.0:
        return 0.0
    d, _, util = _static_features(arch, input_shape, num_classes, rpu.tile_size, str(rpu.mapping))
    depth_factor = math.log1p(d / coeffs.depth_ref) / math.log(2.0)
    return (
        coeffs.drift_coef
        * (rpu.nu_mean / coeffs.nu_ref)
        * math.log10(t / rpu.t0)
        * depth_factor
        / math.sqrt(arch.mean_wf)
        * (1.0 - coeffs.utilization_relief * util)
    )


def trial_jitter_std(arch: Architecture, coeffs: OracleCoefficients) -> float:
    return coeffs.jitter_std / math.sqrt(arch.mean_wf * arch.mean_branches)


class SyntheticOracle(BaseModel):
    """Deterministic closed-form stand-in for hardware-aware-trained accuracy."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    name: Literal["synthetic-oracle"] = "synthetic-oracle"
    coefficients: OracleCoefficients = OracleCoefficients()
    input_shape: InputShape = DEFAULT_INPUT_SHAPE
    num_classes: int = DEFAULT_NUM_CLASSES

    def accuracy(self, arch: Architecture, rpu: RpuConfig, t: float, rng: np.random.Generator) -> float:
        return synthetic_oracle(arch, rpu, t, rng, self.coefficients, self.input_shape, self.num_classes)


def synthetic_oracle(
    arch: Architecture,
    rpu: RpuConfig,
    t: float,
    trial_rng: np.random.Generator,
    coeffs: OracleCoefficients | None = None,
    input_shape: InputShape = DEFAULT_INPUT_SHAPE,
    num_classes: int = DEFAULT_NUM_CLASSES,
) -> float:
    coeffs = coeffs or OracleCoefficients()
    z_trial, z_drift = trial_rng.standard_normal(2)
    acc = (
        base_accuracy(arch, coeffs, input_shape, num_classes)
        - noise_penalty(arch, rpu, coeffs)
        - drift_penalty(arch, rpu, t, coeffs, input_shape, num_classes) * max(0.0, 1.0 + coeffs.drift_jitter * z_drift)
        + trial_jitter_std(arch, coeffs) * z_trial
    )
    return min(1.0, max(0.0, acc))


# ---------------------------------------------------------------------------
# Tiny trained network
# ---------------------------------------------------------------------------


class TinyNetConfig(BaseModel):
    """Two-layer dense net on a fixed four-blob XOR task; the hidden width follows the architecture."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    input_dim: int = Field(default=8, ge=2)
    n_train: int = Field(default=512, ge=8)
    n_test: int = Field(default=512, ge=8)
    separation: float = Field(default=3.0, gt=0.0)
    dataset_seed: int = 2024
    epochs: int = Field(default=300, ge=1)
    learning_rate: float = Field(default=0.05, gt=0.0)
    momentum: float = Field(default=0.9, ge=0.0, lt=1.0)
    hwa: bool = True
    hwa_noise_scale: float = Field(default=2.0, ge=0.0, description="Training noise std per unit of prog_noise_std")
    hidden_per_channel: float = Field(default=0.5, gt=0.0)
    min_hidden: int = Field(default=4, ge=1)
    max_hidden: int = Field(default=128, ge=1)


@functools.lru_cache(maxsize=8)
def _blobs(cfg: TinyNetConfig) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    rng = np.random.default_rng(cfg.dataset_seed)
    c = cfg.separation / 2.0

    def draw(n: int) -> tuple[np.ndarray, np.ndarray]:
        signs = rng.choice([-1.0, 1.0], size=(n, 2))
        x = rng.standard_normal((n, cfg.input_dim))
        x[:, :2] += c * signs
        y = (signs[:, 0] != signs[:, 1]).astype(np.int64)
        return x, y

    x_train, y_train = draw(cfg.n_train)
    x_test, y_test = draw(cfg.n_test)
    return x_train, y_train, x_test, y_test


def _softmax_grad(logits: np.ndarray, y: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    p = np.exp(z)
    p /= p.sum(axis=1, keepdims=True)
    p[np.arange(len(y)), y] -= 1.0
    return p / len(y)


@functools.lru_cache(maxsize=256)
def _train(cfg: TinyNetConfig, hidden: int, noise_std: float, seed: int) -> tuple[np.ndarray, ...]:
    x, y, _, _ = _blobs(cfg)
    rng = np.random.default_rng(seed)
    w1 = rng.standard_normal((cfg.input_dim, hidden)) * math.sqrt(2.0 / cfg.input_dim)
    b1 = np.zeros(hidden)
    w2 = rng.standard_normal((hidden, 2)) * math.sqrt(2.0 / hidden)
    b2 = np.zeros(2)
    params = [w1, b1, w2, b2]
    velocity = [np.zeros_like(p) for p in params]
    for _ in range(cfg.epochs):
        n1 = w1 + rng.normal(0.0, noise_std * np.abs(w1).max(), w1.shape) if noise_std > 0 else w1
        n2 = w2 + rng.normal(0.0, noise_std * np.abs(w2).max(), w2.shape) if noise_std > 0 else w2
        pre = x @ n1 + b1
        h = np.maximum(pre, 0.0)
        g_logits = _softmax_grad(h @ n2 + b2, y)
        g_h = (g_logits @ n2.T) * (pre > 0)
        grads = [x.T @ g_h, g_h.sum(axis=0), h.T @ g_logits, g_logits.sum(axis=0)]
        for p, v, g in zip(params, velocity, grads, strict=True):
            v *= cfg.momentum
            v -= cfg.learning_rate * g
            p += v
    return w1, b1, w2, b2


class TinyNetBackend(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    name: Literal["tiny-net"] = "tiny-net"
    config: TinyNetConfig = TinyNetConfig()

    def hidden_width(self, arch: Architecture) -> int:
        mean_channels = sum(arch.oc0 * 2**i * b.wf for i, b in enumerate(arch.blocks)) / arch.m
        hidden = round(mean_channels * self.config.hidden_per_channel)
        return int(min(self.config.max_hidden, max(self.config.min_hidden, hidden)))

    def _weights(self, arch: Architecture, rpu: RpuConfig, rng: np.random.Generator) -> tuple[np.ndarray, ...]:
        noise = self.config.hwa_noise_scale * rpu.prog_noise_std if self.config.hwa else 0.0
        seed = int(rng.integers(2**63 - 1))
        return _train(self.config, self.hidden_width(arch), noise, seed)

    def digital_accuracy(self, arch: Architecture, rpu: RpuConfig, rng: np.random.Generator) -> float:
        w1, b1, w2, b2 = self._weights(arch, rpu, rng)
        _, _, x, y = _blobs(self.config)
        logits = np.maximum(x @ w1 + b1, 0.0) @ w2 + b2
        return float(np.mean(logits.argmax(axis=1) == y))

    def accuracy(self, arch: Architecture, rpu: RpuConfig, t: float, rng: np.random.Generator) -> float:
        w1, b1, w2, b2 = self._weights(arch, rpu, rng)
        _, _, x, y = _blobs(self.config)
        h = np.maximum(linear_forward(w1, x, rpu, t, rng) + b1, 0.0)
        logits = linear_forward(w2, h, rpu, t, rng) + b2
        return float(np.mean(logits.argmax(axis=1) == y))


# ---------------------------------------------------------------------------
# Backend selection
# ---------------------------------------------------------------------------


class BackendConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    kind: Literal["synthetic-oracle", "tiny-net"] = "synthetic-oracle"
    n_trials: int = Field(default=DEFAULT_TRIALS, ge=1)
    oracle: OracleCoefficients = OracleCoefficients()
    tiny_net: TinyNetConfig = TinyNetConfig()


def make_backend(
    cfg: BackendConfig, input_shape: InputShape = DEFAULT_INPUT_SHAPE, num_classes: int = DEFAULT_NUM_CLASSES
) -> Backend:
    if cfg.kind == "tiny-net":
        return TinyNetBackend(config=cfg.tiny_net)
    return SyntheticOracle(coefficients=cfg.oracle, input_shape=input_shape, num_classes=num_classes)


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------


def evaluate(
    arch: Architecture,
    rpu: RpuConfig,
    backend: Backend,
    n_trials: int = DEFAULT_TRIALS,
    seed: int = 0,
    times: Sequence[float] = DEFAULT_TIMES,
) -> EvalRecord:
    """Accuracy matrix over trials and times; times before t0 are read at t0.

    `times` may come in any order but must contain 1 s and 1 month, the two
    reads AVM is defined on.
    """
    if n_trials < 1:
        raise ValueError(f"n_trials must be >= 1, got {n_trials}")
    avm_columns(times)
    aid = arch_id(arch)
    acc = np.empty((n_trials, len(times)))
    for trial in range(n_trials):
        for k, t in enumerate(times):
            rng = derive_rng(seed, aid, trial)
            try:
                value = float(backend.accuracy(arch, rpu, max(t, rpu.t0), rng))
            except Exception as e:
                raise EvalError(aid, f"{backend.name} failed at t={t}: {e}") from e
            if not math.isfinite(value):
                raise EvalError(aid, f"{backend.name} returned {value} at t={t}")
            acc[trial, k] = min(1.0, max(0.0, value))
    return EvalRecord.from_matrix(aid, times, acc, t0=rpu.t0, backend=backend.name, seed=seed, rpu_id=rpu_id(rpu))


def _evaluate_or_none(
    arch: Architecture, rpu: RpuConfig, backend: Backend, n_trials: int, seed: int, times: Sequence[float]
) -> EvalRecord | None:
    try:
        return evaluate(arch, rpu, backend, n_trials, seed, times)
    except EvalError as e:
        logger.warning("Evaluation failed: %s", e)
        return None


def evaluate_many(
    archs: Sequence[Architecture],
    rpu: RpuConfig,
    backend: Backend,
    n_trials: int = DEFAULT_TRIALS,
    seed: int = 0,
    times: Sequence[float] = DEFAULT_TIMES,
    workers: int = 1,
    skip_errors: bool = False,
) -> list[EvalRecord | None]:
    """Evaluate in order; with skip_errors failed architectures yield None instead of raising."""
    fn = _evaluate_or_none if skip_errors else evaluate
    if workers <= 1 or len(archs) <= 1:
        return [fn(a, rpu, backend, n_trials, seed, times) for a in archs]
    return list(Parallel(n_jobs=workers)(delayed(fn)(a, rpu, backend, n_trials, seed, times) for a in archs))


def drift_curve(records: Sequence[EvalRecord]) -> list[dict[str, float | str]]:
    """Per-time mean and std of every record, one row per (arch, time)."""
    rows = []
    for rec in records:
        acc = np.asarray(rec.acc)
        for k, t in enumerate(rec.times):
            column = acc[:, k]
            rows.append({
                "arch_id": rec.arch_id,
                "time_s": t,
                "read_time_s": max(t, rec.t0),
                "acc_mean": float(column.mean()),
                "acc_std": float(np.std(column, ddof=1)) if len(column) > 1 else 0.0,
            })
    return rows
