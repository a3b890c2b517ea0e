"""Analog crossbar inference model.

A weight matrix ``W`` (rows = inputs, cols = outputs, so ``Y = X @ W``) is
programmed onto tiles of ``tile_size x tile_size`` unit cells. Positive and
negative parts go to two conductance matrices, ``G+ = max(W, 0) * scale`` and
``G- = -min(W, 0) * scale``, with ``scale = g_max / max|W|`` for the whole
layer. Programming adds Gaussian noise per device; every device also draws a
drift exponent and decays as ``G(t) = G(t0) * (t / t0) ** -nu``.

An MVM reads ``(G+ - G-)^T x / scale`` through optional DAC/ADC quantizers;
partial sums of row tiles are added digitally at full precision.
"""

from __future__ import annotations

import hashlib
import logging
import math
from dataclasses import dataclass, replace

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from driftnas.errors import InvalidTime, ShapeError
from driftnas.models import STANDARD_TILE_SIZES
from driftnas.space import Mapping

logger = logging.getLogger(__name__)


class RpuConfig(BaseModel):
    """Hardware model parameters. Noise is a fraction of g_max; times are seconds."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    tile_size: int = Field(default=512, ge=1)
    g_max: float = Field(default=25.0, gt=0.0, description="Conductance ceiling, microsiemens")
    prog_noise_std: float = Field(default=0.03, ge=0.0, description="Programming noise std, fraction of g_max")
    nu_mean: float = Field(default=0.06, ge=0.0)
    nu_std: float = Field(default=0.02, ge=0.0)
    t0: float = Field(default=20.0, gt=0.0, description="Reference read time after programming")
    dac_bits: int = Field(default=0, ge=0, le=24, description="0 = ideal input converter")
    adc_bits: int = Field(default=0, ge=0, le=24, description="0 = ideal output converter")
    inp_bound: float = Field(default=1.0, gt=0.0)
    out_bound: float = Field(default=10.0, gt=0.0)
    mapping: Mapping = Mapping.COLUMN_DIFFERENTIAL
    drift_compensation: bool = False

    def ideal(self) -> RpuConfig:
        """Same geometry with every non-ideality switched off."""
        off = {"prog_noise_std": 0.0, "nu_mean": 0.0, "nu_std": 0.0, "dac_bits": 0, "adc_bits": 0}
        return self.model_copy(update=off)


def rpu_id(cfg: RpuConfig) -> str:
    return hashlib.sha256(cfg.model_dump_json().encode()).hexdigest()[:12]


@dataclass(frozen=True, slots=True)
class ProgrammedTile:
    """One tile's worth of a layer. Conductances in microsiemens at time `time`."""

    g_plus: np.ndarray
    g_minus: np.ndarray
    nu_plus: np.ndarray
    nu_minus: np.ndarray
    scale: float
    row_offset: int = 0
    col_offset: int = 0
    time: float = 0.0

    @property
    def shape(self) -> tuple[int, int]:
        return self.g_plus.shape


def quantize(x: np.ndarray, bits: int, bound: float) -> np.ndarray:
    """Uniform symmetric quantizer with 2**bits levels on [-bound, bound]; bits=0 is the identity."""
    x = np.asarray(x, dtype=np.float64)
    if bits == 0:
        return x
    step = 2.0 * bound / (2**bits - 1)
    clipped = np.clip(x, -bound, bound)
    return np.round((clipped + bound) / step) * step - bound


def _program(block: np.ndarray, cfg: RpuConfig, rng: np.random.Generator) -> tuple[np.ndarray, ...]:
    g_plus = np.maximum(block, 0.0)
    g_minus = np.maximum(-block, 0.0)
    if cfg.prog_noise_std > 0:
        sigma = cfg.prog_noise_std * cfg.g_max
        g_plus = g_plus + rng.normal(0.0, sigma, block.shape)
        g_minus = g_minus + rng.normal(0.0, sigma, block.shape)
    g_plus = np.clip(g_plus, 0.0, cfg.g_max)
    g_minus = np.clip(g_minus, 0.0, cfg.g_max)
    if cfg.nu_std > 0:
        nu_plus = np.maximum(rng.normal(cfg.nu_mean, cfg.nu_std, block.shape), 0.0)
        nu_minus = np.maximum(rng.normal(cfg.nu_mean, cfg.nu_std, block.shape), 0.0)
    else:
        nu_plus = np.full(block.shape, cfg.nu_mean)
        nu_minus = np.full(block.shape, cfg.nu_mean)
    return g_plus, g_minus, nu_plus, nu_minus


def map_weights(w: np.ndarray, cfg: RpuConfig, rng: np.random.Generator) -> list[ProgrammedTile]:
    """Program a weight matrix onto tiles, row-major over the tile grid."""
    w = np.asarray(w, dtype=np.float64)
    if w.ndim != 2 or 0 in w.shape:
        raise ShapeError(f"weights must be a non-empty 2-D matrix, got shape {w.shape}")
    if not np.all(np.isfinite(w)):
        raise ValueError("weights must be finite")
    if cfg.tile_size not in STANDARD_TILE_SIZES:
        logger.debug("Mapping onto non-standard tile size %s", cfg.tile_size)

    w_abs_max = float(np.max(np.abs(w)))
    scale = cfg.g_max / w_abs_max if w_abs_max > 0 else 0.0
    conductance = w * scale

    ts = cfg.tile_size
    tiles = []
    for r0 in range(0, w.shape[0], ts):
        for c0 in range(0, w.shape[1], ts):
            block = conductance[r0 : r0 + ts, c0 : c0 + ts]
            g_plus, g_minus, nu_plus, nu_minus = _program(block, cfg, rng)
            tiles.append(
                ProgrammedTile(
                    g_plus=g_plus, g_minus=g_minus, nu_plus=nu_plus, nu_minus=nu_minus,
                    scale=scale, row_offset=r0, col_offset=c0, time=cfg.t0,
                )
            )
    return tiles


def drift(tile: ProgrammedTile, t: float, cfg: RpuConfig) -> ProgrammedTile:
    """Conductances at time t. Pure: the input tile is left untouched.

    The power law composes, so drifting an already-drifted tile from its own
    `time` gives the same state as drifting the programmed one from t0.
    """
    if t < cfg.t0:
        raise InvalidTime(t, cfg.t0)
    ref = tile.time if tile.time > 0 else cfg.t0
    ratio = t / ref
    if ratio == 1.0:
        return replace(tile, time=t)
    return replace(
        tile,
        g_plus=tile.g_plus * np.power(ratio, -tile.nu_plus),
        g_minus=tile.g_minus * np.power(ratio, -tile.nu_minus),
        time=t,
    )


def mvm(tile: ProgrammedTile, x: np.ndarray, cfg: RpuConfig) -> np.ndarray:
    """Tile output for input vector(s) x; x's last axis must match the tile rows."""
    x = np.asarray(x, dtype=np.float64)
    rows, cols = tile.shape
    if x.shape[-1] != rows:
        raise ShapeError(f"input length {x.shape[-1]} does not match tile rows {rows}")
    if tile.scale == 0.0:
        return np.zeros(x.shape[:-1] + (cols,))
    x_q = quantize(x, cfg.dac_bits, cfg.inp_bound)
    y = x_q @ (tile.g_plus - tile.g_minus) / tile.scale
    return quantize(y, cfg.adc_bits, cfg.out_bound)


def read_back(tiles: list[ProgrammedTile], shape: tuple[int, int]) -> np.ndarray:
    """Weight matrix represented by the tiles' current conductances."""
    w = np.zeros(shape)
    for tile in tiles:
        rows, cols = tile.shape
        if tile.scale > 0:
            w[tile.row_offset : tile.row_offset + rows, tile.col_offset : tile.col_offset + cols] = (
                tile.g_plus - tile.g_minus
            ) / tile.scale
    return w


def _total_conductance(tiles: list[ProgrammedTile]) -> float:
    return math.fsum(float(t.g_plus.sum() + t.g_minus.sum()) for t in tiles)


def linear_forward(
    w: np.ndarray,
    x_batch: np.ndarray,
    cfg: RpuConfig,
    t: float,
    rng: np.random.Generator,
) -> np.ndarray:
    """Batched ``X @ W`` through the tiled analog pipeline read at time t.

    Each input row is normalized by its absolute maximum before the DAC and
    rescaled afterwards. With drift compensation on, outputs are multiplied by
    the layer's total conductance at t0 over its total at t.
    """
    w = np.asarray(w, dtype=np.float64)
    x = np.atleast_2d(np.asarray(x_batch, dtype=np.float64))
    if w.ndim != 2 or x.shape[1] != w.shape[0]:
        raise ShapeError(f"cannot multiply inputs {x.shape} by weights {w.shape}")

    programmed = map_weights(w, cfg, rng)
    drifted = [drift(tile, t, cfg) for tile in programmed]

    norm = np.max(np.abs(x), axis=1, keepdims=True)
    norm[norm == 0] = 1.0
    x_n = x / norm

    out = np.zeros((x.shape[0], w.shape[1]))
    for tile in drifted:
        rows, cols = tile.shape
        partial = mvm(tile, x_n[:, tile.row_offset : tile.row_offset + rows], cfg)
        out[:, tile.col_offset : tile.col_offset + cols] += partial

    if cfg.drift_compensation:
        after = _total_conductance(drifted)
        if after > 0:
            out *= _total_conductance(programmed) / after
    out *= norm
    return out[0] if np.ndim(x_batch) == 1 else out
