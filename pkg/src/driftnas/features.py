"""Tabular features of an architecture for the surrogate models."""

from __future__ import annotations

import numpy as np

from driftnas.imc import RpuConfig
from driftnas.models import DEFAULT_INPUT_SHAPE, DEFAULT_NUM_CLASSES
from driftnas.space import (
    Architecture,
    InputShape,
    depth,
    encode,
    layer_matrices,
    param_count,
    slot_names,
    tile_utilization,
)

DERIVED_FEATURES = (
    "depth",
    "param_count",
    "mean_wf",
    "mean_branches",
    "total_branches",
    "tile_utilization",
)
HARDWARE_FEATURES = ("tile_size", "prog_noise_std", "nu_mean")

DEFAULT_RPU = RpuConfig()


def feature_names() -> list[str]:
    return [*slot_names(), *DERIVED_FEATURES, *HARDWARE_FEATURES]


FEATURE_SCHEMA = tuple(feature_names())


def featurize(
    arch: Architecture,
    rpu: RpuConfig | None = None,
    input_shape: InputShape = DEFAULT_INPUT_SHAPE,
    num_classes: int = DEFAULT_NUM_CLASSES,
) -> np.ndarray:
    """Genome slots, structural counts and the hardware context, in FEATURE_SCHEMA order."""
    rpu = rpu or DEFAULT_RPU
    layers = layer_matrices(arch, input_shape, num_classes)
    derived = [
        depth(arch),
        param_count(arch, input_shape, num_classes),
        arch.mean_wf,
        arch.mean_branches,
        arch.total_branches,
        tile_utilization(layers, rpu.tile_size, rpu.mapping),
    ]
    hardware = [rpu.tile_size, rpu.prog_noise_std, rpu.nu_mean]
    return np.concatenate([encode(arch), np.asarray(derived + hardware, dtype=np.float64)])


def featurize_many(
    archs: list[Architecture],
    rpu: RpuConfig | None = None,
    input_shape: InputShape = DEFAULT_INPUT_SHAPE,
    num_classes: int = DEFAULT_NUM_CLASSES,
) -> np.ndarray:
    if not archs:
        return np.empty((0, len(FEATURE_SCHEMA)))
    return np.vstack([featurize(a, rpu, input_shape, num_classes) for a in archs])
