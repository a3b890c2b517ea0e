"""Shared pytest fixtures for driftnas tests."""

from __future__ import annotations

import numpy as np
import pytest

from driftnas.dataset import build_dataset
from driftnas.evaluation import SyntheticOracle
from driftnas.imc import RpuConfig
from driftnas.space import Architecture, MainBlockSpec, SearchSpace, depth
from driftnas.surrogate import Predictions, SurrogateHyper, train_ranker
from driftnas.zoo import ZOO


@pytest.fixture
def resnet32():
    """16-channel CIFAR ResNet-32 with 1x1 projections."""
    return ZOO["resnet32_cifar"].arch


@pytest.fixture
def t500():
    """Published CIFAR-10 architecture for the 500k budget."""
    return ZOO["cifar10_t500"].arch


@pytest.fixture
def small_arch():
    return Architecture(oc0=16, ks0=3, blocks=(MainBlockSpec(r=2, b=1, ct="B", wf=1),))


@pytest.fixture
def oracle():
    return SyntheticOracle()


@pytest.fixture
def rpu():
    return RpuConfig()


@pytest.fixture
def small_space():
    """Enumerable subspace: one main block, fixed stem, 48 architectures."""
    return SearchSpace(oc0=(16, 16), ks0=(3,), m=(1, 1), r=(1, 3), b=(1, 2), ct=("A", "B"), wf=(1, 2))


@pytest.fixture(scope="session")
def tiny_dataset():
    """60 LHS architectures scored by the synthetic oracle."""
    return build_dataset(60, SyntheticOracle(), [RpuConfig()], seed=0, n_trials=3)


@pytest.fixture(scope="session")
def tiny_hyper():
    return SurrogateHyper(n_rounds=30, max_depth=3, fine_tune_rounds=5)


@pytest.fixture(scope="session")
def tiny_surrogate(tiny_dataset, tiny_hyper):
    return train_ranker(tiny_dataset, hyper=tiny_hyper)


class ConstantSurrogate:
    """Every architecture gets the same score and the given AVM."""

    def __init__(self, avm: float = 0.0) -> None:
        self.avm = avm

    def predict(self, archs, rpu=None):
        n = len(archs)
        return Predictions(np.zeros(n), np.full(n, self.avm), np.full(n, 0.01))


class ShallowSurrogate:
    """Score = -depth: prefers shallow networks."""

    def predict(self, archs, rpu=None):
        n = len(archs)
        return Predictions(np.array([-float(depth(a)) for a in archs]), np.zeros(n), np.full(n, 0.01))


@pytest.fixture
def constant_surrogate():
    return ConstantSurrogate()


@pytest.fixture
def shallow_surrogate():
    return ShallowSurrogate()
