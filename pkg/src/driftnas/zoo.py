"""Reference architectures used as fixtures, CLI shortcuts and tool examples.

Entries are the published final encodings (OC0, KS0, M, R*, B*, CT*, WF*)
per task, plus ``resnet32_cifar``: the standard 16-channel CIFAR ResNet-32
with 1x1 projections. That network reproduces the published weight total of
ResNet-32 (464,432 crossbar weights: 461,232 conv + 2,560 projection + 640
classifier), its depth (32) and its tile count at 512x512 (43), while the
published encoding (64, 7, 3, ...) listed as ``resnet32`` does not.
"""

from __future__ import annotations

from dataclasses import dataclass

from driftnas.space import Architecture, InputShape, MainBlockSpec


@dataclass(frozen=True, slots=True)
class Task:
    name: str
    input_shape: InputShape
    num_classes: int


CIFAR10 = Task("cifar10", (3, 32, 32), 10)
VWW = Task("vww", (3, 96, 96), 2)
KWS = Task("kws", (1, 49, 10), 12)


@dataclass(frozen=True, slots=True)
class ZooEntry:
    name: str
    task: Task
    arch: Architecture
    note: str = ""


def _arch(oc0: int, ks0: int, r: tuple, b: tuple, ct: tuple, wf: tuple) -> Architecture:
    blocks = tuple(MainBlockSpec(r=ri, b=bi, ct=ci, wf=wi) for ri, bi, ci, wi in zip(r, b, ct, wf, strict=True))
    return Architecture(oc0=oc0, ks0=ks0, blocks=blocks)


ZOO: dict[str, ZooEntry] = {
    e.name: e
    for e in (
        ZooEntry("resnet32", CIFAR10, _arch(64, 7, (5, 5, 5), (1, 1, 1), ("B", "B", "B"), (1, 1, 1)),
                 "published encoding; its weight total does not match the published 464,432"),
        ZooEntry("resnet32_cifar", CIFAR10, _arch(16, 3, (5, 5, 5), (1, 1, 1), ("B", "B", "B"), (1, 1, 1)),
                 "16-channel CIFAR ResNet-32: 464,432 crossbar weights, depth 32, 43 tiles at 512"),
        ZooEntry("cifar10_t100", CIFAR10, _arch(32, 3, (2,), (1,), ("C",), (2,))),
        ZooEntry("cifar10_t300", CIFAR10, _arch(32, 3, (3, 3), (1, 1), ("A", "B"), (2, 1))),
        ZooEntry("cifar10_t500", CIFAR10, _arch(64, 5, (3,), (3,), ("A",), (2,)), "depth 17"),
        ZooEntry("cifar10_t1m", CIFAR10, _arch(32, 5, (3, 3), (2, 2), ("A", "A"), (3, 3))),
        ZooEntry("vww_t200", VWW, _arch(24, 3, (2, 2, 2), (1, 2, 1), ("B", "A", "A"), (2, 2, 2))),
        ZooEntry("vww_t400", VWW, _arch(68, 3, (3, 5), (2, 1), ("C", "C"), (3, 2))),
        ZooEntry("kws_t200", KWS, _arch(80, 1, (1,), (2,), ("C",), (4,))),
        ZooEntry("kws_t400", KWS, _arch(68, 1, (2, 1), (1, 2), ("B", "B"), (3, 3))),
    )
}

# The nine published encodings (the 16-channel fixture is derived, not published)
PUBLISHED = tuple(name for name in ZOO if name != "resnet32_cifar")


def get(name: str) -> ZooEntry:
    try:
        return ZOO[name]
    except KeyError:
        raise KeyError(f"unknown reference architecture {name!r}; known: {', '.join(ZOO)}") from None
