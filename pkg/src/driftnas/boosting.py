"""Gradient-boosted regression trees with a pairwise hinge ranking objective.

Each boosting round fits a ``sklearn`` :class:`DecisionTreeRegressor` to the
pseudo-responses of the current scores and immediately dumps it to plain
arrays. Predictions always go through the dumps, so a model reloaded from
JSON scores exactly like the one that was trained.

Trees compare float32 inputs against float64 thresholds, as sklearn does.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Any

import numpy as np
from sklearn.tree import DecisionTreeRegressor

from driftnas.seeding import derive_int, derive_rng

logger = logging.getLogger(__name__)

# Stream ids for derive_rng(seed, stream, round)
RANKER_STREAM = 1
AVM_STREAM = 2
STD_STREAM = 3


@dataclass(frozen=True, slots=True)
class TreeDump:
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    @classmethod
    def from_sklearn(cls, tree: DecisionTreeRegressor) -> TreeDump:
        t = tree.tree_
        return cls(
            feature=np.asarray(t.feature, dtype=np.int64),
            threshold=np.asarray(t.threshold, dtype=np.float64),
            left=np.asarray(t.children_left, dtype=np.int64),
            right=np.asarray(t.children_right, dtype=np.int64),
            value=np.asarray(t.value[:, 0, 0], dtype=np.float64),
        )

    @property
    def depth(self) -> int:
        depth = np.zeros(len(self.feature), dtype=np.int64)
        for node in range(len(self.feature)):
            if self.left[node] >= 0:
                depth[self.left[node]] = depth[self.right[node]] = depth[node] + 1
        return int(depth.max())

    def predict(self, x32: np.ndarray) -> np.ndarray:
        n = x32.shape[0]
        node = np.zeros(n, dtype=np.int64)
        rows = np.arange(n)
        for _ in range(self.depth):
            feat = self.feature[node]
            internal = feat >= 0
            go_left = x32[rows, np.where(internal, feat, 0)] <= self.threshold[node]
            node = np.where(internal, np.where(go_left, self.left[node], self.right[node]), node)
        return self.value[node]

    def to_dict(self) -> dict[str, list]:
        return {
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "value": self.value.tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict[str, list]) -> TreeDump:
        return cls(
            feature=np.asarray(data["feature"], dtype=np.int64),
            threshold=np.asarray(data["threshold"], dtype=np.float64),
            left=np.asarray(data["left"], dtype=np.int64),
            right=np.asarray(data["right"], dtype=np.int64),
            value=np.asarray(data["value"], dtype=np.float64),
        )


@dataclass(slots=True)
class BoostedTrees:
    """Additive model ``init + learning_rate * sum(tree(x))``."""

    init: float
    learning_rate: float
    trees: list[TreeDump] = field(default_factory=list)

    def predict(self, x: np.ndarray) -> np.ndarray:
        x32 = np.asarray(x, dtype=np.float32)
        out = np.full(x32.shape[0], self.init, dtype=np.float64)
        for tree in self.trees:
            out += self.learning_rate * tree.predict(x32)
        return out

    def copy(self) -> BoostedTrees:
        return BoostedTrees(self.init, self.learning_rate, list(self.trees))

    def to_dict(self) -> dict[str, Any]:
        return {"init": self.init, "learning_rate": self.learning_rate, "trees": [t.to_dict() for t in self.trees]}

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> BoostedTrees:
        return cls(float(data["init"]), float(data["learning_rate"]), [TreeDump.from_dict(t) for t in data["trees"]])


def _subsample(n: int, fraction: float, rng: np.random.Generator) -> np.ndarray:
    if fraction >= 1.0:
        return np.arange(n)
    picked = np.flatnonzero(rng.random(n) < fraction)
    return picked if len(picked) >= 2 else np.arange(n)


def _fit_tree(x: np.ndarray, target: np.ndarray, max_depth: int, random_state: int) -> TreeDump:
    tree = DecisionTreeRegressor(max_depth=max_depth, random_state=random_state)
    tree.fit(x, target)
    return TreeDump.from_sklearn(tree)


def sample_pairs(labels: np.ndarray, per_anchor: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Up to `per_anchor` pairs (i, j) per anchor i with labels[i] > labels[j], drawn with replacement."""
    n = len(labels)
    order = np.argsort(labels, kind="stable")
    below = np.searchsorted(labels[order], labels, side="left")
    anchors = np.repeat(np.arange(n), per_anchor)
    counts = below[anchors]
    keep = counts > 0
    anchors, counts = anchors[keep], counts[keep]
    picks = (rng.random(len(anchors)) * counts).astype(np.int64)
    return anchors, order[picks]


def hinge_residuals(
    scores: np.ndarray, pairs: tuple[np.ndarray, np.ndarray], margin: float, per_anchor: int
) -> tuple[np.ndarray, int]:
    """Negative gradient of the summed pair hinge loss, scaled by 1/per_anchor, and the violation count."""
    i, j = pairs
    violated = margin - (scores[i] - scores[j]) > 0
    residual = np.zeros(len(scores))
    np.add.at(residual, i[violated], 1.0)
    np.add.at(residual, j[violated], -1.0)
    return residual / per_anchor, int(violated.sum())


def fit_ranker(
    x: np.ndarray,
    labels: np.ndarray,
    *,
    margin: float,
    n_rounds: int,
    max_depth: int,
    learning_rate: float,
    subsample: float,
    pairs_per_anchor: int,
    seed: int,
    start: BoostedTrees | None = None,
) -> BoostedTrees:
    """Boost a scoring function so that higher labels get scores at least `margin` higher."""
    model = start.copy() if start is not None else BoostedTrees(0.0, learning_rate)
    scores = model.predict(x)
    x32 = np.asarray(x, dtype=np.float32)
    first = len(model.trees)
    for r in range(first, first + n_rounds):
        rng = derive_rng(seed, RANKER_STREAM, r)
        pairs = sample_pairs(labels, pairs_per_anchor, rng)
        residual, violations = hinge_residuals(scores, pairs, margin, pairs_per_anchor)
        if violations == 0:
            logger.debug("Ranker converged after %d rounds: no sampled pair violates the margin", r)
            break
        rows = _subsample(len(labels), subsample, rng)
        tree = _fit_tree(x32[rows], residual[rows], max_depth, derive_int(seed, RANKER_STREAM, r))
        model.trees.append(tree)
        scores += model.learning_rate * tree.predict(x32)
    return model


def fit_regressor(
    x: np.ndarray,
    target: np.ndarray,
    *,
    n_rounds: int,
    max_depth: int,
    learning_rate: float,
    subsample: float,
    seed: int,
    stream: int,
    start: BoostedTrees | None = None,
) -> BoostedTrees:
    """Squared-error gradient boosting."""
    model = start.copy() if start is not None else BoostedTrees(float(np.mean(target)), learning_rate)
    pred = model.predict(x)
    x32 = np.asarray(x, dtype=np.float32)
    first = len(model.trees)
    for r in range(first, first + n_rounds):
        rng = derive_rng(seed, stream, r)
        rows = _subsample(len(target), subsample, rng)
        tree = _fit_tree(x32[rows], (target - pred)[rows], max_depth, derive_int(seed, stream, r))
        model.trees.append(tree)
        pred += model.learning_rate * tree.predict(x32)
    return model
