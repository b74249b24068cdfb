"""Gradient-boosted decision trees with logistic loss.

Exact greedy splits on first/second-order statistics (g = p - y,
h = p(1-p)); leaf value -G/(H+lambda). Stand-in for a full boosting
library: the training sets here are small enough that histogram
approximations and column subsampling would buy nothing.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

_LAMBDA = 1.0
_MIN_GAIN = 1e-12


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


@dataclass
class _Node:
    # leaf iff feature < 0
    feature: int = -1
    threshold: float = 0.0
    left: int = -1
    right: int = -1
    value: float = 0.0


@dataclass
class GbdtModel:
    feature_names: list[str]
    learning_rate: float = 0.1
    base_score: float = 0.0
    trees: list[list[_Node]] = field(default_factory=list)

    def _tree_values(self, nodes: list[_Node], x: np.ndarray) -> np.ndarray:
        out = np.empty(x.shape[0])
        for i in range(x.shape[0]):
            cur = 0
            while nodes[cur].feature >= 0:
                node = nodes[cur]
                cur = node.left if x[i, node.feature] < node.threshold else node.right
            out[i] = nodes[cur].value
        return out

    def predict_raw(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != len(self.feature_names):
            raise ValueError(
                f"gbdt: expected (*, {len(self.feature_names)}) features, got {x.shape}")
        raw = np.full(x.shape[0], self.base_score)
        for nodes in self.trees:
            raw += self.learning_rate * self._tree_values(nodes, x)
        return raw

    def predict(self, x: np.ndarray, feature_names: list[str] | None = None) -> np.ndarray:
        if feature_names is not None and list(feature_names) != self.feature_names:
            raise ValueError("gbdt: feature manifest mismatch")
        return _sigmoid(self.predict_raw(x))

    def save(self, path) -> None:
        payload = {
            "version": 1,
            "feature_names": self.feature_names,
            "learning_rate": self.learning_rate,
            "base_score": self.base_score,
            "trees": [[[n.feature, n.threshold, n.left, n.right, n.value]
                       for n in nodes] for nodes in self.trees],
        }
        Path(path).write_text(json.dumps(payload, sort_keys=True), encoding="utf-8")

    @classmethod
    def load(cls, path) -> "GbdtModel":
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
        if payload.get("version") != 1:
            raise ValueError(f"gbdt: unsupported file version in {path}")
        model = cls(feature_names=list(payload["feature_names"]),
                    learning_rate=payload["learning_rate"],
                    base_score=payload["base_score"])
        for tree in payload["trees"]:
            model.trees.append([_Node(int(f), float(t), int(l), int(r), float(v))
                                for f, t, l, r, v in tree])
        return model


def _best_split(x: np.ndarray, g: np.ndarray, h: np.ndarray,
                rows: np.ndarray) -> tuple[float, int, float] | None:
    """(gain, feature, threshold) maximizing the split objective, or None."""
    g_rows = g[rows]
    h_rows = h[rows]
    g_sum = g_rows.sum()
    h_sum = h_rows.sum()
    parent = g_sum * g_sum / (h_sum + _LAMBDA)
    best: tuple[float, int, float] | None = None
    for f in range(x.shape[1]):
        vals = x[rows, f]
        order = np.argsort(vals, kind="stable")
        sv = vals[order]
        gl = np.cumsum(g_rows[order])[:-1]
        hl = np.cumsum(h_rows[order])[:-1]
        gains = 0.5 * (gl * gl / (hl + _LAMBDA)
                       + (g_sum - gl) ** 2 / (h_sum - hl + _LAMBDA) - parent)
        gains[sv[:-1] == sv[1:]] = -np.inf  # can't cut between equal values
        i = int(np.argmax(gains))
        if gains[i] > _MIN_GAIN and (best is None or gains[i] > best[0]):
            best = (float(gains[i]), f, float((sv[i] + sv[i + 1]) / 2.0))
    return best


def _grow_tree(x: np.ndarray, g: np.ndarray, h: np.ndarray,
               rows: np.ndarray, depth: int, max_depth: int,
               nodes: list[_Node]) -> int:
    idx = len(nodes)
    nodes.append(_Node())
    split = _best_split(x, g, h, rows) if depth < max_depth and len(rows) >= 2 else None
    if split is None:
        nodes[idx].value = -g[rows].sum() / (h[rows].sum() + _LAMBDA)
        return idx
    _, f, thr = split
    mask = x[rows, f] < thr
    nodes[idx].feature = f
    nodes[idx].threshold = thr
    nodes[idx].left = _grow_tree(x, g, h, rows[mask], depth + 1, max_depth, nodes)
    nodes[idx].right = _grow_tree(x, g, h, rows[~mask], depth + 1, max_depth, nodes)
    return idx


def gbdt_train(x: np.ndarray, y: np.ndarray, feature_names: list[str],
               rounds: int = 100, max_depth: int = 4, learning_rate: float = 0.1,
               seed: int = 0) -> GbdtModel:
    """Greedy splits are exact, so training is deterministic; seed reserved."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != len(feature_names):
        raise ValueError("gbdt: feature matrix does not match manifest")
    if x.shape[0] != y.shape[0] or x.shape[0] < 2:
        raise ValueError("gbdt: need at least 2 labeled examples")
    if not np.all(np.isfinite(x)):
        raise ValueError("gbdt: non-finite feature values")
    if set(np.unique(y)) != {0.0, 1.0}:
        raise ValueError("gbdt: labels must include both classes")
    if rounds < 0 or max_depth < 1:
        raise ValueError("gbdt: bad rounds/depth")

    model = GbdtModel(feature_names=list(feature_names), learning_rate=learning_rate)
    raw = np.full(x.shape[0], model.base_score)
    all_rows = np.arange(x.shape[0])
    for _ in range(rounds):
        p = _sigmoid(raw)
        g = p - y
        h = p * (1.0 - p)
        nodes: list[_Node] = []
        _grow_tree(x, g, h, all_rows, 0, max_depth, nodes)
        model.trees.append(nodes)
        raw += learning_rate * model._tree_values(nodes, x)
    return model


def logistic_loss(model: GbdtModel, x: np.ndarray, y: np.ndarray) -> float:
    raw = model.predict_raw(x)
    # log(1+e^-m) computed stably for both signs of the margin
    margins = np.where(y > 0.5, raw, -raw)
    return float(np.mean(np.log1p(np.exp(-np.abs(margins)))
                         + np.maximum(-margins, 0.0)))


def accuracy(model: GbdtModel, x: np.ndarray, y: np.ndarray) -> float:
    pred = (model.predict(x) >= 0.5).astype(np.float64)
    return float((pred == y).mean())
