"""Gradient-boosted decision trees with exact greedy splits.

Small-data boosted classifier for the 12-feature signature space: multiclass
softmax objective, second-order (gradient/hessian) split gains with an L2
leaf penalty, depth-limited trees grown by exhaustive scan over all
feature/threshold candidates.  Training is fully deterministic: ties resolve
to the lowest feature index and the first maximizing threshold, and no
subsampling is performed, so row order and the seed cannot change the model.
Models serialize to a self-describing JSON document.
"""

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import _kernels
from .errors import ParseError, PredictError, TrainingError

FORMAT_VERSION = 1


@dataclass(frozen=True)
class GbtParams:
    n_rounds: int = 200
    max_depth: int = 3
    learning_rate: float = 0.1
    reg_lambda: float = 1.0
    min_samples_leaf: int = 1

    def __post_init__(self):
        if self.n_rounds < 1 or self.max_depth < 1 or self.min_samples_leaf < 1:
            raise TrainingError("n_rounds, max_depth, min_samples_leaf must be >= 1")
        if not 0 < self.learning_rate <= 1 or self.reg_lambda < 0:
            raise TrainingError("need 0 < learning_rate <= 1 and reg_lambda >= 0")


@dataclass
class Tree:
    """Flat-array regression tree.

    ``feature[i] == -1`` marks node i as a leaf with prediction ``value[i]``;
    internal nodes route ``x[feature] <= threshold`` to ``left``.
    """

    feature: list = field(default_factory=list)
    threshold: list = field(default_factory=list)
    left: list = field(default_factory=list)
    right: list = field(default_factory=list)
    value: list = field(default_factory=list)

    def add_leaf(self, val):
        self.feature.append(-1)
        self.threshold.append(0.0)
        self.left.append(-1)
        self.right.append(-1)
        self.value.append(float(val))
        return len(self.feature) - 1

    def add_split(self, feat, thr):
        self.feature.append(int(feat))
        self.threshold.append(float(thr))
        self.left.append(-1)
        self.right.append(-1)
        self.value.append(0.0)
        return len(self.feature) - 1

    def predict(self, X):
        feat = np.asarray(self.feature)
        thr = np.asarray(self.threshold)
        left = np.asarray(self.left)
        right = np.asarray(self.right)
        val = np.asarray(self.value)
        idx = np.zeros(X.shape[0], dtype=np.int64)
        active = feat[idx] >= 0
        while np.any(active):
            f = feat[idx[active]]
            goes_left = X[active, f] <= thr[idx[active]]
            nxt = np.where(goes_left, left[idx[active]], right[idx[active]])
            idx[active] = nxt
            active = feat[idx] >= 0
        return val[idx]


def _grow_tree(X, grad, hess, params: GbtParams) -> Tree:
    tree = Tree()
    lam = params.reg_lambda
    min_leaf = params.min_samples_leaf

    def leaf_value(rows):
        return -grad[rows].sum() / (hess[rows].sum() + lam)

    def build(rows, depth):
        if depth >= params.max_depth or rows.size < 2 * min_leaf:
            return tree.add_leaf(leaf_value(rows))
        best_gain = 0.0
        best = None  # (feature, n_left, order)
        for f in range(X.shape[1]):
            order = rows[np.argsort(X[rows, f], kind="stable")]
            vals = X[order, f]
            gain, pos = _kernels.scan_split(vals, grad[order], hess[order],
                                            lam, min_leaf)
            if pos >= 0 and gain > best_gain:
                best_gain = gain
                best = (f, pos, order)
        if best is None:
            return tree.add_leaf(leaf_value(rows))
        f, pos, order = best
        thr = 0.5 * (X[order[pos - 1], f] + X[order[pos], f])
        # guard against a midpoint that rounds onto the right value
        if thr >= X[order[pos], f]:
            thr = X[order[pos - 1], f]
        node = tree.add_split(f, thr)
        tree.left[node] = build(order[:pos], depth + 1)
        tree.right[node] = build(order[pos:], depth + 1)
        return node

    build(np.arange(X.shape[0]), 0)
    return tree


def _softmax(raw):
    z = raw - raw.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


@dataclass
class GbtClassifier:
    """Boosted-tree classifier over a fixed class list."""

    classes: list
    params: GbtParams
    init_raw: np.ndarray         # (n_classes,) prior log-odds
    trees: list                  # trees[round][class_index] -> Tree

    @classmethod
    def train(cls, X, labels, params: GbtParams | None = None, seed: int = 0):
        """Fit to features ``X`` (n, d) and string labels.

        ``seed`` is accepted for interface stability; training itself is
        deterministic.  Raises :class:`TrainingError` when fewer than two
        classes are present.
        """
        del seed
        params = params or GbtParams()
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[0] == 0:
            raise TrainingError("need a non-empty 2-d feature matrix")
        if not np.all(np.isfinite(X)):
            raise TrainingError("training features must be finite")
        classes = sorted(set(labels))
        if len(classes) < 2:
            raise TrainingError(f"need >= 2 classes, got {classes}")
        class_idx = {c: k for k, c in enumerate(classes)}
        y = np.array([class_idx[l] for l in labels], dtype=np.int64)
        n, k = X.shape[0], len(classes)

        onehot = np.zeros((n, k))
        onehot[np.arange(n), y] = 1.0
        prior = onehot.mean(axis=0)
        init_raw = np.log(np.clip(prior, 1e-12, None))
        raw = np.tile(init_raw, (n, 1))

        rounds = []
        for _ in range(params.n_rounds):
            prob = _softmax(raw)
            grad = prob - onehot
            hess = prob * (1.0 - prob)
            stage = []
            for c in range(k):
                tree = _grow_tree(X, grad[:, c], hess[:, c], params)
                raw[:, c] += params.learning_rate * tree.predict(X)
                stage.append(tree)
            rounds.append(stage)
        return cls(classes=classes, params=params, init_raw=init_raw, trees=rounds)

    def predict_proba(self, X):
        """Class probabilities, rows summing to one."""
        X = np.asarray(X, dtype=np.float64)
        single = X.ndim == 1
        if single:
            X = X[None, :]
        if not np.all(np.isfinite(X)):
            raise PredictError("feature vector contains non-finite entries")
        raw = np.tile(self.init_raw, (X.shape[0], 1))
        for stage in self.trees:
            for c, tree in enumerate(stage):
                raw[:, c] += self.params.learning_rate * tree.predict(X)
        prob = _softmax(raw)
        return prob[0] if single else prob

    def predict_label(self, X):
        prob = np.atleast_2d(self.predict_proba(X))
        return [self.classes[i] for i in prob.argmax(axis=1)]

    # -- serialization ------------------------------------------------------

    def to_dict(self):
        return {
            "format_version": FORMAT_VERSION,
            "model": "gradient_boosted_trees",
            "classes": list(self.classes),
            "hyper_parameters": {
                "n_rounds": self.params.n_rounds,
                "max_depth": self.params.max_depth,
                "learning_rate": self.params.learning_rate,
                "reg_lambda": self.params.reg_lambda,
                "min_samples_leaf": self.params.min_samples_leaf,
            },
            "init_raw": [float(v) for v in self.init_raw],
            "trees": [
                [
                    {
                        "feature": t.feature,
                        "threshold": t.threshold,
                        "left": t.left,
                        "right": t.right,
                        "value": t.value,
                    }
                    for t in stage
                ]
                for stage in self.trees
            ],
        }

    @classmethod
    def from_dict(cls, doc):
        if doc.get("format_version") != FORMAT_VERSION:
            raise ParseError(f"unsupported model format {doc.get('format_version')!r}")
        hp = doc["hyper_parameters"]
        params = GbtParams(n_rounds=hp["n_rounds"], max_depth=hp["max_depth"],
                           learning_rate=hp["learning_rate"],
                           reg_lambda=hp["reg_lambda"],
                           min_samples_leaf=hp["min_samples_leaf"])
        trees = [
            [Tree(feature=t["feature"], threshold=t["threshold"], left=t["left"],
                  right=t["right"], value=t["value"]) for t in stage]
            for stage in doc["trees"]
        ]
        return cls(classes=list(doc["classes"]), params=params,
                   init_raw=np.asarray(doc["init_raw"], dtype=np.float64),
                   trees=trees)

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_dict()) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path):
        try:
            doc = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ParseError(f"invalid model JSON: {exc}", line=exc.lineno) from exc
        return cls.from_dict(doc)
