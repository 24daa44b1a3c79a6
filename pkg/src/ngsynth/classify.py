"""Random forest (CART, Gini) written out in numpy, classification metrics and
stratified Monte Carlo cross-validation."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

METRIC_NAMES = ("accuracy", "precision", "recall", "f1", "mcc")


class SingleClass(ValueError):
    pass


class EmptyInput(ValueError):
    pass


class NoSplits(ValueError):
    pass


class EmptyMatrix(ValueError):
    pass


class ClassTooSmall(ValueError):
    pass


class DimensionMismatch(ValueError):
    pass


@dataclass
class ForestConfig:
    tree_count: int = 100
    max_depth: int | None = None
    min_samples_split: int = 2
    features_per_split: int | None = None  # None -> ceil(sqrt(d))
    bootstrap: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.tree_count < 1:
            raise ValueError("tree_count must be >= 1")
        if self.min_samples_split < 2:
            raise ValueError("min_samples_split must be >= 2")


class Tree:
    """Flat-array binary tree. Leaves have ``feature == -1``."""

    def __init__(self):
        self.feature: list[int] = []
        self.threshold: list[float] = []
        self.left: list[int] = []
        self.right: list[int] = []
        self.value: list[int] = []
        self.n_samples: list[int] = []
        self.gain: list[float] = []

    def _add(self, value: int, n: int) -> int:
        self.feature.append(-1)
        self.threshold.append(0.0)
        self.left.append(-1)
        self.right.append(-1)
        self.value.append(value)
        self.n_samples.append(n)
        self.gain.append(0.0)
        return len(self.feature) - 1

    def predict_one(self, x) -> int:
        node = 0
        while self.feature[node] >= 0:
            node = self.left[node] if x[self.feature[node]] <= self.threshold[node] else self.right[node]
        return self.value[node]

    def predict(self, X: np.ndarray) -> np.ndarray:
        return np.array([self.predict_one(x) for x in X], dtype=int)

    @property
    def n_splits(self) -> int:
        return sum(1 for f in self.feature if f >= 0)


def _gini(counts: np.ndarray) -> float:
    n = counts.sum()
    if n == 0:
        return 0.0
    p = counts / n
    return float(1.0 - p @ p)


def _best_split(X, Y1h, features):
    """Lowest weighted child Gini over candidate features; midpoint thresholds."""
    n = X.shape[0]
    best = None
    for f in features:
        order = np.argsort(X[:, f], kind="stable")
        xs = X[order, f]
        valid = xs[:-1] < xs[1:]
        if not valid.any():
            continue
        left = np.cumsum(Y1h[order], axis=0)[:-1]
        total = left[-1] + Y1h[order[-1]]
        right = total - left
        nl = np.arange(1, n, dtype=float)
        nr = n - nl
        gl = 1.0 - np.einsum("ik,ik->i", left, left) / nl**2
        gr = 1.0 - np.einsum("ik,ik->i", right, right) / nr**2
        score = np.where(valid, (nl * gl + nr * gr) / n, np.inf)
        i = int(np.argmin(score))
        if best is None or score[i] < best[0]:
            best = (score[i], f, 0.5 * (xs[i] + xs[i + 1]))
    return best


def build_tree(X: np.ndarray, y: np.ndarray, n_classes: int, config: ForestConfig,
               rng: np.random.Generator) -> Tree:
    d = X.shape[1]
    k = config.features_per_split or math.ceil(math.sqrt(d))
    k = min(k, d)
    eye = np.eye(n_classes)
    tree = Tree()

    def grow(idx: np.ndarray, depth: int) -> int:
        counts = np.bincount(y[idx], minlength=n_classes)
        node = tree._add(int(np.argmax(counts)), len(idx))
        impurity = _gini(counts)
        if (impurity == 0.0 or len(idx) < config.min_samples_split
                or (config.max_depth is not None and depth >= config.max_depth)):
            return node
        Xn, Y1h = X[idx], eye[y[idx]]
        # draw k features; keep drawing if none of them can split the node
        perm = rng.permutation(d)
        best = _best_split(Xn, Y1h, perm[:k])
        if best is None and k < d:
            best = _best_split(Xn, Y1h, perm[k:])
        if best is None:
            return node
        score, f, thr = best
        go_left = Xn[:, f] <= thr
        tree.feature[node] = int(f)
        tree.threshold[node] = float(thr)
        tree.gain[node] = len(idx) * (impurity - score)
        tree.left[node] = grow(idx[go_left], depth + 1)
        tree.right[node] = grow(idx[~go_left], depth + 1)
        return node

    grow(np.arange(X.shape[0]), 0)
    return tree


@dataclass
class Forest:
    trees: list[Tree]
    classes: tuple
    n_features: int

    def predict_index(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if X.shape[1] != self.n_features:
            raise DimensionMismatch(f"expected {self.n_features} features, got {X.shape[1]}")
        votes = np.stack([t.predict(X) for t in self.trees])
        K = len(self.classes)
        counts = np.apply_along_axis(np.bincount, 0, votes, minlength=K)
        # argmax picks the first class in class order on ties
        return np.argmax(counts, axis=0)

    def predict(self, X) -> np.ndarray:
        return np.asarray(self.classes, dtype=object)[self.predict_index(X)]


def train_forest(X, y, config: ForestConfig | None = None, classes=None) -> Forest:
    config = config or ForestConfig()
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y)
    if X.ndim != 2 or len(X) != len(y) or len(X) < 2 or X.shape[1] < 1:
        raise EmptyInput("need at least 2 labelled rows with >= 1 feature")
    classes = tuple(classes) if classes is not None else tuple(sorted(set(y.tolist())))
    if len(set(y.tolist())) < 2:
        raise SingleClass("training data has a single label")
    lookup = {c: i for i, c in enumerate(classes)}
    yi = np.array([lookup[v] for v in y.tolist()], dtype=int)
    n = len(X)
    trees = []
    for t in range(config.tree_count):
        rng = np.random.default_rng([config.seed, t])
        idx = rng.integers(0, n, size=n) if config.bootstrap else np.arange(n)
        trees.append(build_tree(X[idx], yi[idx], len(classes), config, rng))
    return Forest(trees=trees, classes=classes, n_features=X.shape[1])


def predict(forest: Forest, x):
    """Majority-vote label for one row (or an array of labels for a matrix)."""
    x = np.asarray(x, dtype=np.float64)
    out = forest.predict(x)
    return out[0] if x.ndim == 1 else out


def feature_importance(forest: Forest) -> np.ndarray:
    """Mean decrease in Gini impurity per feature, normalized to sum to 1."""
    total = np.zeros(forest.n_features)
    for tree in forest.trees:
        imp = np.zeros(forest.n_features)
        for f, g in zip(tree.feature, tree.gain):
            if f >= 0:
                imp[f] += g
        total += imp / tree.n_samples[0]
    total /= len(forest.trees)
    s = total.sum()
    if s <= 0:
        raise NoSplits("forest has no informative splits")
    return total / s


@dataclass
class ConfusionMatrix:
    counts: np.ndarray
    classes: tuple

    @classmethod
    def from_labels(cls, y_true, y_pred, classes) -> "ConfusionMatrix":
        classes = tuple(classes)
        lookup = {c: i for i, c in enumerate(classes)}
        K = len(classes)
        counts = np.zeros((K, K), dtype=int)
        for t, p in zip(y_true, y_pred):
            counts[lookup[t], lookup[p]] += 1
        return cls(counts=counts, classes=classes)

    @property
    def total(self) -> int:
        return int(self.counts.sum())


def _safe_div(a, b):
    return np.divide(a, b, out=np.zeros_like(a, dtype=float), where=b != 0)


def classification_metrics(cm) -> dict[str, float]:
    """Accuracy, macro precision/recall/F1, multiclass MCC (R_K), plus micro
    averages. Every 0/0 is taken as 0."""
    C = np.asarray(getattr(cm, "counts", cm), dtype=float)
    s = C.sum()
    if s < 1:
        raise EmptyMatrix("confusion matrix is empty")
    tp = np.diag(C)
    predicted = C.sum(axis=0)
    actual = C.sum(axis=1)
    prec = _safe_div(tp, predicted)
    rec = _safe_div(tp, actual)
    f1 = _safe_div(2 * prec * rec, prec + rec)
    c = tp.sum()
    num = c * s - predicted @ actual
    den = math.sqrt(max(s * s - predicted @ predicted, 0.0)) * math.sqrt(max(s * s - actual @ actual, 0.0))
    mcc = float(np.clip(num / den, -1.0, 1.0)) if den > 0 else 0.0
    accuracy = float(c / s)
    return {
        "accuracy": accuracy,
        "precision": float(prec.mean()),
        "recall": float(rec.mean()),
        "f1": float(f1.mean()),
        "mcc": mcc,
        "precision_micro": accuracy,
        "recall_micro": accuracy,
        "f1_micro": accuracy,
    }


@dataclass
class CvResult:
    runs: list[dict] = field(default_factory=list)

    @property
    def run_count(self) -> int:
        return len(self.runs)

    def mean(self) -> dict[str, float]:
        return {k: float(np.mean([r[k] for r in self.runs])) for k in self.runs[0]}

    def std(self) -> dict[str, float]:
        return {k: float(np.std([r[k] for r in self.runs])) for k in self.runs[0]}


def stratified_split(y, train_fraction: float, rng: np.random.Generator):
    """Index arrays (train, test) with every class present on both sides."""
    y = np.asarray(y)
    train, test = [], []
    for c in sorted(set(y.tolist())):
        idx = np.flatnonzero(y == c)
        if len(idx) < 2:
            raise ClassTooSmall(f"class {c!r} has {len(idx)} sample(s); need 2 for a split")
        idx = rng.permutation(idx)
        n_train = min(max(int(round(train_fraction * len(idx))), 1), len(idx) - 1)
        train.extend(idx[:n_train])
        test.extend(idx[n_train:])
    return np.sort(np.array(train)), np.sort(np.array(test))


def monte_carlo_cv(X, y, runs: int = 20, train_fraction: float = 0.7,
                   forest_config: ForestConfig | None = None, seed: int = 0) -> CvResult:
    forest_config = forest_config or ForestConfig()
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y)
    classes = tuple(sorted(set(y.tolist())))
    result = CvResult()
    for r in range(runs):
        rng = np.random.default_rng([seed, r])
        tr, te = stratified_split(y, train_fraction, rng)
        cfg = ForestConfig(**{**forest_config.__dict__, "seed": int(rng.integers(2**63))})
        forest = train_forest(X[tr], y[tr], cfg, classes=classes)
        cm = ConfusionMatrix.from_labels(y[te], forest.predict(X[te]), classes)
        result.runs.append(classification_metrics(cm))
    return result
