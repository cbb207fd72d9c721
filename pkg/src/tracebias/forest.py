"""Random-forest binary classifier over binary feature vectors.

Every feature is a single present/absent split, so a split search reduces to
two weighted count vectors per candidate set. Training rows are collapsed to
unique (vector, label) pairs with bootstrap multiplicities; this is exactly
equivalent to growing on the resample itself and much faster on sparse,
highly repetitive stem features.

Tree ``t`` draws everything (bootstrap, then feature permutations in
depth-first node order) from ``numpy.random.SeedSequence(seed, spawn_key=(t,))``,
so trees can be grown in any order or in parallel with identical results.
"""

from __future__ import annotations

import json
import math
import struct
import zlib
from collections.abc import Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any

import numpy as np

MAGIC = b"TBFOREST"
FORMAT_VERSION = 1
GAIN_EPS = 1e-12
_CV_STREAM = 2**32 - 1
_HEAD = struct.Struct("<8sHHI")
_WEIGHTINGS = ("none", "inverse_frequency")


class TrainingError(ValueError):
    pass


class ModelFileError(Exception):
    """Corrupt or truncated model file."""


class ModelVersionError(ModelFileError):
    """Wrong magic header or unsupported format version."""


@dataclass(frozen=True)
class ForestConfig:
    n_trees: int = 100
    features_per_split: int | None = None
    min_leaf: int = 1
    max_depth: int | None = None
    class_weighting: str = "inverse_frequency"
    threshold: float = 0.5
    seed: int = 0

    def __post_init__(self) -> None:
        def positive_int(name, value, optional=False):
            if value is None and optional:
                return
            if isinstance(value, bool) or not isinstance(value, int) or value < 1:
                raise ValueError(f"{name} must be a positive integer, got {value!r}")

        positive_int("n_trees", self.n_trees)
        positive_int("features_per_split", self.features_per_split, optional=True)
        positive_int("min_leaf", self.min_leaf)
        positive_int("max_depth", self.max_depth, optional=True)
        if self.class_weighting not in _WEIGHTINGS:
            raise ValueError(f"class_weighting must be one of {_WEIGHTINGS}")
        if not 0.0 <= self.threshold <= 1.0:
            raise ValueError("threshold must lie in [0, 1]")
        if isinstance(self.seed, bool) or not isinstance(self.seed, int) or not 0 <= self.seed < 2**64:
            raise ValueError("seed must be an unsigned 64-bit integer")

    @classmethod
    def from_dict(cls, raw: dict[str, Any]) -> ForestConfig:
        unknown = set(raw) - {f.name for f in fields(cls)}
        if unknown:
            raise ValueError(f"unknown forest keys: {sorted(unknown)}")
        return cls(**raw)

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


@dataclass(frozen=True)
class EvalMetrics:
    tp: int
    fp: int
    fn: int
    tn: int

    @property
    def precision(self) -> float:
        return self.tp / (self.tp + self.fp) if self.tp + self.fp else 0.0

    @property
    def recall(self) -> float:
        return self.tp / (self.tp + self.fn) if self.tp + self.fn else 0.0

    @property
    def f1(self) -> float:
        p, r = self.precision, self.recall
        return 2 * p * r / (p + r) if p + r else 0.0

    def to_dict(self) -> dict[str, Any]:
        return {"tp": self.tp, "fp": self.fp, "fn": self.fn, "tn": self.tn,
                "precision": self.precision, "recall": self.recall, "f1": self.f1}


def evaluate(predictions: Sequence[bool], truth: Sequence[bool]) -> EvalMetrics:
    pred = np.asarray(predictions, dtype=bool)
    true = np.asarray(truth, dtype=bool)
    if pred.shape != true.shape:
        raise ValueError("predictions and truth differ in length")
    if pred.size == 0:
        raise ValueError("cannot evaluate empty predictions")
    tp = int(np.sum(pred & true))
    fp = int(np.sum(pred & ~true))
    fn = int(np.sum(~pred & true))
    return EvalMetrics(tp, fp, fn, int(pred.size) - tp - fp - fn)


@dataclass(frozen=True, eq=False)
class Tree:
    """Flat node arrays; ``feature == -1`` marks a leaf.

    ``pos``/``neg`` are the bootstrap sample counts reaching each node.
    """

    feature: np.ndarray
    false_child: np.ndarray
    true_child: np.ndarray
    pos: np.ndarray
    neg: np.ndarray

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    def leaf_fractions(self, class_weights: tuple[float, float]) -> np.ndarray:
        wn, wp = class_weights
        p = wp * self.pos
        return p / (p + wn * self.neg)

    def apply(self, X: np.ndarray) -> np.ndarray:
        """Leaf index reached by every row of ``X``."""
        node = np.zeros(len(X), dtype=np.int64)
        active = np.arange(len(X))
        while active.size:
            feat = self.feature[node[active]]
            internal = feat >= 0
            active, feat = active[internal], feat[internal]
            if not active.size:
                break
            go = X[active, feat]
            here = node[active]
            node[active] = np.where(go, self.true_child[here], self.false_child[here])
        return node

    def depth(self) -> int:
        depth = np.zeros(self.n_nodes, dtype=np.int64)
        for i in range(self.n_nodes):
            if self.feature[i] >= 0:
                depth[self.false_child[i]] = depth[self.true_child[i]] = depth[i] + 1
        return int(depth.max())


@dataclass(frozen=True, eq=False)
class ForestModel:
    trees: tuple[Tree, ...]
    config: ForestConfig
    feature_count: int
    class_weights: tuple[float, float] = (1.0, 1.0)
    n_train: int = 0
    _fractions: list = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "_fractions", [t.leaf_fractions(self.class_weights) for t in self.trees])

    def _check(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=bool)
        if X.ndim == 1:
            X = X[None, :]
        if X.shape[1] != self.feature_count:
            raise ValueError(f"expected {self.feature_count} features, got {X.shape[1]}")
        return X

    def scores(self, X: np.ndarray, threads: int = 1) -> np.ndarray:
        """Mean over trees of the (class-weighted) positive fraction at the leaf reached."""
        X = self._check(X)

        def run(chunk: np.ndarray) -> np.ndarray:
            acc = np.zeros(len(chunk))
            for tree, frac in zip(self.trees, self._fractions):
                acc += frac[tree.apply(chunk)]
            return acc / len(self.trees)

        if threads <= 1 or len(X) < 2 * threads:
            return run(X)
        chunks = np.array_split(X, threads)
        with ThreadPoolExecutor(threads) as ex:
            return np.concatenate(list(ex.map(run, chunks)))

    def predict_many(self, X: np.ndarray, threads: int = 1) -> tuple[np.ndarray, np.ndarray]:
        s = self.scores(X, threads)
        return s >= self.config.threshold, s

    def with_threshold(self, threshold: float) -> ForestModel:
        return ForestModel(self.trees, replace(self.config, threshold=threshold), self.feature_count,
                           self.class_weights, self.n_train)


def predict(model: ForestModel, v: Sequence[bool]) -> tuple[bool, float]:
    v = np.asarray(v, dtype=bool)
    if v.ndim != 1:
        raise ValueError("predict takes a single feature vector")
    score = float(model.scores(v)[0])
    return score >= model.config.threshold, score


# -- training ---------------------------------------------------------------


def tree_rng(seed: int, tree_index: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(tree_index,))))


def class_weights_for(y: np.ndarray, weighting: str) -> tuple[float, float]:
    """(negative, positive) weights; inverse frequency gives each class equal total mass."""
    if weighting == "none":
        return 1.0, 1.0
    n = len(y)
    n_pos = int(np.sum(y))
    return n / (2.0 * (n - n_pos)), n / (2.0 * n_pos)


def _gini_mass(p, n):
    total = p + n
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(total > 0, 2.0 * p * n / np.where(total > 0, total, 1.0), 0.0)


def gini_gain(pos: float, neg: float, true_pos, true_neg,
              class_weights: tuple[float, float] = (1.0, 1.0)):
    """Weighted Gini impurity decrease for splitting a node into true/false branches."""
    wn, wp = class_weights
    P, N = wp * pos, wn * neg
    tp, tn = wp * np.asarray(true_pos, dtype=float), wn * np.asarray(true_neg, dtype=float)
    fp, fn = P - tp, N - tn
    W = P + N
    return (_gini_mass(P, N) - _gini_mass(tp, tn) - _gini_mass(fp, fn)) / W


def _as_arrays(examples) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(examples, tuple) and len(examples) == 2 and isinstance(examples[0], np.ndarray):
        X, y = examples
    else:
        vecs = [np.asarray(v, dtype=bool) for v, _ in examples]
        if len({v.shape for v in vecs}) > 1:
            raise TrainingError("inconsistent feature vector lengths")
        X = np.array(vecs, dtype=bool).reshape(len(vecs), -1)
        y = np.array([bool(lbl) for _, lbl in examples], dtype=bool)
    X = np.asarray(X, dtype=bool)
    y = np.asarray(y, dtype=bool)
    if X.ndim != 2 or len(X) != len(y):
        raise TrainingError("feature matrix and labels disagree in shape")
    return X, y


def unique_rows(M: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Row indices of the distinct rows of a 0/1 matrix and the inverse map.

    Rows are bit-packed to fixed-width byte keys, so the sort is one-dimensional.
    Distinct rows come out in lexicographic order as ``np.unique(axis=0)`` gives.
    """
    M = np.asarray(M, dtype=bool)
    if M.ndim != 2:
        raise ValueError("expected a 2-D matrix")
    packed = np.ascontiguousarray(np.packbits(M, axis=1))
    keys = packed.view(np.dtype((np.void, packed.shape[1]))).reshape(-1)
    _, first, inverse = np.unique(keys, return_index=True, return_inverse=True)
    return first, inverse.reshape(-1)


class _Grower:
    def __init__(self, X: np.ndarray, y: np.ndarray, config: ForestConfig, k: int,
                 weights: tuple[float, float]):
        self.n, self.F = X.shape
        first, self.inverse = unique_rows(np.column_stack([X, y]))
        self.Xu = np.asarray(X[first], dtype=bool)
        self.yu = np.asarray(y[first], dtype=bool)
        self.config = config
        self.k = k
        self.weights = weights

    def _best(self, rows, m_pos, m_neg, pos, neg, feats):
        sub = self.Xu[np.ix_(rows, feats)].astype(np.float64)
        t_pos = m_pos @ sub
        t_neg = m_neg @ sub
        gain = gini_gain(pos, neg, t_pos, t_neg, self.weights)
        t_count = t_pos + t_neg
        f_count = (pos + neg) - t_count
        ml = self.config.min_leaf
        gain = np.where((t_count >= ml) & (f_count >= ml), gain, -np.inf)
        order = np.argsort(feats, kind="stable")
        j = int(np.argmax(gain[order]))
        if gain[order][j] > GAIN_EPS:
            return int(feats[order][j])
        return None

    def grow(self, t: int) -> Tree:
        rng = tree_rng(self.config.seed, t)
        boot = rng.integers(0, self.n, size=self.n)
        mult = np.bincount(self.inverse[boot], minlength=len(self.yu)).astype(np.float64)
        feature: list[int] = []
        false_child: list[int] = []
        true_child: list[int] = []
        pos_c: list[int] = []
        neg_c: list[int] = []
        max_depth = self.config.max_depth
        stack = [(np.nonzero(mult)[0], 0, -1, False)]
        while stack:
            rows, depth, parent, branch = stack.pop()
            node = len(feature)
            if parent >= 0:
                (true_child if branch else false_child)[parent] = node
            m = mult[rows]
            is_pos = self.yu[rows]
            m_pos = np.where(is_pos, m, 0.0)
            m_neg = m - m_pos
            pos, neg = float(m_pos.sum()), float(m_neg.sum())
            feature.append(-1)
            false_child.append(-1)
            true_child.append(-1)
            pos_c.append(int(pos))
            neg_c.append(int(neg))
            if pos == 0 or neg == 0 or (max_depth is not None and depth >= max_depth) \
                    or pos + neg < 2 * self.config.min_leaf:
                continue
            perm = rng.permutation(self.F)
            best = self._best(rows, m_pos, m_neg, pos, neg, perm[: self.k])
            if best is None and self.k < self.F:
                best = self._best(rows, m_pos, m_neg, pos, neg, perm[self.k:])
            if best is None:
                continue
            feature[node] = best
            go = self.Xu[rows, best]
            # Push true first so the false branch is numbered (and drawn) first.
            stack.append((rows[go], depth + 1, node, True))
            stack.append((rows[~go], depth + 1, node, False))
        return Tree(
            np.array(feature, dtype=np.int32),
            np.array(false_child, dtype=np.int32),
            np.array(true_child, dtype=np.int32),
            np.array(pos_c, dtype=np.int64),
            np.array(neg_c, dtype=np.int64),
        )


def train(examples, config: ForestConfig = ForestConfig(), threads: int = 1) -> ForestModel:
    """Grow a forest from ``(vector, label)`` pairs or an ``(X, y)`` array tuple."""
    X, y = _as_arrays(examples)
    n, F = X.shape
    if n < 2:
        raise TrainingError("need at least 2 training examples")
    if F < 1:
        raise TrainingError("need at least one feature")
    n_pos = int(y.sum())
    if n_pos == 0 or n_pos == n:
        raise TrainingError("training data contains a single class")
    k = config.features_per_split or math.ceil(math.sqrt(F))
    if k > F:
        raise TrainingError(f"features_per_split={k} exceeds feature count {F}")
    weights = class_weights_for(y, config.class_weighting)
    grower = _Grower(X, y, config, k, weights)
    if threads <= 1:
        trees = [grower.grow(t) for t in range(config.n_trees)]
    else:
        with ThreadPoolExecutor(threads) as ex:
            trees = list(ex.map(grower.grow, range(config.n_trees)))
    return ForestModel(tuple(trees), config, F, weights, n)


def oob_scores(model: ForestModel, examples) -> np.ndarray:
    """Out-of-bag scores for the training set the model was grown on; NaN where never out of bag."""
    X, _ = _as_arrays(examples)
    n = len(X)
    if n != model.n_train:
        raise ValueError("oob_scores needs the exact training set")
    acc = np.zeros(n)
    hits = np.zeros(n)
    for t, (tree, frac) in enumerate(zip(model.trees, model._fractions)):
        boot = tree_rng(model.config.seed, t).integers(0, n, size=n)
        out = np.ones(n, dtype=bool)
        out[boot] = False
        idx = np.nonzero(out)[0]
        acc[idx] += frac[tree.apply(X[idx])]
        hits[idx] += 1
    with np.errstate(invalid="ignore"):
        return acc / hits


# -- validation -------------------------------------------------------------


def stratified_folds(y: np.ndarray, k: int, seed: int) -> np.ndarray:
    """Fold id per example; each class is shuffled and dealt round-robin."""
    y = np.asarray(y, dtype=bool)
    if k < 2:
        raise ValueError("k must be at least 2")
    for cls in (True, False):
        if int(np.sum(y == cls)) < k:
            raise TrainingError(f"class {cls} has fewer than k={k} examples")
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(_CV_STREAM,))))
    order = np.concatenate([rng.permutation(np.nonzero(y == cls)[0]) for cls in (True, False)])
    folds = np.empty(len(y), dtype=np.int64)
    folds[order] = np.arange(len(y)) % k
    return folds


@dataclass(frozen=True)
class CVReport:
    k: int
    folds: list[EvalMetrics]
    pooled: EvalMetrics
    assignment: np.ndarray = field(repr=False)
    scores: np.ndarray = field(repr=False)

    @property
    def mean_f1(self) -> float:
        return math.fsum(f.f1 for f in self.folds) / len(self.folds)

    def to_dict(self) -> dict[str, Any]:
        return {
            "k": self.k,
            "mean_f1": self.mean_f1,
            "pooled": self.pooled.to_dict(),
            "folds": [f.to_dict() for f in self.folds],
        }


def cross_validate(examples, config: ForestConfig = ForestConfig(), k: int = 5, threads: int = 1) -> CVReport:
    X, y = _as_arrays(examples)
    folds = stratified_folds(y, k, config.seed)
    scores = np.zeros(len(y))
    preds = np.zeros(len(y), dtype=bool)
    per_fold = []
    for f in range(k):
        test = folds == f
        model = train((X[~test], y[~test]), config, threads)
        p, s = model.predict_many(X[test], threads)
        preds[test], scores[test] = p, s
        per_fold.append(evaluate(p, y[test]))
    return CVReport(k, per_fold, evaluate(preds, y), folds, scores)


def best_threshold(scores: Sequence[float], truth: Sequence[bool]) -> float:
    """F1-maximizing threshold among the distinct scores and 0.5; ties go to the larger one."""
    s = np.asarray(scores, dtype=float)
    y = np.asarray(truth, dtype=bool)
    if y.all() or not y.any():
        raise TrainingError("threshold tuning needs both classes")
    best_t, best_f = None, -1.0
    for t in sorted(set(s.tolist()) | {0.5}, reverse=True):
        f = evaluate(s >= t, y).f1
        if f > best_f:
            best_t, best_f = t, f
    return best_t


def tune_threshold(model: ForestModel, examples, threads: int = 1) -> float:
    X, y = _as_arrays(examples)
    return best_threshold(model.scores(X, threads), y)


# -- persistence ------------------------------------------------------------


def model_to_bytes(model: ForestModel) -> bytes:
    header = json.dumps({
        "config": model.config.to_dict(),
        "feature_count": model.feature_count,
        "class_weights": list(model.class_weights),
        "n_train": model.n_train,
        "n_trees": len(model.trees),
    }, sort_keys=True).encode("utf-8")
    parts = [_HEAD.pack(MAGIC, FORMAT_VERSION, 0, len(header)), header]
    for tree in model.trees:
        parts.append(struct.pack("<I", tree.n_nodes))
        for arr, dtype in ((tree.feature, "<i4"), (tree.false_child, "<i4"), (tree.true_child, "<i4"),
                           (tree.pos, "<i8"), (tree.neg, "<i8")):
            parts.append(arr.astype(dtype).tobytes())
    body = b"".join(parts)
    return body + struct.pack("<I", zlib.crc32(body))


def model_from_bytes(data: bytes) -> ForestModel:
    if len(data) < _HEAD.size or data[:8] != MAGIC:
        raise ModelVersionError("not a forest model file (bad magic header)")
    _, version, _, header_len = _HEAD.unpack_from(data)
    if version != FORMAT_VERSION:
        raise ModelVersionError(f"unsupported model format version {version}")
    if len(data) < _HEAD.size + header_len + 4:
        raise ModelFileError("model file truncated")
    body, (crc,) = data[:-4], struct.unpack("<I", data[-4:])
    if zlib.crc32(body) != crc:
        raise ModelFileError("model file corrupt or truncated (checksum mismatch)")
    pos = _HEAD.size
    try:
        header = json.loads(body[pos : pos + header_len])
        pos += header_len
        trees = []
        for _ in range(header["n_trees"]):
            (n_nodes,) = struct.unpack_from("<I", body, pos)
            pos += 4
            arrays = []
            for dtype, size in (("<i4", 4), ("<i4", 4), ("<i4", 4), ("<i8", 8), ("<i8", 8)):
                nbytes = n_nodes * size
                if pos + nbytes > len(body):
                    raise ModelFileError("model file truncated")
                arrays.append(np.frombuffer(body, dtype=dtype, count=n_nodes, offset=pos)
                              .astype(np.int32 if size == 4 else np.int64))
                pos += nbytes
            trees.append(Tree(*arrays))
        if pos != len(body):
            raise ModelFileError("trailing bytes in model file")
        config = ForestConfig.from_dict(header["config"])
        return ForestModel(tuple(trees), config, int(header["feature_count"]),
                           tuple(header["class_weights"]), int(header["n_train"]))
    except (KeyError, TypeError, ValueError, struct.error) as exc:
        raise ModelFileError(f"malformed model file: {exc}") from exc


def save_model(model: ForestModel, path: str | Path) -> None:
    Path(path).write_bytes(model_to_bytes(model))


def load_model(path: str | Path) -> ForestModel:
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise ModelFileError(f"cannot read {path}: {exc}") from exc
    return model_from_bytes(data)
