"""Single regression trees for outputs of any dimension.

Node impurity is the summed squared Euclidean distance of the node's output
vectors to their mean; with one output this is the usual CART SSE. Splits are
found either exhaustively (midpoints between consecutive distinct values) or
from uniformly drawn random cut points, as in Extra Trees.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

from . import _kernels as K

SPLIT_MODES = ("exhaustive", "random")


def _as_matrix(a, name: str) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    if a.ndim == 1:
        a = a.reshape(-1, 1)
    if a.ndim != 2:
        raise ValueError(f"{name} must be 1- or 2-dimensional, got shape {a.shape}")
    return np.ascontiguousarray(a)


@dataclass(frozen=True)
class Dataset:
    """Feature matrix (n x p) with matching output matrix (n x d).

    A 1-D ``outputs`` array is treated as a single output column.
    """

    features: np.ndarray
    outputs: np.ndarray
    feature_names: Optional[tuple] = None
    output_names: Optional[tuple] = None

    def __post_init__(self):
        X = _as_matrix(self.features, "features")
        Y = _as_matrix(self.outputs, "outputs")
        if X.shape[0] != Y.shape[0]:
            raise ValueError(f"features have {X.shape[0]} rows but outputs have {Y.shape[0]}")
        if X.shape[0] < 1 or X.shape[1] < 1 or Y.shape[1] < 1:
            raise ValueError("dataset needs n >= 1, p >= 1 and d >= 1")
        if not (np.isfinite(X).all() and np.isfinite(Y).all()):
            raise ValueError("dataset contains missing or non-finite values")
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "outputs", Y)
        for attr, width in (("feature_names", X.shape[1]), ("output_names", Y.shape[1])):
            names = getattr(self, attr)
            if names is not None:
                names = tuple(names)
                if len(names) != width:
                    raise ValueError(f"{attr} has {len(names)} entries, expected {width}")
                object.__setattr__(self, attr, names)

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def p(self) -> int:
        return self.features.shape[1]

    @property
    def d(self) -> int:
        return self.outputs.shape[1]

    def subset(self, rows=None, outputs=None) -> "Dataset":
        """Row and/or output-column selection."""
        X = self.features if rows is None else self.features[rows]
        Y = self.outputs if rows is None else self.outputs[rows]
        names = self.output_names
        if outputs is not None:
            outputs = list(outputs)
            Y = Y[:, outputs]
            if names is not None:
                names = tuple(names[j] for j in outputs)
        return Dataset(X, Y, self.feature_names, names)


@dataclass(frozen=True)
class SplitCandidate:
    feature_index: int
    threshold: float
    score: float  # left + right impurity


@dataclass(frozen=True)
class GrowConfig:
    m_try: int
    min_leaf_size: int = 5
    num_random_cuts: int = 1
    split_mode: str = "exhaustive"

    def __post_init__(self):
        if self.split_mode not in SPLIT_MODES:
            raise ValueError(f"split_mode must be one of {SPLIT_MODES}, got {self.split_mode!r}")
        if self.m_try < 1:
            raise ValueError("m_try must be >= 1")
        if self.min_leaf_size < 1:
            raise ValueError("min_leaf_size must be >= 1")
        if self.num_random_cuts < 1:
            raise ValueError("num_random_cuts must be >= 1")

    def check(self, p: int) -> None:
        if self.m_try > p:
            raise ValueError(f"m_try={self.m_try} exceeds the number of features p={p}")

    @property
    def mode_code(self) -> int:
        return K.MODE_EXHAUSTIVE if self.split_mode == "exhaustive" else K.MODE_RANDOM


@dataclass(frozen=True)
class LeafNode:
    mean: np.ndarray
    count: int


@dataclass(frozen=True)
class SplitNode:
    feature_index: int
    threshold: float
    left: Union["SplitNode", LeafNode]
    right: Union["SplitNode", LeafNode]


@dataclass(frozen=True)
class TaskSplitNode:
    """Internal node of a multi-task tree branching on task membership."""

    left_tasks: frozenset
    left: object
    right: object


@dataclass(frozen=True, eq=False)
class Tree:
    """A fitted tree stored as flat node arrays (node 0 is the root).

    ``feature[k]`` is -1 for leaves and -2 for task splits; ``value[k]`` is
    the mean output vector of the training rows that reached node ``k``.
    """

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    count: np.ndarray
    value: np.ndarray
    taskmask: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.taskmask is None:
            object.__setattr__(self, "taskmask", np.zeros(len(self.feature), dtype=np.int64))

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    @property
    def d(self) -> int:
        return self.value.shape[1]

    def is_leaf(self) -> np.ndarray:
        return self.feature == K.LEAF

    def depth(self) -> int:
        depth = np.zeros(self.n_nodes, dtype=np.int64)
        for k in range(self.n_nodes):
            if self.feature[k] != K.LEAF:
                depth[self.left[k]] = depth[self.right[k]] = depth[k] + 1
        return int(depth.max())

    def node(self, k: int = 0):
        """Nested node view of the subtree rooted at ``k``."""
        f = int(self.feature[k])
        if f == K.LEAF:
            return LeafNode(self.value[k].copy(), int(self.count[k]))
        left, right = self.node(int(self.left[k])), self.node(int(self.right[k]))
        if f == K.TASK_SPLIT:
            mask = int(self.taskmask[k])
            tasks = frozenset(t + 1 for t in range(63) if (mask >> t) & 1)
            return TaskSplitNode(tasks, left, right)
        return SplitNode(f, float(self.threshold[k]), left, right)

    @property
    def root(self):
        return self.node(0)

    def apply(self, X, tasks=None) -> np.ndarray:
        """Leaf id for every row of ``X``; ``tasks`` (0-based) for multi-task trees."""
        X = _as_matrix(X, "X")
        tasks = _task_array(tasks)
        return K.route(X, tasks, self.feature, self.threshold, self.left, self.right,
                       self.taskmask, 0)

    def predict(self, X, tasks=None) -> np.ndarray:
        return self.value[self.apply(X, tasks)]


def _task_array(tasks) -> np.ndarray:
    if tasks is None:
        return np.empty(0, dtype=np.int64)
    return np.ascontiguousarray(tasks, dtype=np.int64)


def _seed_from(rng: np.random.Generator) -> int:
    return int(rng.integers(0, 2**32))


def node_impurity(outputs) -> float:
    """Sum of squared distances of the rows of ``outputs`` to their mean."""
    Y = _as_matrix(outputs, "outputs")
    if Y.shape[0] == 0:
        raise ValueError("impurity of an empty node is undefined")
    centered = Y - Y.mean(axis=0)
    return float(np.sum(centered * centered))


def _candidate(data: Dataset, found, f, t) -> Optional[SplitCandidate]:
    if not found:
        return None
    mask = data.features[:, f] <= t
    score = node_impurity(data.outputs[mask]) + node_impurity(data.outputs[~mask])
    return SplitCandidate(int(f), float(t), score)


def _feature_array(candidate_features: Sequence[int], p: int) -> np.ndarray:
    feats = np.unique(np.asarray(list(candidate_features), dtype=np.int64))
    if feats.size == 0:
        raise ValueError("candidate_features must be non-empty")
    if feats[0] < 0 or feats[-1] >= p:
        raise ValueError("candidate feature index out of range")
    return feats


def best_split_exhaustive(data: Dataset, candidate_features: Sequence[int],
                          min_leaf_size: int = 1) -> Optional[SplitCandidate]:
    """Best CART split of the node holding all rows of ``data``.

    Thresholds are midpoints between consecutive distinct sorted values. Ties
    go to the lowest feature index, then the lowest threshold. Returns
    ``None`` if no split leaves ``min_leaf_size`` rows on both sides.
    """
    if data.n < 2:
        raise ValueError("a split needs at least two samples")
    feats = _feature_array(candidate_features, data.p)
    idx = np.arange(data.n, dtype=np.int64)
    found, f, t, _ = K.split_exhaustive(data.features, data.outputs, idx, feats, min_leaf_size)
    return _candidate(data, found, f, t)


def best_split_random(data: Dataset, candidate_features: Sequence[int], num_random_cuts: int,
                      rng: np.random.Generator, min_leaf_size: int = 1) -> Optional[SplitCandidate]:
    """Best of ``num_random_cuts`` uniform cuts on (min, max) of each feature."""
    if data.n < 2:
        raise ValueError("a split needs at least two samples")
    if num_random_cuts < 1:
        raise ValueError("num_random_cuts must be >= 1")
    feats = _feature_array(candidate_features, data.p)
    idx = np.arange(data.n, dtype=np.int64)
    found, f, t, _ = K.split_random(data.features, data.outputs, idx, feats, min_leaf_size,
                                    num_random_cuts, _seed_from(rng))
    return _candidate(data, found, f, t)


def grow_tree(data: Dataset, row_indices, config: GrowConfig, rng: np.random.Generator) -> Tree:
    """Grow an unpruned tree on ``data`` restricted to ``row_indices``.

    ``row_indices`` may repeat rows (bootstrap samples). A node becomes a
    leaf when it has fewer than ``2 * min_leaf_size`` rows, when its outputs
    are constant, or when no feasible split is found among the ``m_try``
    sampled features.
    """
    config.check(data.p)
    rows = np.ascontiguousarray(row_indices, dtype=np.int64)
    if rows.size == 0:
        raise ValueError("row_indices must be non-empty")
    if rows.min() < 0 or rows.max() >= data.n:
        raise ValueError("row index out of range")
    arrays = K.grow_single(data.features, data.outputs, rows, _seed_from(rng), config.m_try,
                           config.min_leaf_size, config.mode_code, config.num_random_cuts,
                           np.empty(0, dtype=np.int64), 0, 0.0)
    return Tree(*arrays)


def predict_tree(tree: Tree, x) -> np.ndarray:
    """Leaf mean reached by ``x`` (a p-vector, or an m x p matrix)."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        return tree.predict(x.reshape(1, -1))[0]
    return tree.predict(x)
