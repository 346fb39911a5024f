"""Multi-task Extra Trees.

The d-output problem is stacked into n*d single-output rows, each tagged with
the output ("task") it came from. Trees are grown as Extra Trees on the
stacked rows, but every node also considers one random split on task
membership. Tasks are ordered by their shrunken node means::

    f_t = (sum_{v in I_t} y_v + alpha * mean_{w in I} y_w) / (|I_t| + alpha)

and a cut drawn uniformly from ``(min_t f_t, max_t f_t)`` sends tasks with
``f_t <= cut`` left. Outputs must be on a common scale for this to make sense;
standardising them is left to the caller.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, Optional

import numpy as np

from . import _kernels as K
from .ensemble import Forest, default_m_try, grow_forest, tree_seeds
from .tree import Dataset, GrowConfig, _as_matrix, node_impurity

MAX_TASKS = 62


@dataclass(frozen=True)
class StackedDataset:
    """Task-major stacking: all task-1 rows, then task-2 rows, and so on."""

    features: np.ndarray  # (n*d, p)
    targets: np.ndarray  # (n*d,)
    tasks: np.ndarray  # (n*d,) labels in 1..d

    @property
    def n_tasks(self) -> int:
        return int(self.tasks.max())


def stack(data: Dataset) -> StackedDataset:
    n, d = data.n, data.d
    features = np.tile(data.features, (d, 1))
    targets = data.outputs.T.reshape(-1).copy()
    tasks = np.repeat(np.arange(1, d + 1), n)
    return StackedDataset(features, targets, tasks)


def unstack(stacked: StackedDataset) -> Dataset:
    d = stacked.n_tasks
    n = len(stacked.targets) // d
    outputs = stacked.targets.reshape(d, n).T
    return Dataset(stacked.features[:n], outputs)


def _task_codes(tasks) -> tuple:
    labels = np.asarray(tasks)
    if labels.size == 0:
        raise ValueError("node must be non-empty")
    if labels.min() < 1:
        raise ValueError("task labels start at 1")
    n_tasks = int(labels.max())
    if n_tasks > MAX_TASKS:
        raise ValueError(f"at most {MAX_TASKS} tasks are supported")
    return np.ascontiguousarray(labels - 1, dtype=np.int64), n_tasks


def task_features(node_targets, node_tasks, alpha: float = 1.0) -> Dict[int, float]:
    """Shrunken task means ``f_t`` for the tasks present in a node."""
    if alpha < 0:
        raise ValueError("alpha must be non-negative")
    y = _as_matrix(node_targets, "node_targets")
    codes, n_tasks = _task_codes(node_tasks)
    if len(codes) != len(y):
        raise ValueError("node_targets and node_tasks differ in length")
    f, present = K.task_features(y, codes, n_tasks, float(alpha))
    return {t + 1: float(f[t]) for t in range(n_tasks) if present[t]}


@dataclass(frozen=True)
class TaskSplit:
    left_tasks: frozenset
    threshold: float  # cut on the f_t scale
    score: float  # left + right SSE


def task_split_candidate(node_targets, node_tasks, alpha: float, rng: np.random.Generator,
                         min_leaf_size: int = 1) -> Optional[TaskSplit]:
    """Draw the single random task split of a node.

    Returns ``None`` when fewer than two distinct ``f_t`` values exist or the
    split leaves fewer than ``min_leaf_size`` rows on a side.
    """
    y = _as_matrix(node_targets, "node_targets")
    codes, n_tasks = _task_codes(node_tasks)
    idx = np.arange(len(y), dtype=np.int64)
    found, cut, _, mask = K.split_task(y, codes, idx, n_tasks, float(alpha), min_leaf_size,
                                       int(rng.integers(0, 2**32)))
    if not found:
        return None
    # only tasks present in the node; the kernel's mask also routes absent ones
    present = set(codes.tolist())
    left_tasks = frozenset(t + 1 for t in present if (mask >> t) & 1)
    goes_left = np.isin(np.asarray(node_tasks), list(left_tasks))
    score = node_impurity(y[goes_left]) + node_impurity(y[~goes_left])
    return TaskSplit(left_tasks, float(cut), score)


@dataclass(frozen=True)
class MultiTaskConfig:
    alpha: float = 1.0
    num_trees: int = 500
    m_try: Optional[int] = None
    min_leaf_size: int = 5
    num_random_cuts: int = 1
    seed: int = 0
    threads: Optional[int] = None

    def __post_init__(self):
        if not self.alpha >= 0:
            raise ValueError("alpha must be non-negative")
        if self.num_trees < 1:
            raise ValueError("num_trees must be >= 1")
        if self.m_try is not None and self.m_try < 1:
            raise ValueError("m_try must be >= 1")
        if self.min_leaf_size < 1 or self.num_random_cuts < 1:
            raise ValueError("min_leaf_size and num_random_cuts must be >= 1")
        if not 0 <= self.seed < 2**63:
            raise ValueError("seed must be a non-negative 64-bit integer")


@dataclass(frozen=True, eq=False)
class FittedMultiTask:
    forest: Forest
    config: MultiTaskConfig
    d: int
    p: int

    def predict(self, X) -> np.ndarray:
        return predict_multitask(self, X)


def fit_multitask(data: Dataset, config: MultiTaskConfig = MultiTaskConfig()) -> FittedMultiTask:
    if data.d > MAX_TASKS:
        raise ValueError(f"at most {MAX_TASKS} outputs are supported")
    # the task indicator is not counted as a feature
    m_try = default_m_try(data.p) if config.m_try is None else config.m_try
    if m_try > data.p:
        raise ValueError(f"m_try={m_try} exceeds the number of features p={data.p}")
    grow = GrowConfig(m_try, config.min_leaf_size, config.num_random_cuts, "random")
    st = stack(data)
    forest = grow_forest(
        np.ascontiguousarray(st.features), st.targets.reshape(-1, 1),
        tree_seeds(config.seed, 0, config.num_trees), grow, len(st.targets), False,
        tasks=st.tasks - 1, n_tasks=data.d, alpha=float(config.alpha), threads=config.threads,
    )
    return FittedMultiTask(forest, config, data.d, data.p)


def predict_multitask(model: FittedMultiTask, x) -> np.ndarray:
    """Predict every task for each row; returns a d-vector or an m x d matrix."""
    single = np.ndim(x) == 1
    X = _as_matrix(np.atleast_2d(x), "x")
    if X.shape[1] != model.p:
        raise ValueError(f"expected {model.p} features, got {X.shape[1]}")
    m = X.shape[0]
    out = np.empty((m, model.d))
    for t in range(model.d):
        out[:, t] = model.forest.predict(X, np.full(m, t, dtype=np.int64))[:, 0]
    return out[0] if single else out
