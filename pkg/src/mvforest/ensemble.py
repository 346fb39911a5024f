"""Random Forest and Extra Trees ensembles, multivariate or one forest per output.

Every tree draws its randomness from a seed derived from
``(seed, output_index, tree_index)``, so fits are bit-reproducible whatever
the number of threads. Multivariate mode uses output index 0, which makes a
single-output multivariate fit identical to the per-output fit.
"""

from __future__ import annotations

import contextlib
from dataclasses import dataclass, replace
from typing import List, Optional

import numba
import numpy as np

from . import _kernels as K
from .tree import Dataset, GrowConfig, Tree, _as_matrix, _task_array

METHODS = ("rf", "et")
OUTPUT_MODES = ("multivariate", "per_output_univariate")


def default_m_try(p: int) -> int:
    return max(1, p // 3)


@dataclass(frozen=True)
class EnsembleConfig:
    """Hyperparameters of a tree ensemble.

    ``m_try`` and ``bootstrap_size`` default (``None``) to ``max(1, p // 3)``
    and the number of training rows. ``bootstrap_size`` is ignored by Extra
    Trees, which grow every tree on all rows.
    """

    method: str = "rf"
    output_mode: str = "multivariate"
    num_trees: int = 500
    m_try: Optional[int] = None
    bootstrap_size: Optional[int] = None
    min_leaf_size: int = 5
    num_random_cuts: int = 1
    seed: int = 0
    threads: Optional[int] = None

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}, got {self.method!r}")
        if self.output_mode not in OUTPUT_MODES:
            raise ValueError(f"output_mode must be one of {OUTPUT_MODES}, got {self.output_mode!r}")
        if self.num_trees < 1:
            raise ValueError("num_trees must be >= 1")
        if self.m_try is not None and self.m_try < 1:
            raise ValueError("m_try must be >= 1")
        if self.bootstrap_size is not None and self.bootstrap_size < 1:
            raise ValueError("bootstrap_size must be >= 1")
        if self.min_leaf_size < 1:
            raise ValueError("min_leaf_size must be >= 1")
        if self.num_random_cuts < 1:
            raise ValueError("num_random_cuts must be >= 1")
        if not 0 <= self.seed < 2**63:
            raise ValueError("seed must be a non-negative 64-bit integer")
        if self.threads is not None and self.threads < 1:
            raise ValueError("threads must be >= 1")

    def resolve(self, n: int, p: int) -> "EnsembleConfig":
        """Fill in data-dependent defaults and validate against (n, p)."""
        m_try = default_m_try(p) if self.m_try is None else self.m_try
        if m_try > p:
            raise ValueError(f"m_try={m_try} exceeds the number of features p={p}")
        size = n if self.bootstrap_size is None else self.bootstrap_size
        return replace(self, m_try=m_try, bootstrap_size=size)

    def grow_config(self) -> GrowConfig:
        return GrowConfig(
            m_try=self.m_try,
            min_leaf_size=self.min_leaf_size,
            num_random_cuts=self.num_random_cuts,
            split_mode="exhaustive" if self.method == "rf" else "random",
        )


def tree_seeds(seed: int, output_index: int, num_trees: int) -> np.ndarray:
    """32-bit seeds for trees ``0..num_trees-1`` of one output's forest."""
    ss = np.random.SeedSequence([seed, output_index])
    return ss.generate_state(num_trees, dtype=np.uint32).astype(np.int64)


def bootstrap_indices(config: EnsembleConfig, n: int, tree_index: int,
                      output_index: int = 0) -> np.ndarray:
    """Training rows used by one tree (with replacement for RF, all rows for ET)."""
    seed = tree_seeds(config.seed, output_index, tree_index + 1)[tree_index]
    if config.method == "rf":
        size = n if config.bootstrap_size is None else config.bootstrap_size
        return K.draw_rows(seed, n, size, True)
    return K.draw_rows(seed, n, n, False)


@contextlib.contextmanager
def _numba_threads(threads: Optional[int]):
    if threads is None:
        yield
        return
    previous = numba.get_num_threads()
    numba.set_num_threads(min(threads, numba.config.NUMBA_NUM_THREADS))
    try:
        yield
    finally:
        numba.set_num_threads(previous)


@dataclass(frozen=True, eq=False)
class Forest:
    """Trees of one forest concatenated into flat node arrays.

    Tree ``b`` occupies nodes ``offsets[b]:offsets[b + 1]``; child ids are
    global into the flat arrays.
    """

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    count: np.ndarray
    value: np.ndarray
    taskmask: np.ndarray
    offsets: np.ndarray

    @classmethod
    def from_padded(cls, feature, threshold, left, right, count, value, taskmask, n_nodes):
        B, cap = feature.shape
        valid = np.arange(cap)[None, :] < n_nodes[:, None]
        offsets = np.zeros(B + 1, dtype=np.int64)
        np.cumsum(n_nodes, out=offsets[1:])
        shift = np.broadcast_to(offsets[:-1, None], feature.shape)[valid]
        left = left[valid]
        right = right[valid]
        internal = left >= 0
        left[internal] += shift[internal]
        right[internal] += shift[internal]
        return cls(feature[valid], threshold[valid], left, right, count[valid],
                   value[valid], taskmask[valid], offsets)

    @property
    def num_trees(self) -> int:
        return len(self.offsets) - 1

    def tree(self, b: int) -> Tree:
        lo, hi = self.offsets[b], self.offsets[b + 1]
        left = self.left[lo:hi].copy()
        right = self.right[lo:hi].copy()
        internal = left >= 0
        left[internal] -= lo
        right[internal] -= lo
        return Tree(self.feature[lo:hi], self.threshold[lo:hi], left, right,
                    self.count[lo:hi], self.value[lo:hi], self.taskmask[lo:hi])

    def trees(self) -> List[Tree]:
        return [self.tree(b) for b in range(self.num_trees)]

    def predict(self, X: np.ndarray, tasks=None) -> np.ndarray:
        return K.predict_forest(X, _task_array(tasks), self.feature, self.threshold, self.left,
                                self.right, self.value, self.taskmask, self.offsets)


def grow_forest(X: np.ndarray, Y: np.ndarray, seeds: np.ndarray, grow: GrowConfig,
                size: int, bootstrap: bool, tasks=None, n_tasks: int = 0,
                alpha: float = 0.0, threads: Optional[int] = None) -> Forest:
    with _numba_threads(threads):
        arrays = K.grow_forest(X, Y, seeds, size, bootstrap, grow.m_try, grow.min_leaf_size,
                               grow.mode_code, grow.num_random_cuts, _task_array(tasks),
                               n_tasks, alpha)
    return Forest.from_padded(*arrays)


@dataclass(frozen=True, eq=False)
class FittedEnsemble:
    """A fitted ensemble; immutable and safe to share between threads.

    Multivariate mode holds one forest over all ``d`` outputs, per-output
    mode holds ``d`` single-output forests.
    """

    forests: tuple
    config: EnsembleConfig
    d: int
    p: int

    @property
    def trees(self):
        if self.config.output_mode == "multivariate":
            return self.forests[0].trees()
        return [f.trees() for f in self.forests]

    def predict(self, X) -> np.ndarray:
        return predict(self, X)


def fit(data: Dataset, config: EnsembleConfig) -> FittedEnsemble:
    cfg = config.resolve(data.n, data.p)
    grow = cfg.grow_config()
    bootstrap = cfg.method == "rf"
    size = cfg.bootstrap_size if bootstrap else data.n
    if cfg.output_mode == "multivariate":
        columns = [data.outputs]
    else:
        columns = [np.ascontiguousarray(data.outputs[:, [j]]) for j in range(data.d)]
    forests = tuple(
        grow_forest(data.features, Y, tree_seeds(cfg.seed, j, cfg.num_trees), grow, size,
                    bootstrap, threads=cfg.threads)
        for j, Y in enumerate(columns)
    )
    return FittedEnsemble(forests, cfg, data.d, data.p)


def predict(model: FittedEnsemble, x) -> np.ndarray:
    """Ensemble prediction for a p-vector (returns a d-vector) or an m x p matrix."""
    single = np.ndim(x) == 1
    X = _as_matrix(np.atleast_2d(x), "x")
    if X.shape[1] != model.p:
        raise ValueError(f"expected {model.p} features, got {X.shape[1]}")
    if model.config.output_mode == "multivariate":
        out = model.forests[0].predict(X)
    else:
        out = np.hstack([f.predict(X) for f in model.forests])
    return out[0] if single else out
