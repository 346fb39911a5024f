"""Cross-validation, MSE metrics and fit-time benchmarks for all five methods."""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np

from .ensemble import EnsembleConfig, fit
from .multitask import MultiTaskConfig, fit_multitask
from .tree import Dataset

METHOD_NAMES = ("et_mt", "et_multi", "et_univ", "rf_multi", "rf_univ")
STANDARDIZE_MODES = ("global", "fold")


@dataclass(frozen=True)
class MethodConfig:
    """One of the five compared learners with its shared hyperparameters."""

    name: str
    num_trees: int = 500
    m_try: Optional[int] = None
    min_leaf_size: int = 5
    num_random_cuts: int = 1
    alpha: float = 1.0
    threads: Optional[int] = None

    def __post_init__(self):
        if self.name not in METHOD_NAMES:
            raise ValueError(f"unknown method {self.name!r}; choose from {METHOD_NAMES}")

    def fit(self, data: Dataset, seed: int = 0):
        if self.name == "et_mt":
            cfg = MultiTaskConfig(alpha=self.alpha, num_trees=self.num_trees, m_try=self.m_try,
                                  min_leaf_size=self.min_leaf_size,
                                  num_random_cuts=self.num_random_cuts, seed=seed,
                                  threads=self.threads)
            return fit_multitask(data, cfg)
        method, mode = self.name.split("_")
        cfg = EnsembleConfig(
            method=method,
            output_mode="multivariate" if mode == "multi" else "per_output_univariate",
            num_trees=self.num_trees, m_try=self.m_try, min_leaf_size=self.min_leaf_size,
            num_random_cuts=self.num_random_cuts, seed=seed, threads=self.threads,
        )
        return fit(data, cfg)


@dataclass(frozen=True)
class FoldAssignment:
    fold_of: np.ndarray  # labels 1..k

    @property
    def k(self) -> int:
        return int(self.fold_of.max())

    def sizes(self) -> List[int]:
        return np.bincount(self.fold_of, minlength=self.k + 1)[1:].tolist()

    def split(self, fold: int):
        """(train rows, test rows) for fold label ``fold``."""
        test = self.fold_of == fold
        return np.flatnonzero(~test), np.flatnonzero(test)


def kfold(n: int, k: int, rng: np.random.Generator) -> FoldAssignment:
    """Random balanced partition of ``n`` rows; earlier folds take the remainder."""
    if not 2 <= k <= n:
        raise ValueError(f"need 2 <= k <= n, got k={k}, n={n}")
    fold_of = np.empty(n, dtype=np.int64)
    fold_of[rng.permutation(n)] = np.arange(n) % k + 1
    return FoldAssignment(fold_of)


@dataclass(frozen=True)
class EvalResult:
    overall_mse: float
    per_output_mse: np.ndarray
    sum_of_mse: float
    fit_time: float = 0.0
    predict_time: float = 0.0

    @property
    def d(self) -> int:
        return len(self.per_output_mse)


def mse_metrics(predictions, truth) -> EvalResult:
    P = np.atleast_2d(np.asarray(predictions, dtype=np.float64))
    Y = np.atleast_2d(np.asarray(truth, dtype=np.float64))
    if P.shape != Y.shape:
        raise ValueError(f"shape mismatch: predictions {P.shape} vs truth {Y.shape}")
    if P.shape[0] == 0:
        raise ValueError("cannot compute MSE of zero predictions")
    per_output = np.mean((P - Y) ** 2, axis=0)
    total = float(per_output.sum())
    return EvalResult(total / len(per_output), per_output, total)


def standardize_outputs(data: Dataset, mean=None, scale=None) -> Dataset:
    """Center and scale outputs (sample standard deviation, ddof=1)."""
    Y = data.outputs
    mean = Y.mean(axis=0) if mean is None else mean
    scale = Y.std(axis=0, ddof=1) if scale is None else scale
    scale = np.where(scale > 0, scale, 1.0)
    return Dataset(data.features, (Y - mean) / scale, data.feature_names, data.output_names)


class CrossValidationError(RuntimeError):
    pass


@dataclass(frozen=True)
class CVResult:
    mean: EvalResult
    repetitions: List[EvalResult] = field(default_factory=list)


def _model_seed(seed: int, repetition: int, fold: int) -> int:
    ss = np.random.SeedSequence([seed, repetition, fold])
    return int(ss.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))


def cross_validate_once(data: Dataset, method, folds: FoldAssignment, seed: int = 0,
                        repetition: int = 0, standardize: Optional[str] = None) -> EvalResult:
    """Fit on k-1 folds, predict the held-out fold, pool predictions, score.

    ``fit_time``/``predict_time`` are mean seconds per fold.
    """
    if standardize is not None and standardize not in STANDARDIZE_MODES:
        raise ValueError(f"standardize must be one of {STANDARDIZE_MODES} or None")
    if standardize == "global":
        data = standardize_outputs(data)
    truth = data.outputs.copy()
    pred = np.empty_like(truth)
    fit_s = pred_s = 0.0
    for fold in range(1, folds.k + 1):
        train_rows, test_rows = folds.split(fold)
        train = data.subset(train_rows)
        if standardize == "fold":
            mu = train.outputs.mean(axis=0)
            sd = train.outputs.std(axis=0, ddof=1)
            train = standardize_outputs(train, mu, sd)
            truth[test_rows] = (data.outputs[test_rows] - mu) / np.where(sd > 0, sd, 1.0)
        try:
            t0 = time.perf_counter()
            model = method.fit(train, _model_seed(seed, repetition, fold))
            t1 = time.perf_counter()
            pred[test_rows] = model.predict(data.features[test_rows])
            t2 = time.perf_counter()
        except Exception as exc:
            name = getattr(method, "name", type(method).__name__)
            raise CrossValidationError(
                f"{name}: repetition {repetition}, fold {fold} failed: {exc}") from exc
        fit_s += t1 - t0
        pred_s += t2 - t1
    res = mse_metrics(pred, truth)
    return EvalResult(res.overall_mse, res.per_output_mse, res.sum_of_mse,
                      fit_s / folds.k, pred_s / folds.k)


def fold_rng(seed: int, repetition: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, repetition]))


def aggregate(results: Sequence[EvalResult]) -> EvalResult:
    per_output = np.mean([r.per_output_mse for r in results], axis=0)
    return EvalResult(
        float(np.mean([r.overall_mse for r in results])),
        per_output,
        float(np.mean([r.sum_of_mse for r in results])),
        float(np.mean([r.fit_time for r in results])),
        float(np.mean([r.predict_time for r in results])),
    )


def cross_validate(data: Dataset, method, k: int = 5, repetitions: int = 1, seed: int = 0,
                   standardize: Optional[str] = None) -> CVResult:
    """Repeated k-fold CV with fresh folds per repetition; ``k = n`` gives LOOCV.

    ``method`` is a :class:`MethodConfig` or any object whose
    ``fit(data, seed)`` returns something with ``predict(X)``.
    """
    if repetitions < 1:
        raise ValueError("repetitions must be >= 1")
    results = []
    for rep in range(repetitions):
        folds = kfold(data.n, k, fold_rng(seed, rep))
        results.append(cross_validate_once(data, method, folds, seed, rep, standardize))
    return CVResult(aggregate(results), results)


@dataclass(frozen=True)
class RuntimeStats:
    samples: np.ndarray

    @property
    def mean(self) -> float:
        return float(np.mean(self.samples))

    @property
    def min(self) -> float:
        return float(np.min(self.samples))

    @property
    def max(self) -> float:
        return float(np.max(self.samples))

    def quantile(self, q: float) -> float:
        return float(np.quantile(self.samples, q))

    def summary(self) -> dict:
        return {"mean": self.mean, "min": self.min, "q05": self.quantile(0.05),
                "median": self.quantile(0.5), "q95": self.quantile(0.95), "max": self.max}


def benchmark_fit(data: Dataset, method, repetitions: int = 1, seed: int = 0,
                  warmup: bool = True) -> RuntimeStats:
    """Wall-clock seconds of ``method.fit`` on the whole dataset.

    A warm-up fit on a small slice (not timed) triggers kernel compilation.
    """
    if repetitions < 1:
        raise ValueError("repetitions must be >= 1")
    if warmup:
        method.fit(data.subset(np.arange(min(data.n, 20))), seed)
    samples = np.empty(repetitions)
    for rep in range(repetitions):
        t0 = time.perf_counter()
        method.fit(data, seed + rep)
        samples[rep] = time.perf_counter() - t0
    return RuntimeStats(samples)
