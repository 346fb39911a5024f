"""UCI concrete slump test data: loader and the uni/bi/trivariate comparison.

The UCI file (``slump_test.data``) is comma-separated with a header line and
11 columns: a record number, seven mix ingredients in kg/m^3 and three
outputs (slump cm, flow cm, 28-day compressive strength MPa).
"""

from __future__ import annotations

import csv
import itertools
from pathlib import Path
from typing import Iterable, List, Optional, Sequence

import numpy as np

from .evaluation import METHOD_NAMES, MethodConfig, cross_validate, standardize_outputs
from .tree import Dataset

FEATURE_NAMES = ("cement", "slag", "fly_ash", "water", "superplasticizer",
                 "coarse_aggregate", "fine_aggregate")
OUTPUT_NAMES = ("slump", "flow", "cs")
N_COLUMNS = 1 + len(FEATURE_NAMES) + len(OUTPUT_NAMES)
N_RECORDS = 103


class ConcreteParseError(ValueError):
    def __init__(self, path, line: int, message: str):
        super().__init__(f"{path}:{line}: {message}")
        self.line = line


def load_concrete(path, standardize: bool = False) -> Dataset:
    """Read the slump-test file into a 7-feature / 3-output dataset.

    The record-number column is dropped. With ``standardize=True`` the outputs
    are centred and scaled to unit sample variance over the whole file.
    """
    path = Path(path)
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise ConcreteParseError(path, 1, "empty file")
        if len(header) != N_COLUMNS:
            raise ConcreteParseError(path, 1, f"header has {len(header)} columns, "
                                              f"expected {N_COLUMNS}")
        for record in reader:
            line = reader.line_num
            if not record or all(not c.strip() for c in record):
                continue
            if len(record) != N_COLUMNS:
                raise ConcreteParseError(path, line, f"{len(record)} columns, expected {N_COLUMNS}")
            values = []
            for col, cell in enumerate(record):
                cell = cell.strip()
                if not cell:
                    raise ConcreteParseError(path, line, f"missing value in column {col + 1}")
                try:
                    values.append(float(cell))
                except ValueError:
                    raise ConcreteParseError(path, line,
                                             f"non-numeric value {cell!r} in column {col + 1}")
            rows.append(values)
    if not rows:
        raise ConcreteParseError(path, 2, "no data rows")
    table = np.array(rows)
    data = Dataset(table[:, 1:1 + len(FEATURE_NAMES)], table[:, 1 + len(FEATURE_NAMES):],
                   FEATURE_NAMES, OUTPUT_NAMES)
    return standardize_outputs(data) if standardize else data


def output_subsets(d: int = 3) -> List[tuple]:
    """All non-empty output subsets, by size then lexicographically."""
    return [c for r in range(1, d + 1) for c in itertools.combinations(range(d), r)]


RESULT_COLUMNS = ("table", "method", "outputs", "n_outputs", "folds", "repetitions",
                  "overall_mse", "sum_of_mse") + tuple(f"mse_{o}" for o in OUTPUT_NAMES)


def _row(table, method, data, subset, folds, reps, result) -> dict:
    names = [data.output_names[j] for j in subset]
    row = {"table": table, "method": method, "outputs": "+".join(names),
           "n_outputs": len(subset), "folds": folds, "repetitions": reps,
           "overall_mse": result.overall_mse, "sum_of_mse": result.sum_of_mse}
    for name in OUTPUT_NAMES:
        row[f"mse_{name}"] = ""
    for name, value in zip(names, result.per_output_mse):
        row[f"mse_{name}"] = float(value)
    return row


def run_concrete(data: Dataset, methods: Sequence[str] = METHOD_NAMES, repetitions: int = 20,
                 folds: int = 5, seed: int = 0, standardize: str = "fold",
                 loocv: bool = True, loocv_repetitions: int = 1, num_trees: int = 500,
                 threads: Optional[int] = None,
                 subsets: Optional[Iterable[tuple]] = None) -> List[dict]:
    """Repeated k-fold CV on every output subset, plus trivariate LOOCV.

    ``standardize="global"`` scales outputs once on the full data before any
    split; ``"fold"`` uses training-fold statistics inside each split.
    Rows with ``table == "cv"`` give the average overall MSE per subset;
    ``table == "loocv"`` rows give the leave-one-out sum of MSEs.
    """
    if standardize == "global":
        data = standardize_outputs(data)
        cv_mode = None
    elif standardize == "fold":
        cv_mode = "fold"
    else:
        raise ValueError("standardize must be 'global' or 'fold'")
    subsets = output_subsets(data.d) if subsets is None else [tuple(s) for s in subsets]
    rows = []
    for name in methods:
        method = MethodConfig(name, num_trees=num_trees, threads=threads)
        for subset in subsets:
            sub = data.subset(outputs=subset)
            res = cross_validate(sub, method, folds, repetitions, seed, cv_mode)
            rows.append(_row("cv", name, data, subset, folds, repetitions, res.mean))
        if loocv:
            full = tuple(range(data.d))
            res = cross_validate(data, method, data.n, loocv_repetitions, seed, cv_mode)
            rows.append(_row("loocv", name, data, full, data.n, loocv_repetitions, res.mean))
    return rows


def write_rows(rows: Sequence[dict], path, columns: Sequence[str]) -> None:
    with open(Path(path), "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(columns))
        writer.writeheader()
        for row in rows:
            writer.writerow(row)
