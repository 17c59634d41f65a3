"""Benchmark evaluation (ROC AUC over repeated seeded runs) and top-score row removal."""

from __future__ import annotations

import csv
import dataclasses
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.stats import rankdata

from .dataset import Dataset, DatasetError, SchemaConfig, build_dataset, ceil_fraction, read_raw_table
from .forest import ForestConfig
from .scoring import AnomalyReport, score_dataset

__all__ = [
    "LabeledScores",
    "roc_auc",
    "repeated_auc",
    "filter_top_percent",
    "load_labeled_csv",
    "parse_binary_labels",
    "copy_rows",
]


@dataclass(frozen=True)
class LabeledScores:
    """Scores paired with binary labels, 1 marking an anomaly."""

    scores: np.ndarray
    labels: np.ndarray

    def __post_init__(self) -> None:
        scores = np.asarray(self.scores, dtype=np.float64)
        labels = np.asarray(self.labels)
        if scores.shape != labels.shape or scores.ndim != 1:
            raise ValueError("scores and labels must be one-dimensional and of equal length")
        if not np.isin(labels, (0, 1)).all():
            raise ValueError("labels must be 0 or 1")
        object.__setattr__(self, "scores", scores)
        object.__setattr__(self, "labels", labels.astype(np.int64))


def roc_auc(scores: Sequence[float] | LabeledScores, labels: Sequence[int] | None = None) -> float:
    """Area under the ROC curve via the Mann-Whitney rank sum, tied scores getting average ranks."""
    ls = scores if isinstance(scores, LabeledScores) else LabeledScores(scores, labels)
    pos = ls.labels == 1
    n_pos = int(pos.sum())
    n_neg = len(ls.labels) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("AUC is undefined unless both classes are present")
    ranks = rankdata(ls.scores, method="average")
    return float((ranks[pos].sum() - n_pos * (n_pos + 1) / 2) / (n_pos * n_neg))


def repeated_auc(
    dataset: Dataset,
    labels: Sequence[int],
    config: ForestConfig,
    repeats: int = 10,
    *,
    threads: int | None = 1,
) -> tuple[float, list[float]]:
    """Mean and per-run AUC over runs seeded ``config.seed + r``.

    Scoring only ever sees ``dataset``; labels are used after each run.
    """
    if repeats < 1:
        raise ValueError("repeats must be >= 1")
    labels = np.asarray(labels)
    if len(labels) != dataset.n_rows:
        raise ValueError(f"{len(labels)} labels for {dataset.n_rows} rows")
    aucs = []
    for r in range(repeats):
        run = dataclasses.replace(config, seed=(config.seed + r) % 2**64)
        report = score_dataset(dataset, run, threads=threads)
        aucs.append(roc_auc(report.total, labels))
    return float(np.mean(aucs)), aucs


def filter_top_percent(dataset: Dataset, report: AnomalyReport, pct: float) -> tuple[Dataset, list[int]]:
    """Drop the ``ceil(pct * N)`` highest-scoring rows.

    Returns the kept rows (original order) and the positions of removed
    rows, highest score first; equal scores remove the lower position first.
    """
    if not 0.0 <= pct < 1.0:
        raise ValueError(f"pct must be in [0, 1), got {pct}")
    if report.n_rows != dataset.n_rows:
        raise ValueError("report is not aligned with the dataset")
    n_remove = ceil_fraction(pct, dataset.n_rows)
    removed = [int(i) for i in report.ranking()[:n_remove]]
    keep = np.setdiff1d(np.arange(dataset.n_rows), removed)
    return dataset.take(keep), removed


def parse_binary_labels(cells: Sequence[str], column: str = "label") -> np.ndarray:
    """Map label cells to 0/1; any value that is not numerically 0 or 1 is an error."""
    labels = np.empty(len(cells), dtype=np.int64)
    bad = []
    for i, cell in enumerate(cells):
        try:
            v = float(cell)
        except ValueError:
            v = None
        if v == 0.0 or v == 1.0:
            labels[i] = int(v)
        elif cell not in bad:
            bad.append(cell)
    if bad:
        raise DatasetError(f"label column {column!r} must be binary (0/1); offending values: {bad[:10]}")
    return labels


def load_labeled_csv(
    path: str | Path, label_column: str, schema: SchemaConfig | None = None
) -> tuple[Dataset, np.ndarray]:
    """Load a benchmark CSV, returning the feature dataset (label excluded) and the labels."""
    table = read_raw_table(path)
    if label_column not in table.header:
        raise DatasetError(f"{path}: no label column named {label_column!r}")
    dataset = build_dataset(table, schema, exclude=(label_column,), source=str(path))
    j = table.header.index(label_column)
    cells = [table.rows[r][j].strip() for r in dataset.row_ids]
    return dataset, parse_binary_labels(cells, label_column)


def copy_rows(source: str | Path, destination: str | Path, keep_row_ids: Sequence[int]) -> None:
    """Copy the header and the given data rows of ``source`` byte-for-byte into ``destination``.

    Row ids are 0-based data-row indices as produced by :func:`read_raw_table`.
    """
    source = Path(source)
    table = read_raw_table(source)
    with source.open(newline="", encoding="utf-8") as fh:
        lines = fh.readlines()
    reader = csv.reader(lines)
    next(reader)
    prev_end = reader.line_num
    keep = {int(r) for r in keep_row_ids}
    with open(destination, "w", newline="", encoding="utf-8") as out:
        out.writelines(lines[:prev_end])
        for r, end in enumerate(table.line_numbers):
            if r in keep:
                chunk = lines[prev_end:end]
                # blank lines between records are not data; leave them behind
                while len(chunk) > 1 and not chunk[0].strip():
                    chunk = chunk[1:]
                out.writelines(chunk)
            prev_end = end
