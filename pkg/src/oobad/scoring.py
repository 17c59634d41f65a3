"""Per-feature uncertainty/disagreement scores and their aggregation into row scores.

For each column ``k`` a forest predicts ``k`` from the other columns. Each
row's out-of-bag predictions yield two statistics:

* categorical target: normalised entropy of the predicted labels and one
  minus the share of predictions equal to the observed label;
* numerical target: population variance of the predictions and the squared
  gap between their mean and the observed value.

The per-row sum of the two is min-max scaled per feature, and the scaled
feature scores are summed into the row's anomaly score.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Sequence, TextIO

import numpy as np

from .dataset import Categorical, Dataset, split_features
from .forest import Forest, ForestConfig, OOBPredictionSet, fit_forest, oob_predictions

__all__ = [
    "NoOOBModels",
    "categorical_uncertainty",
    "categorical_disagreement",
    "numerical_score",
    "minmax_scale",
    "entropy_bounds",
    "FeatureScoreColumn",
    "AnomalyReport",
    "score_oob",
    "score_feature",
    "score_dataset",
    "fit_forests",
]

logger = logging.getLogger(__name__)


class NoOOBModels(ValueError):
    """A row has no out-of-bag trees, so its score is undefined."""


def categorical_uncertainty(preds: Sequence[int], cardinality: int) -> float:
    """Shannon entropy of the predicted labels divided by ``log(cardinality)``."""
    if len(preds) == 0:
        raise NoOOBModels("no OOB models")
    if cardinality < 2:
        raise ValueError("cardinality must be >= 2")
    counts = np.bincount(np.asarray(preds, dtype=np.int64), minlength=cardinality)
    if len(counts) > cardinality:
        raise ValueError(f"labels must lie in [0, {cardinality})")
    p = counts[counts > 0] / len(preds)
    return float(-(p * np.log(p)).sum() / math.log(cardinality))


def categorical_disagreement(preds: Sequence[int], observed: int) -> float:
    if len(preds) == 0:
        raise NoOOBModels("no OOB models")
    preds = np.asarray(preds)
    return float(1.0 - np.count_nonzero(preds == observed) / len(preds))


def numerical_score(preds: Sequence[float], observed: float) -> tuple[float, float]:
    """Return ``(uncertainty, disagreement)`` for a numerical cell.

    Uncertainty is the population variance of ``preds``; disagreement is
    ``(mean(preds) - observed) ** 2``. They sum to ``mean((preds - observed) ** 2)``.
    """
    if len(preds) == 0:
        raise NoOOBModels("no OOB models")
    preds = np.asarray(preds, dtype=np.float64)
    mean = preds.mean()
    return float(np.mean((preds - mean) ** 2)), float((mean - observed) ** 2)


def minmax_scale(raw: Sequence[float]) -> np.ndarray:
    """Affine map onto [0, 1]; a constant input maps to all zeros."""
    raw = np.asarray(raw, dtype=np.float64)
    if raw.size == 0:
        return raw.copy()
    lo, hi = raw.min(), raw.max()
    if hi == lo:
        return np.zeros_like(raw)
    return (raw - lo) / (hi - lo)


def _xlogx(x: float) -> float:
    return 0.0 if x <= 0.0 else x * math.log(x)


def entropy_bounds(p: float, cardinality: int) -> tuple[float, float]:
    """Range of the (natural-log) entropy of a distribution giving mass ``p`` to one class.

    The minimum puts all remaining mass on a single other class; the maximum
    spreads it evenly over the other ``cardinality - 1`` classes.
    """
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"p must be in [0, 1], got {p}")
    if cardinality < 2:
        raise ValueError("cardinality must be >= 2")
    q = 1.0 - p
    lower = -_xlogx(p) - _xlogx(q)
    upper = -_xlogx(p) - (0.0 if q <= 0.0 else q * math.log(q / (cardinality - 1)))
    return lower, upper


@dataclass(frozen=True)
class FeatureScoreColumn:
    """Scores of one feature for every row.

    ``warnings`` lists ``(row, message)`` pairs for rows that had no
    out-of-bag trees; those rows get 0 for every statistic.
    """

    feature: int
    name: str
    cardinality: int | None
    uncertainty: np.ndarray
    disagreement: np.ndarray
    raw: np.ndarray
    scaled: np.ndarray
    oob_counts: np.ndarray
    warnings: tuple[tuple[int, str], ...] = ()

    @property
    def is_categorical(self) -> bool:
        return self.cardinality is not None

    def observed_mass(self) -> np.ndarray:
        """OOB probability mass on the observed label (categorical only)."""
        if not self.is_categorical:
            raise TypeError("observed mass is defined for categorical features only")
        return 1.0 - self.disagreement

    def entropy(self) -> np.ndarray:
        """Unnormalised OOB label entropy (categorical only)."""
        if not self.is_categorical:
            raise TypeError("entropy is defined for categorical features only")
        return self.uncertainty * math.log(self.cardinality)


def score_oob(oob: OOBPredictionSet, observed: np.ndarray, cardinality: int | None) -> tuple[np.ndarray, np.ndarray]:
    """Vectorised uncertainty and disagreement for all rows (zeros where a row has no OOB trees)."""
    # one contiguous row per data row, so each row's reductions do not depend on its position
    mask = np.ascontiguousarray(oob.mask.T)
    preds = np.ascontiguousarray(oob.predictions.T)
    counts = mask.sum(axis=1)
    safe = np.maximum(counts, 1)
    if cardinality is not None:
        labels = preds.astype(np.int64)
        votes = np.stack([((labels == c) & mask).sum(axis=1) for c in range(cardinality)], axis=1)
        p = votes / safe[:, None]
        with np.errstate(divide="ignore", invalid="ignore"):
            plogp = np.where(p > 0, p * np.log(np.where(p > 0, p, 1.0)), 0.0)
        uncertainty = -plogp.sum(axis=1) / math.log(cardinality)
        uncertainty = np.maximum(uncertainty, 0.0)
        hit = votes[np.arange(len(observed)), np.asarray(observed, dtype=np.int64)]
        disagreement = 1.0 - hit / safe
    else:
        mean = np.where(mask, preds, 0.0).sum(axis=1) / safe
        dev = np.where(mask, preds - mean[:, None], 0.0)
        uncertainty = (dev * dev).sum(axis=1) / safe
        disagreement = (mean - observed) ** 2
    empty = counts == 0
    uncertainty[empty] = 0.0
    disagreement[empty] = 0.0
    return uncertainty, disagreement


def _feature_scores(dataset: Dataset, k: int, forest: Forest) -> FeatureScoreColumn:
    target, predictors = split_features(dataset, k)
    oob = oob_predictions(forest, predictors)
    cardinality = target.kind.cardinality if isinstance(target.kind, Categorical) else None
    uncertainty, disagreement = score_oob(oob, target.data, cardinality)
    raw = uncertainty + disagreement
    counts = oob.counts
    warnings = tuple((int(i), "no OOB models; feature score set to 0") for i in np.flatnonzero(counts == 0))
    if warnings:
        logger.warning("feature %r: %d row(s) had no OOB models and score 0", target.name, len(warnings))
    arrays = [uncertainty, disagreement, raw, minmax_scale(raw), counts]
    for a in arrays:
        a.setflags(write=False)
    return FeatureScoreColumn(k, target.name, cardinality, *arrays, warnings)


def fit_forests(dataset: Dataset, config: ForestConfig, *, threads: int | None = 1) -> list[Forest]:
    """One forest per column, column ``k`` predicted from the others."""
    forests = []
    for k in range(dataset.n_columns):
        target, predictors = split_features(dataset, k)
        forests.append(fit_forest(predictors, target, config, stream=k, threads=threads))
    return forests


def score_feature(
    dataset: Dataset,
    k: int,
    config: ForestConfig,
    *,
    threads: int | None = 1,
    forest: Forest | None = None,
) -> FeatureScoreColumn:
    """Fit (or reuse) the forest for column ``k`` and score every row on that feature."""
    target, predictors = split_features(dataset, k)
    if forest is None:
        forest = fit_forest(predictors, target, config, stream=k, threads=threads)
    return _feature_scores(dataset, k, forest)


@dataclass(frozen=True)
class AnomalyReport:
    """Row anomaly scores with the per-feature breakdown.

    ``total[i]`` is the sum over features of ``scaled[i, k]``. Rows stay in
    dataset order; ``row_ids`` refer to data rows of the source file.
    """

    row_ids: np.ndarray
    total: np.ndarray
    scaled: np.ndarray
    feature_names: tuple[str, ...]
    features: tuple[FeatureScoreColumn, ...]
    config: dict = field(default_factory=dict)

    @property
    def n_rows(self) -> int:
        return len(self.total)

    @property
    def warnings(self) -> list[tuple[str, int, str]]:
        return [(f.name, row, msg) for f in self.features for row, msg in f.warnings]

    def ranking(self) -> np.ndarray:
        """Row positions by descending total score, lower position first on ties."""
        return np.lexsort((np.arange(self.n_rows), -self.total))

    def write_csv(self, fh: TextIO, *, sort: bool = False) -> None:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["row_id", "total_score", *self.feature_names])
        order = self.ranking() if sort else range(self.n_rows)
        for i in order:
            writer.writerow([int(self.row_ids[i]), repr(float(self.total[i])), *(repr(float(v)) for v in self.scaled[i])])

    def to_csv(self, *, sort: bool = False) -> str:
        buf = io.StringIO()
        self.write_csv(buf, sort=sort)
        return buf.getvalue()

    def to_dict(self, *, sort: bool = False) -> dict:
        order = self.ranking() if sort else np.arange(self.n_rows)
        rows = []
        for i in order:
            rows.append(
                {
                    "row_id": int(self.row_ids[i]),
                    "total_score": float(self.total[i]),
                    "features": {
                        f.name: {
                            "scaled": float(f.scaled[i]),
                            "raw": float(f.raw[i]),
                            "uncertainty": float(f.uncertainty[i]),
                            "disagreement": float(f.disagreement[i]),
                        }
                        for f in self.features
                    },
                }
            )
        return {
            "config": self.config,
            "features": [
                {"name": f.name, "kind": "categorical" if f.is_categorical else "numerical", "cardinality": f.cardinality}
                for f in self.features
            ],
            "warnings": [{"feature": name, "row": row, "message": msg} for name, row, msg in self.warnings],
            "rows": rows,
        }

    def to_json(self, *, sort: bool = False) -> str:
        return json.dumps(self.to_dict(sort=sort), indent=2) + "\n"


def score_dataset(
    dataset: Dataset,
    config: ForestConfig,
    *,
    threads: int | None = 1,
    forests: Sequence[Forest] | None = None,
) -> AnomalyReport:
    """Score every row of ``dataset``; pass ``forests`` to reuse previously fitted models."""
    if forests is not None and len(forests) != dataset.n_columns:
        raise ValueError(f"expected {dataset.n_columns} forests, got {len(forests)}")
    features = tuple(
        score_feature(dataset, k, config, threads=threads, forest=None if forests is None else forests[k])
        for k in range(dataset.n_columns)
    )
    scaled = np.column_stack([f.scaled for f in features])
    total = scaled.sum(axis=1)
    scaled.setflags(write=False)
    total.setflags(write=False)
    return AnomalyReport(
        row_ids=dataset.row_ids,
        total=total,
        scaled=scaled,
        feature_names=tuple(dataset.names),
        features=features,
        config=asdict(config),
    )
