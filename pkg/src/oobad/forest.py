"""Bagged CART ensembles with in-bag bookkeeping and out-of-bag prediction.

One :class:`Forest` models one target column from the remaining columns.
Every tree draws its bootstrap sample and its per-node feature subsets from
a generator seeded by ``(seed, stream, tree index)``, so results do not
depend on how trees are spread over worker threads.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Sequence, Union

import numpy as np

from . import _kernels
from .dataset import Categorical, Column, ceil_fraction

__all__ = [
    "ForestConfig",
    "Tree",
    "Forest",
    "OOBPredictionSet",
    "bootstrap_sample",
    "fit_forest",
    "predict_tree",
    "oob_predictions",
    "save_forests",
    "load_forests",
    "ModelFormatError",
]

MODEL_FORMAT = "oobad-forests"
MODEL_VERSION = 1

Mtry = Union[str, int]


class ModelFormatError(ValueError):
    pass


@dataclass(frozen=True)
class ForestConfig:
    """Ensemble hyper-parameters.

    Attributes:
        n_trees: Trees per forest.
        min_leaf_fraction: Minimum leaf size as a fraction of the row count,
            rounded up.
        mtry: Candidate predictors per split: ``"sqrt"`` (floor of the
            square root of the predictor count, at least 1), ``"all"``, or
            a fixed positive integer.
        seed: Master seed (unsigned 64-bit).
    """

    n_trees: int = 500
    min_leaf_fraction: float = 0.04
    mtry: Mtry = "sqrt"
    seed: int = 0

    def __post_init__(self) -> None:
        if int(self.n_trees) != self.n_trees or self.n_trees < 1:
            raise ValueError(f"n_trees must be a positive integer, got {self.n_trees}")
        if not 0.0 < self.min_leaf_fraction <= 1.0:
            raise ValueError(f"min_leaf_fraction must be in (0, 1], got {self.min_leaf_fraction}")
        if isinstance(self.mtry, str):
            if self.mtry not in ("sqrt", "all"):
                raise ValueError(f"mtry must be 'sqrt', 'all' or a positive integer, got {self.mtry!r}")
        elif isinstance(self.mtry, bool) or not isinstance(self.mtry, (int, np.integer)) or self.mtry < 1:
            raise ValueError(f"mtry must be 'sqrt', 'all' or a positive integer, got {self.mtry!r}")
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError(f"seed must be an unsigned 64-bit integer, got {self.seed}")

    def min_leaf_size(self, n_rows: int) -> int:
        return max(1, ceil_fraction(self.min_leaf_fraction, n_rows))

    def n_candidates(self, n_predictors: int) -> int:
        if self.mtry == "sqrt":
            return max(1, math.isqrt(n_predictors))
        if self.mtry == "all":
            return n_predictors
        if self.mtry > n_predictors:
            raise ValueError(f"mtry={self.mtry} exceeds the {n_predictors} available predictors")
        return int(self.mtry)


def bootstrap_sample(n: int, rng: np.random.Generator) -> np.ndarray:
    """Draw counts of ``n`` uniform draws with replacement from ``range(n)``."""
    if n < 1:
        raise ValueError("n must be >= 1")
    return np.bincount(rng.integers(0, n, size=n), minlength=n)


def tree_rng(seed: int, stream: int, tree: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(int(stream), int(tree))))


@dataclass(frozen=True)
class Tree:
    """A single fitted tree (flat node arrays, ``feature == -1`` at leaves)."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    n_node_samples: np.ndarray
    n_classes: int

    @property
    def is_classifier(self) -> bool:
        return self.n_classes > 0

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    def leaves(self) -> np.ndarray:
        return np.flatnonzero(self.feature == _kernels.LEAF)

    def leaf_prediction(self, node: int) -> float | int:
        if self.is_classifier:
            return int(np.argmax(self.value[node]))
        return float(self.value[node, 0])


def predict_tree(tree: Tree, row: Sequence[float]) -> float | int:
    """Route one predictor vector to a leaf (``<=`` goes left) and return its prediction.

    Classification leaves vote their majority class, lowest code on ties;
    regression leaves return their mean.
    """
    node = 0
    while tree.feature[node] != _kernels.LEAF:
        if row[tree.feature[node]] <= tree.threshold[node]:
            node = tree.left[node]
        else:
            node = tree.right[node]
    return tree.leaf_prediction(node)


@dataclass(frozen=True)
class Forest:
    """T trees for one target plus the (T, N) in-bag count matrix.

    Node arrays of all trees are concatenated; tree ``t`` owns nodes
    ``node_offsets[t]:node_offsets[t + 1]`` and its child indices are local.
    """

    n_classes: int
    node_offsets: np.ndarray
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    n_node_samples: np.ndarray
    in_bag: np.ndarray
    min_leaf: int

    def __post_init__(self) -> None:
        for name in ("node_offsets", "feature", "threshold", "left", "right", "value", "n_node_samples", "in_bag"):
            getattr(self, name).setflags(write=False)

    @property
    def task(self) -> str:
        return "classification" if self.n_classes > 0 else "regression"

    @property
    def n_trees(self) -> int:
        return len(self.node_offsets) - 1

    @property
    def n_rows(self) -> int:
        return self.in_bag.shape[1]

    def tree(self, t: int) -> Tree:
        lo, hi = self.node_offsets[t], self.node_offsets[t + 1]
        return Tree(
            self.feature[lo:hi],
            self.threshold[lo:hi],
            self.left[lo:hi],
            self.right[lo:hi],
            self.value[lo:hi],
            self.n_node_samples[lo:hi],
            self.n_classes,
        )

    def leaf_values(self) -> np.ndarray:
        """Per-node prediction: majority class code or mean target."""
        if self.n_classes > 0:
            return np.argmax(self.value, axis=1).astype(np.float64)
        return self.value[:, 0].copy()


@dataclass(frozen=True)
class OOBPredictionSet:
    """Each row's predictions from the trees that never saw it.

    ``predictions[t, i]`` is meaningful only where ``mask[t, i]`` is true.
    """

    predictions: np.ndarray
    mask: np.ndarray
    n_classes: int

    @property
    def counts(self) -> np.ndarray:
        """Number of out-of-bag trees per row."""
        return self.mask.sum(axis=0)

    def for_row(self, i: int) -> np.ndarray:
        """Row ``i``'s out-of-bag predictions in tree-index order."""
        p = self.predictions[self.mask[:, i], i]
        return p.astype(np.int64) if self.n_classes > 0 else p


def _predictor_matrix(predictors: Sequence[Column]) -> np.ndarray:
    return np.ascontiguousarray(np.column_stack([c.data.astype(np.float64) for c in predictors]))


def _fit_one(X, y, n_classes, min_leaf, mtry, seed, stream, t):
    n = X.shape[0]
    rng = tree_rng(seed, stream, t)
    counts = bootstrap_sample(n, rng)
    sample = np.repeat(np.arange(n, dtype=np.int64), counts)
    draws = rng.random((_kernels.max_nodes(n, min_leaf), mtry))
    return counts, _kernels.build_tree(X, y, sample, n_classes, min_leaf, mtry, draws)


def resolve_threads(threads: int | None) -> int:
    if threads is None or threads <= 0:
        return os.cpu_count() or 1
    return threads


def fit_forest(
    predictors: Sequence[Column],
    target: Column,
    config: ForestConfig,
    *,
    stream: int = 0,
    threads: int | None = 1,
) -> Forest:
    """Fit ``config.n_trees`` trees predicting ``target`` from ``predictors``.

    Categorical targets give Gini classification trees; numerical targets give
    variance-reduction regression trees. ``stream`` separates the random
    streams of forests sharing one seed (the scorer passes the target's
    column index). The result is identical for any ``threads``.
    """
    if not predictors:
        raise ValueError("at least one predictor column is required")
    n = len(target)
    if any(len(c) != n for c in predictors):
        raise ValueError("predictor and target columns must have the same length")
    min_leaf = config.min_leaf_size(n)
    if n < min_leaf:
        raise ValueError(f"{n} rows is fewer than the minimum leaf size {min_leaf}")
    X = _predictor_matrix(predictors)
    y = np.ascontiguousarray(target.data, dtype=np.float64)
    n_classes = target.kind.cardinality if isinstance(target.kind, Categorical) else 0
    mtry = config.n_candidates(X.shape[1])

    def work(t):
        return _fit_one(X, y, n_classes, min_leaf, mtry, config.seed, stream, t)

    threads = resolve_threads(threads)
    if threads == 1:
        results = [work(t) for t in range(config.n_trees)]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(work, range(config.n_trees)))

    in_bag = np.stack([r[0] for r in results])
    in_bag = in_bag.astype(np.min_scalar_type(int(in_bag.max())))
    parts = list(zip(*(r[1] for r in results)))
    sizes = np.array([len(f) for f in parts[0]], dtype=np.int64)
    offsets = np.concatenate([[0], np.cumsum(sizes)]).astype(np.int64)
    return Forest(
        n_classes=n_classes,
        node_offsets=offsets,
        feature=np.concatenate(parts[0]),
        threshold=np.concatenate(parts[1]),
        left=np.concatenate(parts[2]),
        right=np.concatenate(parts[3]),
        value=np.concatenate(parts[4]),
        n_node_samples=np.concatenate(parts[5]),
        in_bag=in_bag,
        min_leaf=min_leaf,
    )


def oob_predictions(forest: Forest, predictors: Sequence[Column]) -> OOBPredictionSet:
    """Collect, for every row, the predictions of the trees whose bootstrap sample excluded it."""
    X = _predictor_matrix(predictors)
    if X.shape[0] != forest.n_rows:
        raise ValueError(f"forest was fitted on {forest.n_rows} rows, got {X.shape[0]}")
    preds = _kernels.oob_predict(
        forest.node_offsets,
        forest.feature,
        forest.threshold,
        forest.left,
        forest.right,
        forest.leaf_values(),
        X,
        forest.in_bag,
    )
    return OOBPredictionSet(preds, forest.in_bag == 0, forest.n_classes)


_ARRAYS = ("node_offsets", "feature", "threshold", "left", "right", "value", "n_node_samples", "in_bag")


def data_fingerprint(matrix: np.ndarray) -> str:
    return hashlib.sha256(np.ascontiguousarray(matrix, dtype=np.float64).tobytes()).hexdigest()


def save_forests(path: str | Path, forests: Sequence[Forest], config: ForestConfig, meta: dict) -> None:
    """Write forests to a versioned ``.npz`` archive (arrays stored bit-exact).

    ``meta`` is stored as JSON next to the format tag, the config and the
    per-forest class counts; callers use it to check the archive matches
    their data.
    """
    header = {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "config": asdict(config),
        "forests": [{"n_classes": f.n_classes, "min_leaf": f.min_leaf} for f in forests],
        "meta": meta,
    }
    arrays = {"header": np.frombuffer(json.dumps(header, sort_keys=True).encode(), dtype=np.uint8)}
    for k, f in enumerate(forests):
        for name in _ARRAYS:
            arrays[f"{k}/{name}"] = getattr(f, name)
    with open(path, "wb") as fh:
        np.savez_compressed(fh, **arrays)


def load_forests(path: str | Path) -> tuple[list[Forest], ForestConfig, dict]:
    try:
        archive = np.load(path, allow_pickle=False)
    except (OSError, ValueError) as exc:
        raise ModelFormatError(f"{path}: not a model archive ({exc})") from exc
    with archive:
        if "header" not in archive.files:
            raise ModelFormatError(f"{path}: missing header")
        header = json.loads(archive["header"].tobytes().decode())
        if header.get("format") != MODEL_FORMAT:
            raise ModelFormatError(f"{path}: unknown format {header.get('format')!r}")
        if header.get("version") != MODEL_VERSION:
            raise ModelFormatError(f"{path}: unsupported version {header.get('version')!r}")
        forests = []
        for k, info in enumerate(header["forests"]):
            forests.append(
                Forest(
                    n_classes=int(info["n_classes"]),
                    min_leaf=int(info["min_leaf"]),
                    **{name: archive[f"{k}/{name}"] for name in _ARRAYS},
                )
            )
    return forests, ForestConfig(**header["config"]), header["meta"]
