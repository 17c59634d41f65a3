"""Synthetic datasets for benchmarking and for planted-anomaly checks."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataset import Categorical, Column, Dataset, Numerical


def correlated_numeric(n_rows: int, n_features: int, seed: int = 0) -> Dataset:
    """Numerical columns that are noisy linear functions of one shared latent factor."""
    rng = np.random.default_rng(seed)
    z = rng.normal(size=n_rows)
    columns = []
    for j in range(n_features):
        slope = 1.0 + 0.5 * j
        columns.append(Column(f"x{j}", Numerical(), slope * z + 0.3 * rng.normal(size=n_rows)))
    return Dataset(tuple(columns))


@dataclass(frozen=True)
class PlantedDataset:
    dataset: Dataset
    mislabeled: np.ndarray
    outliers: np.ndarray

    @property
    def planted(self) -> np.ndarray:
        return np.concatenate([self.mislabeled, self.outliers])


def planted_mixed(
    n_rows: int = 500,
    n_mislabeled: int = 10,
    n_outliers: int = 10,
    outlier_factor: float = 10.0,
    seed: int = 0,
) -> PlantedDataset:
    """Five correlated columns (2 categorical, 3 numerical) with planted anomalies.

    Rows belong to one of three well-separated groups; both categorical
    columns encode the group and the numerical columns are group offset plus
    a shared continuous factor plus noise. Mislabels move a categorical cell
    to another group's label; outliers multiply a numerical cell by
    ``outlier_factor``. Planted rows are distinct.
    """
    rng = np.random.default_rng(seed)
    group = rng.integers(0, 3, size=n_rows)
    z = rng.normal(size=n_rows)
    shape = np.array(["circle", "square", "triangle"])[group]
    size = group.copy()
    nums = [
        10.0 + 4.0 * group + z + 0.2 * rng.normal(size=n_rows),
        20.0 + 6.0 * group + 2.0 * z + 0.3 * rng.normal(size=n_rows),
        5.0 + 3.0 * group - 0.5 * z + 0.2 * rng.normal(size=n_rows),
    ]

    rows = rng.choice(n_rows, size=n_mislabeled + n_outliers, replace=False)
    mislabeled, outliers = rows[:n_mislabeled], rows[n_mislabeled:]
    for j, i in enumerate(mislabeled):
        wrong = (group[i] + 1 + rng.integers(0, 2)) % 3
        if j % 2 == 0:
            shape[i] = ["circle", "square", "triangle"][wrong]
        else:
            size[i] = wrong
    for j, i in enumerate(outliers):
        nums[j % 3][i] *= outlier_factor

    shape_codes, shape_dict = _encode(list(shape))
    size_codes, size_dict = _encode([str(s) for s in size])
    columns = (
        Column("shape", Categorical(len(shape_dict)), shape_codes, shape_dict),
        Column("size", Categorical(len(size_dict)), size_codes, size_dict),
        *(Column(f"m{j}", Numerical(), v) for j, v in enumerate(nums)),
    )
    return PlantedDataset(Dataset(columns), np.sort(mislabeled), np.sort(outliers))


def _encode(cells: list[str]) -> tuple[np.ndarray, tuple[str, ...]]:
    lookup: dict[str, int] = {}
    codes = np.array([lookup.setdefault(c, len(lookup)) for c in cells], dtype=np.int64)
    return codes, tuple(lookup)
