"""Wall-time scaling of the full scoring pipeline on synthetic data."""

from __future__ import annotations

import dataclasses
import math
import time
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .forest import ForestConfig
from .scoring import score_dataset
from .synthetic import correlated_numeric


@dataclass(frozen=True)
class BenchResult:
    sizes: tuple[int, ...]
    seconds: tuple[float, ...]
    n_features: int
    n_trees: int
    tree_doubling: float | None = None

    @property
    def doubling_factors(self) -> list[float]:
        """Time ratio between consecutive sizes, rescaled to an exact doubling of N."""
        out = []
        for (n0, t0), (n1, t1) in zip(zip(self.sizes, self.seconds), zip(self.sizes[1:], self.seconds[1:])):
            out.append((t1 / t0) ** (math.log(2) / math.log(n1 / n0)))
        return out

    @property
    def mean_doubling_factor(self) -> float:
        """Geometric mean of :attr:`doubling_factors`."""
        return float(np.exp(np.mean(np.log(self.doubling_factors))))

    @property
    def exponent(self) -> float:
        """Least-squares slope of log(time) against log(N log N); 1 means N log N growth."""
        x = np.log([n * math.log(n) for n in self.sizes])
        y = np.log(self.seconds)
        return float(np.polyfit(x, y, 1)[0])


def _time(n_rows: int, n_features: int, config: ForestConfig, threads: int | None, repeats: int) -> float:
    data = correlated_numeric(n_rows, n_features, seed=n_rows)
    best = math.inf
    for _ in range(repeats):
        start = time.perf_counter()
        score_dataset(data, config, threads=threads)
        best = min(best, time.perf_counter() - start)
    return best


def run_bench(
    sizes: Sequence[int] = (1000, 2000, 4000, 8000),
    n_features: int = 5,
    config: ForestConfig = ForestConfig(),
    *,
    threads: int | None = 1,
    repeats: int = 3,
    tree_doubling: bool = True,
) -> BenchResult:
    """Time :func:`score_dataset` at each size (best of ``repeats``).

    With ``tree_doubling`` the smallest size is also timed with twice the
    trees, to check that cost is linear in the ensemble size.
    """
    if len(sizes) < 2:
        raise ValueError("need at least two sizes")
    # compile / load the kernels outside the timed region
    score_dataset(correlated_numeric(50, 2), dataclasses.replace(config, n_trees=20), threads=1)
    seconds = tuple(_time(n, n_features, config, threads, repeats) for n in sizes)
    ratio = None
    if tree_doubling:
        ratio = tree_doubling_ratio(sizes[0], n_features, config, threads=threads, repeats=repeats)
    return BenchResult(tuple(sizes), seconds, n_features, config.n_trees, ratio)


def tree_doubling_ratio(
    n_rows: int, n_features: int, config: ForestConfig, *, threads: int | None = 1, repeats: int = 3
) -> float:
    """Best-of time with ``2 * n_trees`` over best-of time with ``n_trees``.

    The two settings are timed alternately so that slow drift in machine
    load affects both sides alike.
    """
    doubled = dataclasses.replace(config, n_trees=2 * config.n_trees)
    single = double = math.inf
    for _ in range(repeats):
        single = min(single, _time(n_rows, n_features, config, threads, 1))
        double = min(double, _time(n_rows, n_features, doubled, threads, 1))
    return double / single


def format_bench(result: BenchResult) -> str:
    lines = [f"K={result.n_features} T={result.n_trees}", f"{'N':>8} {'seconds':>10} {'x prev':>8}"]
    prev = None
    for n, s in zip(result.sizes, result.seconds):
        ratio = "" if prev is None else f"{s / prev:8.2f}"
        lines.append(f"{n:>8} {s:>10.3f} {ratio:>8}")
        prev = s
    lines.append("doubling factors: " + ", ".join(f"{d:.2f}" for d in result.doubling_factors))
    lines.append(f"mean doubling factor: {result.mean_doubling_factor:.2f}")
    lines.append(f"growth exponent vs N log N: {result.exponent:.3f}")
    if result.tree_doubling is not None:
        lines.append(f"time ratio for 2T vs T at N={result.sizes[0]}: {result.tree_doubling:.2f}")
    return "\n".join(lines)
