import os
from pathlib import Path

import numpy as np
import pytest

from oobad.dataset import Categorical, Column, Dataset, Numerical

ROOT = Path(__file__).resolve().parent.parent

# (criterion, passed, detail) lines collected by the acceptance suite
ACCEPTANCE_RESULTS: list[tuple[str, bool, str]] = []


def benchmark_path(name: str) -> Path:
    """Locate a benchmark CSV in $OOBAD_BENCHMARK_DIR or benchmarks/data."""
    env = os.environ.get("OOBAD_BENCHMARK_DIR")
    if env and (Path(env) / name).is_file():
        return Path(env) / name
    return ROOT / "benchmarks" / "data" / name


def categorical(name, codes, cardinality=None):
    codes = np.asarray(codes, dtype=np.int64)
    c = cardinality or int(codes.max()) + 1
    return Column(name, Categorical(c), codes, tuple(f"{name}{j}" for j in range(c)))


def numerical(name, values):
    return Column(name, Numerical(), np.asarray(values, dtype=np.float64))


def copy_dataset(n=200, seed=0):
    """Two categorical columns, the second an exact copy of the first (balanced classes)."""
    rng = np.random.default_rng(seed)
    codes = rng.permutation(np.arange(n) % 2)
    return Dataset((categorical("a", codes, 2), categorical("b", codes, 2)))


@pytest.fixture
def write_csv(tmp_path):
    def _write(text, name="data.csv"):
        p = tmp_path / name
        p.write_text(text, encoding="utf-8", newline="")
        return p

    return _write


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for name, ok, detail in ACCEPTANCE_RESULTS:
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")
