#!/usr/bin/env python3
"""Rebuild the ODDS-style benchmark CSVs in benchmarks/data/ from public copies on PyPI.

The ODDS ``.mat`` files are not reachable from every environment, so the
three datasets are reconstructed from the UCI originals following the ODDS
construction:

* glass: all 214 rows, 9 measurements (Id dropped); type 6 (tableware) is
  the outlier class. Source: ``imbalanced-databases`` wheel (UCI copy).
* pima: all 768 rows, 8 measurements; diabetic is the outlier class.
  Source: ``keel-ds`` wheel (KEEL copy of the UCI file, rows shuffled).
* ionosphere: all 351 rows, 33 attributes (the all-zero second attribute
  dropped); "bad" returns are the outlier class. Source: ``orange3`` wheel.

vertebral is a random 30-row subsample of the UCI data with no public
copy on PyPI; place ODDS-converted CSVs in benchmarks/data/ (or point
OOBAD_BENCHMARK_DIR at them) to run that acceptance check.

Every output has a final ``label`` column (1 = outlier).

Usage: python scripts/build_benchmarks.py [--out benchmarks/data]
"""

from __future__ import annotations

import argparse
import csv
import glob
import subprocess
import sys
import tempfile
import zipfile
from pathlib import Path

WHEELS = {
    "imbalanced-databases==0.1.1": [],
    "keel-ds==0.2.5": [],
    "orange3==3.40.0": [
        "--only-binary", ":all:", "--platform", "manylinux_2_28_x86_64", "--python-version", "3.12",
    ],
}


def fetch(tmp: Path) -> dict[str, zipfile.ZipFile]:
    out = {}
    for req, extra in WHEELS.items():
        dest = tmp / req.split("==")[0]
        subprocess.run(
            [sys.executable, "-m", "pip", "download", "--no-deps", "-q", "-d", str(dest), *extra, req],
            check=True,
        )
        out[req.split("==")[0]] = zipfile.ZipFile(glob.glob(str(dest / "*.whl"))[0])
    return out


def write(path: Path, header: list[str], rows: list[list[str]]) -> None:
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
    print(f"{path}: {len(rows)} rows, {sum(r[-1] == '1' for r in rows)} outliers")


def glass(z: zipfile.ZipFile) -> tuple[list[str], list[list[str]]]:
    text = z.read("imbalanced_databases/data/glass/glass.data.txt").decode()
    header = ["RI", "Na", "Mg", "Al", "Si", "K", "Ca", "Ba", "Fe", "label"]
    rows = []
    for rec in csv.reader(text.splitlines()):
        if rec:
            rows.append(rec[1:10] + ["1" if rec[10] == "6" else "0"])
    return header, rows


def pima(z: zipfile.ZipFile) -> tuple[list[str], list[list[str]]]:
    text = z.read("keel_ds/data/balanced/raw/pima.dat").decode()
    header = ["preg", "plas", "pres", "skin", "insu", "mass", "pedi", "age", "label"]
    rows = []
    for line in text.splitlines():
        if not line.strip() or line.lstrip().startswith("@"):
            continue
        rec = [c.strip() for c in line.split(",")]
        rows.append(rec[:8] + ["1" if rec[8] == "tested_positive" else "0"])
    return header, rows


def ionosphere(z: zipfile.ZipFile) -> tuple[list[str], list[list[str]]]:
    text = z.read("Orange/tests/datasets/ionosphere.tab").decode()
    lines = text.splitlines()
    names = lines[0].split("\t")
    rows = []
    for line in lines[3:]:
        if not line.strip():
            continue
        rec = line.split("\t")
        rows.append([rec[0]] + rec[2:34] + ["1" if rec[34] == "b" else "0"])
    header = [names[0]] + names[2:34] + ["label"]
    return header, rows


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default=str(Path(__file__).resolve().parent.parent / "benchmarks" / "data"))
    args = ap.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with tempfile.TemporaryDirectory() as tmp:
        wheels = fetch(Path(tmp))
        write(out / "glass.csv", *glass(wheels["imbalanced-databases"]))
        write(out / "pima.csv", *pima(wheels["keel-ds"]))
        write(out / "ionosphere.csv", *ionosphere(wheels["orange3"]))


if __name__ == "__main__":
    main()
