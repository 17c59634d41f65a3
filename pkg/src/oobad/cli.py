"""Command-line interface: ``oobad score|eval|filter|bench``.

Settings resolve as command-line flag, then ``--config`` file, then the
built-in default. The config file holds ``key = value`` lines whose keys
mirror the long flags (``min_leaf_frac`` or ``min-leaf-frac``), plus
``kind.<column> = categorical|numerical`` schema overrides. Exit status is
0 on success, 1 for usage or configuration errors and 2 for data errors.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import logging
import os
import sys
import tempfile
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Sequence

from .bench import format_bench, run_bench
from .dataset import DatasetError, SchemaConfig, load_csv
from .evaluation import copy_rows, filter_top_percent, load_labeled_csv, repeated_auc
from .forest import ForestConfig, ModelFormatError, data_fingerprint, load_forests, resolve_threads, save_forests
from .scoring import fit_forests, score_dataset

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_DATA = 2


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    """Fully resolved settings for one command."""

    command: str
    input: str | None = None
    output: str | None = None
    seed: int = 0
    trees: int = 500
    min_leaf_frac: float = 0.04
    mtry: str = "sqrt"
    cat_threshold: float = 0.05
    missing: str = "reject"
    threads: int = 0
    format: str = "csv"
    sorted: bool = False
    label_col: str | None = None
    repeats: int = 10
    pct: float | None = None
    manifest: str | None = None
    save_model: str | None = None
    load_model: str | None = None
    sizes: str = "1000,2000,4000,8000"
    features: int = 5
    timing_repeats: int = 3
    kinds: dict[str, str] = field(default_factory=dict)

    def forest_config(self) -> ForestConfig:
        mtry: str | int = self.mtry
        if mtry not in ("sqrt", "all"):
            try:
                mtry = int(mtry)
            except ValueError:
                raise ConfigError(f"mtry must be 'sqrt', 'all' or an integer, got {self.mtry!r}") from None
        try:
            return ForestConfig(n_trees=self.trees, min_leaf_fraction=self.min_leaf_frac, mtry=mtry, seed=self.seed)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def schema(self) -> SchemaConfig:
        try:
            return SchemaConfig(self.cat_threshold, dict(self.kinds), self.missing)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def describe(self) -> str:
        items = dataclasses.asdict(self)
        kinds = items.pop("kinds")
        keys = _COMMON_KEYS + _COMMAND_KEYS[self.command]
        lines = [f"{k} = {items[k]}" for k in keys if items[k] is not None]
        lines += [f"kind.{k} = {v}" for k, v in sorted(kinds.items())]
        return "\n".join(lines)


_FIELDS = {f.name: f for f in dataclasses.fields(RunConfig)}
_COMMON_KEYS = ["command", "input", "output", "seed", "trees", "min_leaf_frac", "mtry", "cat_threshold", "missing", "threads"]
_COMMAND_KEYS = {
    "score": ["format", "sorted", "label_col", "save_model", "load_model"],
    "eval": ["label_col", "repeats"],
    "filter": ["pct", "manifest", "label_col"],
    "bench": ["sizes", "features", "timing_repeats"],
}


def _convert(key: str, value: str):
    default = _FIELDS[key].default
    try:
        if isinstance(default, bool):
            if value.lower() in ("1", "true", "yes", "on"):
                return True
            if value.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(value)
        if key in ("pct",) or isinstance(default, float):
            return float(value)
        if isinstance(default, int):
            return int(value)
    except ValueError:
        raise ConfigError(f"invalid value {value!r} for {key}") from None
    return value


def read_config_file(path: str | Path) -> dict:
    """Parse a flat ``key = value`` file; ``#`` starts a comment."""
    values: dict = {}
    kinds: dict[str, str] = {}
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from None
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        if key.startswith("kind."):
            kinds[key[5:]] = value
            continue
        key = key.replace("-", "_")
        if key == "min_leaf_fraction":
            key = "min_leaf_frac"
        if key not in _FIELDS or key in ("command", "kinds"):
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
        values[key] = _convert(key, value)
    if kinds:
        values["kinds"] = kinds
    return values


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    shared = argparse.ArgumentParser(add_help=False)
    g = shared.add_argument_group("shared options")
    g.add_argument("--input", "-i", help="input CSV (header row required)")
    g.add_argument("--output", "-o", help="output file")
    g.add_argument("--config", help="key = value config file")
    g.add_argument("--seed", type=int)
    g.add_argument("--trees", type=int, help="trees per forest (default 500)")
    g.add_argument("--min-leaf-frac", dest="min_leaf_frac", type=float, help="minimum leaf size as a fraction of N (default 0.04)")
    g.add_argument("--mtry", help="candidate predictors per split: sqrt, all or an integer (default sqrt)")
    g.add_argument("--cat-threshold", dest="cat_threshold", type=float, help="distinct-value ratio below which integer columns are categorical (default 0.05)")
    g.add_argument("--missing", choices=("reject", "drop_rows"), help="missing-cell policy (default reject)")
    g.add_argument("--kind", action="append", default=None, metavar="COLUMN=KIND", help="force a column categorical or numerical")
    g.add_argument("--threads", type=int, help="worker threads (default: all cores)")
    g.add_argument("--verbose", "-v", action="store_true")

    parser = _Parser(prog="oobad", description="Out-of-bag anomaly detection for mixed-type tables.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("score", parents=[shared], help="score every row of a CSV")
    p.add_argument("--format", choices=("csv", "json"))
    p.add_argument("--sorted", action="store_const", const=True, default=None, help="sort rows by descending score")
    p.add_argument("--label-col", dest="label_col", help="column to leave out of scoring")
    p.add_argument("--save-model", dest="save_model", help="write fitted forests to this file")
    p.add_argument("--load-model", dest="load_model", help="reuse forests from --save-model instead of fitting")

    p = sub.add_parser("eval", parents=[shared], help="mean ROC AUC over repeated runs on a labeled CSV")
    p.add_argument("--label-col", dest="label_col", help="binary label column (1 = anomaly)")
    p.add_argument("--repeats", type=int, help="number of seeded runs (default 10)")

    p = sub.add_parser("filter", parents=[shared], help="drop the highest-scoring rows")
    p.add_argument("--pct", type=float, help="fraction of rows to remove, in [0, 1)")
    p.add_argument("--manifest", help="CSV of removed rows (row_id, score)")
    p.add_argument("--label-col", dest="label_col", help="column to leave out of scoring (still copied)")

    p = sub.add_parser("bench", parents=[shared], help="time scoring on synthetic data of growing size")
    p.add_argument("--sizes", help="comma-separated row counts (default 1000,2000,4000,8000)")
    p.add_argument("--features", type=int, help="number of synthetic columns (default 5)")
    p.add_argument("--timing-repeats", dest="timing_repeats", type=int, help="best-of repeats per size (default 3)")
    return parser


def resolve(args: argparse.Namespace) -> RunConfig:
    values = read_config_file(args.config) if args.config else {}
    for key in _FIELDS:
        v = getattr(args, key, None)
        if v is not None:
            values[key] = v
    kinds = dict(values.pop("kinds", {}))
    for item in args.kind or ():
        if "=" not in item:
            raise ConfigError(f"--kind expects COLUMN=KIND, got {item!r}")
        name, kind = item.split("=", 1)
        kinds[name.strip()] = kind.strip()
    values.pop("command", None)
    return RunConfig(command=args.command, kinds=kinds, **values)


@contextmanager
def atomic_output(path: str | Path) -> Iterator[Path]:
    """Yield a temporary path that replaces ``path`` only if the block succeeds."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent or ".")
    os.close(fd)
    try:
        yield Path(tmp)
        os.replace(tmp, path)
    finally:
        if os.path.exists(tmp):
            os.unlink(tmp)


def _require(value, flag: str):
    if value is None:
        raise ConfigError(f"{flag} is required")
    return value


def _load(cfg: RunConfig):
    path = _require(cfg.input, "--input")
    if cfg.label_col:
        return load_labeled_csv(path, cfg.label_col, cfg.schema())
    return load_csv(path, cfg.schema()), None


def _summary(dataset, report) -> None:
    kinds = ", ".join(f"{c.name}:{c.kind}" for c in dataset.columns)
    print(f"N={dataset.n_rows} K={dataset.n_columns} ({kinds})", file=sys.stderr)
    for f in report.features:
        if f.warnings:
            print(f"  feature {f.name!r}: {len(f.warnings)} row(s) without OOB models", file=sys.stderr)
    print(f"warnings: {len(report.warnings)}", file=sys.stderr)


def _model_meta(dataset) -> dict:
    return {
        "columns": [[c.name, str(c.kind)] for c in dataset.columns],
        "n_rows": dataset.n_rows,
        "fingerprint": data_fingerprint(dataset.matrix),
    }


def cmd_score(cfg: RunConfig) -> int:
    output = _require(cfg.output, "--output")
    config = cfg.forest_config()
    dataset, _ = _load(cfg)
    threads = resolve_threads(cfg.threads)
    forests = None
    if cfg.load_model:
        forests, config, meta = load_forests(cfg.load_model)
        if meta != _model_meta(dataset):
            raise DatasetError(f"{cfg.load_model}: model was fitted on different data")
        print(f"loaded forests from {cfg.load_model} (config {dataclasses.asdict(config)})", file=sys.stderr)
    elif cfg.save_model:
        forests = fit_forests(dataset, config, threads=threads)
    report = score_dataset(dataset, config, threads=threads, forests=forests)
    with atomic_output(output) as tmp:
        with open(tmp, "w", newline="", encoding="utf-8") as fh:
            if cfg.format == "json":
                fh.write(report.to_json(sort=cfg.sorted))
            else:
                report.write_csv(fh, sort=cfg.sorted)
    if cfg.save_model and not cfg.load_model:
        with atomic_output(cfg.save_model) as tmp:
            save_forests(tmp, forests, config, _model_meta(dataset))
    _summary(dataset, report)
    return EXIT_OK


def cmd_eval(cfg: RunConfig) -> int:
    _require(cfg.label_col, "--label-col")
    config = cfg.forest_config()
    if cfg.repeats < 1:
        raise ConfigError("--repeats must be >= 1")
    dataset, labels = _load(cfg)
    mean, aucs = repeated_auc(dataset, labels, config, cfg.repeats, threads=resolve_threads(cfg.threads))
    print(f"N={dataset.n_rows} K={dataset.n_columns} positives={int(labels.sum())}", file=sys.stderr)
    if cfg.output:
        with atomic_output(cfg.output) as tmp:
            with open(tmp, "w", newline="") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(["run", "seed", "auc"])
                for r, auc in enumerate(aucs):
                    w.writerow([r, (config.seed + r) % 2**64, repr(auc)])
    print(f"mean_auc {mean:.6f}")
    for r, auc in enumerate(aucs):
        print(f"run {r} seed {(config.seed + r) % 2**64} auc {auc:.6f}")
    return EXIT_OK


def cmd_filter(cfg: RunConfig) -> int:
    output = _require(cfg.output, "--output")
    pct = _require(cfg.pct, "--pct")
    if not 0.0 <= pct < 1.0:
        raise ConfigError(f"--pct must be in [0, 1), got {pct}")
    config = cfg.forest_config()
    dataset, _ = _load(cfg)
    report = score_dataset(dataset, config, threads=resolve_threads(cfg.threads))
    kept, removed = filter_top_percent(dataset, report, pct)
    manifest = cfg.manifest or str(Path(output).with_suffix("")) + ".removed.csv"
    with atomic_output(output) as out_tmp, atomic_output(manifest) as man_tmp:
        copy_rows(cfg.input, out_tmp, kept.row_ids)
        with open(man_tmp, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["row_id", "score"])
            for i in removed:
                w.writerow([int(dataset.row_ids[i]), repr(float(report.total[i]))])
    _summary(dataset, report)
    print(f"removed {len(removed)} of {dataset.n_rows} rows; manifest {manifest}", file=sys.stderr)
    return EXIT_OK


def cmd_bench(cfg: RunConfig) -> int:
    try:
        sizes = [int(s) for s in cfg.sizes.split(",") if s.strip()]
    except ValueError:
        raise ConfigError(f"--sizes must be comma-separated integers, got {cfg.sizes!r}") from None
    if len(sizes) < 2 or cfg.features < 2:
        raise ConfigError("bench needs at least two sizes and two features")
    result = run_bench(
        sizes,
        cfg.features,
        cfg.forest_config(),
        threads=resolve_threads(cfg.threads),
        repeats=max(1, cfg.timing_repeats),
    )
    text = format_bench(result)
    print(text)
    if cfg.output:
        with atomic_output(cfg.output) as tmp:
            with open(tmp, "w", newline="") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(["n_rows", "seconds"])
                for n, s in zip(result.sizes, result.seconds):
                    w.writerow([n, repr(s)])
    return EXIT_OK


COMMANDS = {"score": cmd_score, "eval": cmd_eval, "filter": cmd_filter, "bench": cmd_bench}


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        cfg = resolve(args)
        print("# resolved config\n" + cfg.describe(), file=sys.stderr)
        return COMMANDS[cfg.command](cfg)
    except ConfigError as exc:
        print(f"oobad: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DatasetError, ModelFormatError, FileNotFoundError) as exc:
        print(f"oobad: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ValueError as exc:
        print(f"oobad: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
