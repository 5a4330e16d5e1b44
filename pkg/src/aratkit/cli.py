"""Command-line interface for the full pipeline.

Subcommands: validate, synth, transform, fit, cv, grid, truncate-cv, report.
Every run that writes outputs also writes a run_meta.json (seed, config,
versions, timings) next to them, and all files are written atomically
(temp + rename). Exit codes: 0 success, 2 usage error, 3 data validation
error, 4 runtime failure. The RA_THREADS environment variable caps worker
counts (numba threads and grid workers). All randomness descends from the
single --seed flag (default 42).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import __version__, rocket
from .data_model import ChannelSet, Dataset, LabelTaxonomy, validate_sequence
from .errors import AratkitError, ConfigError, DataError
from .evaluation import (
    CvReport,
    grid_search,
    grid_to_csv_text,
    run_cv,
)
from .ingest import balance_junk, load_dataset, truncate_longest, write_dataset
from .pipeline import fit_pipeline, save_pipeline
from .preprocess import (
    PreprocessConfig,
    _CONFIG_KEYS,
    _parse_config_value,
    apply_config,
    enumerate_grid,
)
from .synth import SynthSpec, generate

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_RUNTIME = 4


def resolve_workers(default: int = 1) -> int:
    """Worker cap from RA_THREADS; falls back to the given default."""
    raw = os.environ.get("RA_THREADS", "").strip()
    if not raw:
        return default
    try:
        value = int(raw)
    except ValueError:
        raise ConfigError(f"RA_THREADS must be an integer, got {raw!r}") from None
    if value < 1:
        raise ConfigError(f"RA_THREADS must be >= 1, got {value}")
    return value


def _apply_thread_cap() -> int:
    workers = resolve_workers(default=0)
    if workers:
        import numba

        numba.set_num_threads(min(workers, numba.config.NUMBA_NUM_THREADS))
    return workers


def write_text_atomic(path: Path, text: str) -> None:
    tmp = path.with_name(f".{path.name}.tmp{os.getpid()}")
    tmp.write_text(text)
    os.replace(tmp, path)


def write_json_atomic(path: Path, payload: dict) -> None:
    write_text_atomic(path, json.dumps(payload, sort_keys=True, indent=2) + "\n")


def _write_run_meta(out_dir: Path, args: argparse.Namespace,
                    cfg: Optional[PreprocessConfig], started: float,
                    extra: Optional[dict] = None) -> None:
    import numba
    import scipy

    meta = {
        "command": args.command,
        "argv": sys.argv[1:],
        "seed": getattr(args, "seed", None),
        "config": cfg.to_text() if cfg else None,
        "channels": getattr(args, "channels", None),
        "versions": {
            "aratkit": __version__,
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "numba": numba.__version__,
        },
        "timing": {"total_s": time.perf_counter() - started},
    }
    if extra:
        meta.update(extra)
    write_json_atomic(out_dir / "run_meta.json", meta)


def _load_taxonomy(args: argparse.Namespace) -> LabelTaxonomy:
    if getattr(args, "taxonomy", None):
        return LabelTaxonomy.from_csv(args.taxonomy)
    return LabelTaxonomy.default()


def _load_config(args: argparse.Namespace) -> PreprocessConfig:
    """Config file plus per-key flag overrides (flags win)."""
    if getattr(args, "config", None):
        cfg = PreprocessConfig.from_file(args.config)
    else:
        cfg = PreprocessConfig()
    overrides = {}
    for key in _CONFIG_KEYS:
        raw = getattr(args, key, None)
        if raw is not None:
            overrides[key] = _parse_config_value(key, raw, 0)
    if overrides:
        values = {key: getattr(cfg, key) for key in _CONFIG_KEYS}
        values.update(overrides)
        cfg = PreprocessConfig(**values)
    return cfg


def _load_input_dataset(args: argparse.Namespace) -> Dataset:
    ds = load_dataset(args.manifest, _load_taxonomy(args))
    if getattr(args, "balance_junk", False):
        ds = balance_junk(ds, args.seed)
    return ds


def _channel_set(args: argparse.Namespace) -> ChannelSet:
    return ChannelSet.parse(args.channels)


def _out_dir(args: argparse.Namespace) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_cv_outputs(out: Path, report: CvReport, prefix: str = "") -> None:
    write_text_atomic(out / f"{prefix}report.json", report.to_json())
    write_text_atomic(out / f"{prefix}item_cm.csv", report.item_cm.to_csv_text())
    write_text_atomic(out / f"{prefix}domain_cm.csv", report.domain_cm.to_csv_text())
    write_text_atomic(out / f"{prefix}item_cm.txt", report.item_cm.render_text())
    write_text_atomic(out / f"{prefix}domain_cm.txt", report.domain_cm.render_text())


# ---------------------------------------------------------------------------
# Subcommands


def cmd_validate(args: argparse.Namespace) -> int:
    ds = load_dataset(args.manifest, _load_taxonomy(args))
    problems = []
    for seq in ds:
        for violation in validate_sequence(seq):
            problems.append(f"{seq.id}: {violation}")
    if problems:
        raise DataError("; ".join(problems))
    print(f"OK: {len(ds)} sequences, {len(ds.channels)} channels, "
          f"labels: {len(set(s.label for s in ds))}")
    return EXIT_OK


def cmd_synth(args: argparse.Namespace) -> int:
    started = time.perf_counter()
    spec = SynthSpec(
        num_classes=args.classes,
        sequences_per_class=args.per_class,
        length_median=args.length_median,
        length_sigma=args.length_sigma,
        noise_floor=args.noise_floor,
        junk_count=args.junk,
        hard_mode=args.hard,
        seed=args.seed,
    )
    ds = generate(spec)
    out = _out_dir(args)
    manifest = write_dataset(ds, out)
    _write_run_meta(out, args, None, started,
                    {"sequences": len(ds), "manifest": str(manifest)})
    print(f"wrote {len(ds)} sequences to {manifest}")
    return EXIT_OK


def cmd_transform(args: argparse.Namespace) -> int:
    started = time.perf_counter()
    ds = _load_input_dataset(args)
    cfg = _load_config(args)
    channels = _channel_set(args)
    out = _out_dir(args)
    if args.model:
        model = rocket.RocketModel.load(args.model)
        prep = apply_config(ds, cfg, "eval", args.seed, channels=channels,
                            target_len=model.fitted_length)
    else:
        prep = apply_config(ds, cfg, "train", args.seed, channels=channels)
        model = rocket.fit(prep.tensor, target_features=args.features,
                           seed=args.seed)
        write_text_atomic(out / "rocket_model.json", model.canonical_json())
    features = rocket.transform(model, prep.tensor)
    np.savez(out / "features.npz", ids=np.array(prep.ids),
             labels=np.array(prep.labels), features=features)
    _write_run_meta(out, args, cfg, started,
                    {"feature_shape": list(features.shape),
                     "rocket_sha256": model.sha256()})
    print(f"wrote features {features.shape} to {out / 'features.npz'}")
    return EXIT_OK


def cmd_fit(args: argparse.Namespace) -> int:
    started = time.perf_counter()
    ds = _load_input_dataset(args)
    cfg = _load_config(args)
    out = _out_dir(args)
    pipe = fit_pipeline(ds, cfg, _channel_set(args),
                        feature_count=args.features, seed=args.seed)
    save_pipeline(pipe, out / "pipeline.json")
    _write_run_meta(out, args, cfg, started,
                    {"fitted_length": pipe.fitted_length,
                     "chosen_lambda": pipe.ridge.chosen_lambda,
                     "rocket_sha256": pipe.rocket_model.sha256()})
    print(f"wrote pipeline to {out / 'pipeline.json'}")
    return EXIT_OK


def cmd_cv(args: argparse.Namespace) -> int:
    started = time.perf_counter()
    ds = _load_input_dataset(args)
    cfg = _load_config(args)
    out = _out_dir(args)
    report = run_cv(ds, cfg, _channel_set(args), k=args.folds, seed=args.seed,
                    feature_count=args.features)
    _write_cv_outputs(out, report)
    _write_run_meta(out, args, cfg, started,
                    {"mean_accuracy": report.mean_accuracy,
                     "domain_accuracy": report.domain_accuracy,
                     "sequences": len(ds)})
    print(f"mean accuracy {report.mean_accuracy:.4f} "
          f"(domain {report.domain_accuracy:.4f}) over {args.folds} folds")
    return EXIT_OK


def _read_configs_file(path: str | Path) -> list[PreprocessConfig]:
    """Blank-line-separated blocks of key=value lines, one config each."""
    blocks = Path(path).read_text().split("\n\n")
    configs = [PreprocessConfig.from_text(block)
               for block in blocks if block.strip()]
    if not configs:
        raise DataError(f"{path}: no configurations found")
    return configs


def cmd_grid(args: argparse.Namespace) -> int:
    started = time.perf_counter()
    ds = _load_input_dataset(args)
    if args.keep_fraction is not None:
        ds = truncate_longest(ds, args.keep_fraction)
    configs = (_read_configs_file(args.configs) if args.configs
               else enumerate_grid())
    out = _out_dir(args)
    cells = grid_search(ds, configs, _channel_set(args), k=args.folds,
                        seed=args.seed, feature_count=args.features,
                        workers=resolve_workers(1))
    write_text_atomic(out / "grid.csv", grid_to_csv_text(cells))
    payload = {
        "cells": [{
            "rank": rank + 1,
            "config": cell.config.to_text(),
            "mean_accuracy": cell.mean_accuracy,
            "error": cell.error,
            "runtime_s": cell.runtime,
        } for rank, cell in enumerate(cells)],
    }
    write_json_atomic(out / "grid.json", payload)
    _write_run_meta(out, args, None, started,
                    {"configs": len(configs), "sequences": len(ds),
                     "keep_fraction": args.keep_fraction})
    best = cells[0]
    if best.report is None:
        raise AratkitError("every grid configuration failed")
    print(f"best config mean accuracy {best.report.mean_accuracy:.4f}; "
          f"table: {out / 'grid.csv'}")
    return EXIT_OK


def cmd_truncate_cv(args: argparse.Namespace) -> int:
    started = time.perf_counter()
    ds = _load_input_dataset(args)
    cfg = _load_config(args)
    out = _out_dir(args)
    channels = _channel_set(args)

    t_full = time.perf_counter()
    full = run_cv(ds, cfg, channels, k=args.folds, seed=args.seed,
                  feature_count=args.features)
    full_time = time.perf_counter() - t_full

    truncated_ds = truncate_longest(ds, args.keep_fraction)
    t_trunc = time.perf_counter()
    truncated = run_cv(truncated_ds, cfg, channels, k=args.folds,
                       seed=args.seed, feature_count=args.features)
    trunc_time = time.perf_counter() - t_trunc

    _write_cv_outputs(out, full, prefix="full_")
    _write_cv_outputs(out, truncated, prefix="truncated_")
    delta = {
        "keep_fraction": args.keep_fraction,
        "full": {
            "sequences": len(ds),
            "max_length": max(s.num_samples for s in ds),
            "item_accuracy": full.item_accuracy,
            "domain_accuracy": full.domain_accuracy,
            "mean_accuracy": full.mean_accuracy,
            "runtime_s": full_time,
        },
        "truncated": {
            "sequences": len(truncated_ds),
            "max_length": max(s.num_samples for s in truncated_ds),
            "item_accuracy": truncated.item_accuracy,
            "domain_accuracy": truncated.domain_accuracy,
            "mean_accuracy": truncated.mean_accuracy,
            "runtime_s": trunc_time,
        },
        "delta": {
            "item_accuracy": truncated.item_accuracy - full.item_accuracy,
            "domain_accuracy": truncated.domain_accuracy - full.domain_accuracy,
            "max_length": (max(s.num_samples for s in truncated_ds)
                           - max(s.num_samples for s in ds)),
            "runtime_s": trunc_time - full_time,
        },
    }
    write_json_atomic(out / "delta.json", delta)
    _write_run_meta(out, args, cfg, started, {"keep_fraction": args.keep_fraction})
    print(f"full: item {full.item_accuracy:.4f} domain {full.domain_accuracy:.4f} "
          f"({full_time:.1f}s); truncated: item {truncated.item_accuracy:.4f} "
          f"domain {truncated.domain_accuracy:.4f} ({trunc_time:.1f}s)")
    return EXIT_OK


def cmd_report(args: argparse.Namespace) -> int:
    started = time.perf_counter()
    report = CvReport.load(args.report)
    item = report.item_cm.render_text(normalize=args.normalize)
    domain = report.domain_cm.render_text(normalize=args.normalize)
    if args.out:
        out = _out_dir(args)
        write_text_atomic(out / "item_cm.txt", item)
        write_text_atomic(out / "domain_cm.txt", domain)
        write_text_atomic(out / "item_cm.csv", report.item_cm.to_csv_text())
        write_text_atomic(out / "domain_cm.csv", report.domain_cm.to_csv_text())
        _write_run_meta(out, args, None, started, {"source": str(args.report)})
        print(f"wrote rendered tables to {out}")
    else:
        print("item-level confusion matrix:")
        print(item)
        print("domain-level confusion matrix:")
        print(domain)
    return EXIT_OK


# ---------------------------------------------------------------------------
# Parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="aratkit",
        description="MiniROCKET classification pipeline for wrist-IMU "
                    "movement-item recordings")
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=42,
                        help="master seed (default 42)")

    data = argparse.ArgumentParser(add_help=False)
    data.add_argument("--manifest", required=True, help="manifest CSV path")
    data.add_argument("--taxonomy", default=None,
                      help="taxonomy CSV (default: built-in)")

    run = argparse.ArgumentParser(add_help=False)
    run.add_argument("--channels", default="all",
                     choices=[c.value for c in ChannelSet],
                     help="input channel set (default all)")
    run.add_argument("--features", type=int, default=rocket.DEFAULT_NUM_FEATURES,
                     help=f"transform feature count "
                          f"(default {rocket.DEFAULT_NUM_FEATURES})")
    run.add_argument("--config", default=None,
                     help="preprocessing config file (key=value lines)")
    run.add_argument("--balance-junk", action="store_true",
                     help="cap junk at the largest per-item count before running")
    for key in _CONFIG_KEYS:
        run.add_argument(f"--{key}", default=None, metavar="VALUE",
                         help=f"override config key {key}")

    folds = argparse.ArgumentParser(add_help=False)
    folds.add_argument("--folds", type=int, default=10,
                       help="cross-validation folds (default 10)")

    p = sub.add_parser("validate", parents=[common, data],
                       help="load a dataset and report every invariant violation")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("synth", parents=[common],
                       help="generate a synthetic dataset in the ingest layout")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--classes", type=int, default=5)
    p.add_argument("--per-class", type=int, default=40)
    p.add_argument("--length-median", type=int, default=150)
    p.add_argument("--length-sigma", type=float, default=0.35)
    p.add_argument("--noise-floor", type=float, default=0.0)
    p.add_argument("--junk", type=int, default=0,
                   help="number of junk sequences (default 0)")
    p.add_argument("--hard", action="store_true",
                   help="shrink inter-class frequency gaps")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("transform", parents=[common, data, run],
                       help="fit (or load) a transform and write PPV features")
    p.add_argument("--out", required=True)
    p.add_argument("--model", default=None,
                   help="reuse an existing rocket_model.json")
    p.set_defaults(func=cmd_transform)

    p = sub.add_parser("fit", parents=[common, data, run],
                       help="fit the full pipeline on the whole dataset")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("cv", parents=[common, data, run, folds],
                       help="seeded k-fold cross-validation with reports")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_cv)

    p = sub.add_parser("grid", parents=[common, data, run, folds],
                       help="preprocessing grid search, ranked table output")
    p.add_argument("--out", required=True)
    p.add_argument("--configs", default=None,
                   help="file of blank-line-separated config blocks "
                        "(default: full grid)")
    p.add_argument("--keep-fraction", type=float, default=None,
                   help="truncate to this fraction of shortest sequences first")
    p.set_defaults(func=cmd_grid)

    p = sub.add_parser("truncate-cv", parents=[common, data, run, folds],
                       help="paired full vs length-truncated cross-validation")
    p.add_argument("--out", required=True)
    p.add_argument("--keep-fraction", type=float, default=0.75)
    p.set_defaults(func=cmd_truncate_cv)

    p = sub.add_parser("report", parents=[common],
                       help="render confusion matrices from a report file")
    p.add_argument("--report", required=True, help="report.json path")
    p.add_argument("--out", default=None)
    p.add_argument("--normalize", action="store_true",
                   help="row-normalized percentages")
    p.set_defaults(func=cmd_report)
    return parser


def _error_line(kind: str, exc: BaseException) -> str:
    msg = " ".join(str(exc).split())
    return f"aratkit: error kind={kind} msg={msg!r}"


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        _apply_thread_cap()
        return args.func(args)
    except DataError as exc:
        print(_error_line("data", exc), file=sys.stderr)
        return EXIT_DATA
    except AratkitError as exc:
        print(_error_line("runtime", exc), file=sys.stderr)
        return EXIT_RUNTIME
    except Exception as exc:  # unexpected failure, still a single line
        print(_error_line("runtime", exc), file=sys.stderr)
        return EXIT_RUNTIME


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
