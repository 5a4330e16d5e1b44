"""Seeded k-fold cross-validation, confusion matrices, domain aggregation,
and the preprocessing grid search.

The protocol is a plain shuffle-then-contiguous-split (no stratification):
ids are permuted with a seeded generator and cut into k folds whose sizes
differ by at most one. Each fold trains a full pipeline on the other k-1
folds; validation predictions are pooled across folds for the aggregated
confusion matrices. Everything is a pure function of (dataset, config,
seed), so reports are bit-reproducible.
"""

from __future__ import annotations

import csv
import io
import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import rocket
from .data_model import (
    ChannelSet,
    Dataset,
    Domain,
    JUNK_LABEL,
    LabelTaxonomy,
    MOVEMENT_DOMAINS,
)
from .errors import DataError
from .pipeline import FittedPipeline, derive_seeds, fit_pipeline, predict_pipeline
from .preprocess import PreprocessConfig


@dataclass(frozen=True)
class FoldPlan:
    """Partition of sequence ids into k folds of near-equal size."""

    k: int
    assignments: dict[str, int]
    seed: int

    def __post_init__(self) -> None:
        folds = set(self.assignments.values())
        if folds != set(range(self.k)):
            raise DataError(f"fold indices must cover 0..{self.k - 1}")
        sizes = self.fold_sizes()
        if max(sizes) - min(sizes) > 1:
            raise DataError(f"fold sizes must differ by at most 1, got {sizes}")

    def fold_sizes(self) -> list[int]:
        sizes = [0] * self.k
        for fold in self.assignments.values():
            sizes[fold] += 1
        return sizes

    def fold_ids(self, fold: int) -> list[str]:
        return [i for i, f in self.assignments.items() if f == fold]


def make_folds(ids: Sequence[str], k: int, seed: int) -> FoldPlan:
    """Seeded uniform shuffle, then contiguous split into k folds."""
    ids = list(ids)
    if k < 2:
        raise DataError(f"k must be >= 2, got {k}")
    if len(ids) < k:
        raise DataError(f"need at least {k} ids for {k} folds, got {len(ids)}")
    if len(set(ids)) != len(ids):
        raise DataError("ids must be unique")
    rng = np.random.default_rng(seed)
    shuffled = [ids[i] for i in rng.permutation(len(ids))]
    base, extra = divmod(len(ids), k)
    assignments: dict[str, int] = {}
    cursor = 0
    for fold in range(k):
        size = base + (1 if fold < extra else 0)
        for seq_id in shuffled[cursor: cursor + size]:
            assignments[seq_id] = fold
        cursor += size
    return FoldPlan(k=k, assignments=assignments, seed=seed)


@dataclass(frozen=True)
class ConfusionMatrix:
    """Counts with rows = truth, columns = predicted."""

    labels: tuple[str, ...]
    counts: np.ndarray

    def __post_init__(self) -> None:
        counts = np.asarray(self.counts, dtype=np.int64)
        if counts.shape != (len(self.labels), len(self.labels)):
            raise DataError(f"counts shape {counts.shape} does not match "
                            f"{len(self.labels)} labels")
        if np.any(counts < 0):
            raise DataError("confusion counts must be non-negative")
        counts.flags.writeable = False
        object.__setattr__(self, "counts", counts)
        object.__setattr__(self, "labels", tuple(self.labels))

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def accuracy(self) -> float:
        total = self.total
        return float(np.trace(self.counts) / total) if total else 0.0

    def to_csv_text(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["truth\\pred"] + list(self.labels))
        for i, label in enumerate(self.labels):
            writer.writerow([label] + [int(v) for v in self.counts[i]])
        return buf.getvalue()

    @classmethod
    def from_csv_text(cls, text: str) -> "ConfusionMatrix":
        rows = list(csv.reader(io.StringIO(text)))
        if not rows or rows[0][:1] != ["truth\\pred"]:
            raise DataError("confusion CSV must start with a 'truth\\pred' header")
        labels = tuple(rows[0][1:])
        counts = np.array([[int(c) for c in row[1:]] for row in rows[1:] if row],
                          dtype=np.int64)
        if len(counts) != len(labels):
            raise DataError("confusion CSV row labels do not match header")
        return cls(labels=labels, counts=counts)

    def save_csv(self, path: str | Path) -> None:
        Path(path).write_text(self.to_csv_text())

    @classmethod
    def load_csv(cls, path: str | Path) -> "ConfusionMatrix":
        return cls.from_csv_text(Path(path).read_text())

    def render_text(self, normalize: bool = False) -> str:
        """Aligned monospace table; optionally row-normalized percentages."""
        if normalize:
            row_sums = self.counts.sum(axis=1, keepdims=True)
            safe = np.maximum(row_sums, 1)
            cells = [[f"{100.0 * v / s[0]:.1f}" for v in row]
                     for row, s in zip(self.counts, safe)]
        else:
            cells = [[str(int(v)) for v in row] for row in self.counts]
        header = ["truth\\pred"] + list(self.labels)
        widths = [max(len(header[0]), *(len(l) for l in self.labels))]
        for j, label in enumerate(self.labels):
            widths.append(max(len(label), *(len(row[j]) for row in cells)))
        lines = ["  ".join(h.rjust(w) for h, w in zip(header, widths))]
        for label, row in zip(self.labels, cells):
            lines.append("  ".join(v.rjust(w) for v, w in
                                   zip([label] + row, widths)))
        return "\n".join(lines) + "\n"


def confusion(truth: Sequence[str], pred: Sequence[str],
              order: Sequence[str]) -> ConfusionMatrix:
    """counts[i, j] = number of samples with truth order[i], prediction order[j]."""
    if len(truth) != len(pred):
        raise DataError(f"truth ({len(truth)}) and predictions ({len(pred)}) "
                        f"lengths differ")
    order = list(order)
    index = {label: i for i, label in enumerate(order)}
    counts = np.zeros((len(order), len(order)), dtype=np.int64)
    for t, p in zip(truth, pred):
        if t not in index:
            raise DataError(f"truth label {t!r} outside the given order")
        if p not in index:
            raise DataError(f"predicted label {p!r} outside the given order")
        counts[index[t], index[p]] += 1
    return ConfusionMatrix(labels=tuple(order), counts=counts)


def aggregate_domains(cm: ConfusionMatrix,
                      taxonomy: LabelTaxonomy) -> ConfusionMatrix:
    """Sum item-level counts into movement-domain blocks (total preserved)."""
    domains = [taxonomy.domain_of(label) for label in cm.labels]
    present: list[Domain] = [d for d in MOVEMENT_DOMAINS if d in domains]
    if Domain.JUNK in domains:
        present.append(Domain.JUNK)
    index = {d: i for i, d in enumerate(present)}
    counts = np.zeros((len(present), len(present)), dtype=np.int64)
    for i, di in enumerate(domains):
        for j, dj in enumerate(domains):
            counts[index[di], index[dj]] += cm.counts[i, j]
    return ConfusionMatrix(labels=tuple(d.value for d in present), counts=counts)


def label_order(ds: Dataset) -> tuple[str, ...]:
    """Taxonomy item order restricted to labels present, junk last."""
    present = set(s.label for s in ds)
    order = [item for item in ds.taxonomy.items if item in present]
    if JUNK_LABEL in present:
        order.append(JUNK_LABEL)
    return tuple(order)


@dataclass(frozen=True)
class CvReport:
    """Aggregated k-fold results for one preprocessing configuration."""

    config: PreprocessConfig
    channel_set: Optional[str]
    k: int
    seed: int
    feature_count: int
    fold_accuracies: tuple[float, ...]
    mean_accuracy: float
    item_accuracy: float
    domain_accuracy: float
    item_cm: ConfusionMatrix
    domain_cm: ConfusionMatrix
    predictions: tuple[tuple[str, str, str], ...]  # (id, truth, predicted)
    fold_times: tuple[float, ...]
    total_time: float

    def to_dict(self) -> dict:
        return {
            "format": "aratkit-cv-report",
            "version": 1,
            "config": self.config.to_text(),
            "channel_set": self.channel_set,
            "k": self.k,
            "seed": self.seed,
            "feature_count": self.feature_count,
            "fold_accuracies": list(self.fold_accuracies),
            "mean_accuracy": self.mean_accuracy,
            "item_accuracy": self.item_accuracy,
            "domain_accuracy": self.domain_accuracy,
            "item_cm": {"labels": list(self.item_cm.labels),
                        "counts": self.item_cm.counts.tolist()},
            "domain_cm": {"labels": list(self.domain_cm.labels),
                          "counts": self.domain_cm.counts.tolist()},
            "predictions": [list(p) for p in self.predictions],
            "timing": {"per_fold_s": list(self.fold_times),
                       "total_s": self.total_time},
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"

    @classmethod
    def from_dict(cls, data: dict) -> "CvReport":
        if data.get("format") != "aratkit-cv-report":
            raise DataError("not a cross-validation report")
        return cls(
            config=PreprocessConfig.from_text(data["config"]),
            channel_set=data["channel_set"],
            k=int(data["k"]),
            seed=int(data["seed"]),
            feature_count=int(data["feature_count"]),
            fold_accuracies=tuple(float(a) for a in data["fold_accuracies"]),
            mean_accuracy=float(data["mean_accuracy"]),
            item_accuracy=float(data["item_accuracy"]),
            domain_accuracy=float(data["domain_accuracy"]),
            item_cm=ConfusionMatrix(
                labels=tuple(data["item_cm"]["labels"]),
                counts=np.array(data["item_cm"]["counts"], dtype=np.int64)),
            domain_cm=ConfusionMatrix(
                labels=tuple(data["domain_cm"]["labels"]),
                counts=np.array(data["domain_cm"]["counts"], dtype=np.int64)),
            predictions=tuple((p[0], p[1], p[2]) for p in data["predictions"]),
            fold_times=tuple(float(t) for t in data["timing"]["per_fold_s"]),
            total_time=float(data["timing"]["total_s"]),
        )

    @classmethod
    def from_json(cls, text: str) -> "CvReport":
        return cls.from_dict(json.loads(text))

    @classmethod
    def load(cls, path: str | Path) -> "CvReport":
        return cls.from_json(Path(path).read_text())


def run_cv(ds: Dataset, cfg: PreprocessConfig,
           channels: Optional[ChannelSet] = None, *, k: int = 10,
           seed: int = 42, feature_count: int = rocket.DEFAULT_NUM_FEATURES,
           lambda_grid: Optional[Sequence[float]] = None,
           return_models: bool = False):
    """Seeded k-fold cross-validation of the full pipeline.

    Every fold fits preprocessing, transform, and classifier on its k-1
    training folds only; the held-out fold is preprocessed with the training
    fold's padding length and no noise. Returns a CvReport (and the per-fold
    pipelines when ``return_models`` is set).
    """
    labels_present = sorted(set(s.label for s in ds))
    if len(labels_present) < 2:
        raise DataError("cross-validation needs at least 2 distinct labels")
    plan = make_folds(ds.ids, k, seed)
    fold_seeds = derive_seeds(seed, k)
    order = label_order(ds)

    all_ids: list[str] = []
    all_truth: list[str] = []
    all_pred: list[str] = []
    fold_accuracies: list[float] = []
    fold_times: list[float] = []
    models: list[FittedPipeline] = []
    started = time.perf_counter()
    for fold in range(k):
        t0 = time.perf_counter()
        eval_ids = set(plan.fold_ids(fold))
        train_ds = ds.subset(i for i in ds.ids if i not in eval_ids)
        eval_ds = ds.subset(eval_ids)
        train_labels = set(s.label for s in train_ds)
        missing = [l for l in labels_present if l not in train_labels]
        if missing:
            raise DataError(f"fold {fold}: training folds miss classes "
                            f"{missing}; use more data or fewer folds")
        pipe = fit_pipeline(train_ds, cfg, channels,
                            feature_count=feature_count,
                            seed=fold_seeds[fold], lambda_grid=lambda_grid)
        ids, truths, preds = predict_pipeline(pipe, eval_ds)
        correct = sum(1 for t, p in zip(truths, preds) if t == p)
        fold_accuracies.append(correct / len(ids))
        all_ids.extend(ids)
        all_truth.extend(truths)
        all_pred.extend(preds)
        fold_times.append(time.perf_counter() - t0)
        if return_models:
            models.append(pipe)

    item_cm = confusion(all_truth, all_pred, order)
    domain_cm = aggregate_domains(item_cm, ds.taxonomy)
    report = CvReport(
        config=cfg,
        channel_set=channels.value if channels else None,
        k=k, seed=seed, feature_count=feature_count,
        fold_accuracies=tuple(fold_accuracies),
        mean_accuracy=float(np.mean(fold_accuracies)),
        item_accuracy=item_cm.accuracy(),
        domain_accuracy=domain_cm.accuracy(),
        item_cm=item_cm, domain_cm=domain_cm,
        predictions=tuple(zip(all_ids, all_truth, all_pred)),
        fold_times=tuple(fold_times),
        total_time=time.perf_counter() - started,
    )
    return (report, models) if return_models else report


@dataclass(frozen=True)
class GridCell:
    """Outcome of one grid configuration (report or recorded failure)."""

    index: int
    config: PreprocessConfig
    report: Optional[CvReport]
    error: Optional[str]
    runtime: float

    @property
    def mean_accuracy(self) -> Optional[float]:
        return self.report.mean_accuracy if self.report else None


def grid_search(ds: Dataset, configs: Sequence[PreprocessConfig],
                channels: Optional[ChannelSet] = None, *, k: int = 10,
                seed: int = 42,
                feature_count: int = rocket.DEFAULT_NUM_FEATURES,
                lambda_grid: Optional[Sequence[float]] = None,
                workers: int = 1) -> list[GridCell]:
    """Cross-validate every config and rank by mean accuracy descending.

    A failing config is recorded (not raised) and ranks after all successes.
    Ties break by position in the input config list, so the ranking is
    deterministic regardless of worker count.
    """
    if not configs:
        raise DataError("grid search needs at least one configuration")

    def _run(item: tuple[int, PreprocessConfig]) -> GridCell:
        index, cfg = item
        t0 = time.perf_counter()
        try:
            report = run_cv(ds, cfg, channels, k=k, seed=seed,
                            feature_count=feature_count,
                            lambda_grid=lambda_grid)
            return GridCell(index, cfg, report, None,
                            time.perf_counter() - t0)
        except Exception as exc:  # recorded, sweep continues
            return GridCell(index, cfg, None,
                            f"{type(exc).__name__}: {exc}",
                            time.perf_counter() - t0)

    items = list(enumerate(configs))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            cells = list(pool.map(_run, items))
    else:
        cells = [_run(item) for item in items]
    cells.sort(key=lambda c: (c.report is None,
                              -(c.mean_accuracy or 0.0), c.index))
    return cells


GRID_CSV_HEADER = ["rank", "std_noise_acc", "std_noise_gyr", "padding",
                   "filter_freq_acc_gyr", "freed_sensors", "mean_accuracy_pct",
                   "runtime_s", "status"]


def _format_freed(cfg: PreprocessConfig) -> str:
    if cfg.free_acceleration and cfg.free_angular_velocity:
        return "True"
    if cfg.free_acceleration:
        return "acc"
    if cfg.free_angular_velocity:
        return "gyr"
    return "False"


def _format_level(value: Optional[float]) -> str:
    return "0" if value is None else f"{value:g}"


def grid_to_csv_text(cells: Sequence[GridCell]) -> str:
    """Ranked table with the noise/padding/filter/freed/accuracy columns."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(GRID_CSV_HEADER)
    for rank, cell in enumerate(cells, start=1):
        cfg = cell.config
        acc = "" if cell.mean_accuracy is None else f"{100.0 * cell.mean_accuracy:.3f}"
        writer.writerow([
            rank,
            _format_level(cfg.noise_std_acc),
            _format_level(cfg.noise_std_gyr),
            cfg.padding_mode.capitalize(),
            f"{_format_level(cfg.filter_cutoff_acc_hz)} / "
            f"{_format_level(cfg.filter_cutoff_gyr_hz)}",
            _format_freed(cfg),
            acc,
            f"{cell.runtime:.3f}",
            "ok" if cell.report else f"failed: {cell.error}",
        ])
    return buf.getvalue()
