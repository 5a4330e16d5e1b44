"""Dataset loading and curation: manifests, per-sequence CSV files, junk
balancing, length truncation, and channel selection.

File layout
-----------
Manifest: CSV with header ``sequence_id,file,label,subject_id,side,score``.
The ``file`` column is resolved relative to the manifest's directory; the
``score`` column may be empty (junk).

Sequence file: CSV with header ``t,acc_x,acc_y,acc_z,gyr_x,gyr_y,gyr_z,
quat_w,quat_x,quat_y,quat_z``. ``t`` is in seconds, strictly increasing, with
inter-sample intervals within +-10% of the nominal rate (60 Hz by default).
Irregular sampling is rejected; there is no resampling or gap filling.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .data_model import (
    ALL_CHANNELS,
    ChannelSet,
    Dataset,
    JUNK_LABEL,
    LabelTaxonomy,
    SensorSequence,
    SIDES,
    validate_sequence,
)
from .errors import DataError

MANIFEST_HEADER = ["sequence_id", "file", "label", "subject_id", "side", "score"]
SEQUENCE_HEADER = ["t"] + list(ALL_CHANNELS)

# Allowed deviation of each inter-sample interval from the nominal period.
INTERVAL_TOLERANCE = 0.10


@dataclass(frozen=True)
class ManifestRow:
    sequence_id: str
    file: Path
    label: str
    subject_id: str
    side: str
    score: Optional[int]


def read_manifest(path: str | Path, taxonomy: LabelTaxonomy) -> list[ManifestRow]:
    """Parse and validate a manifest CSV; raises with per-row line numbers."""
    path = Path(path)
    if not path.is_file():
        raise DataError(f"manifest not found: {path}")
    rows: list[ManifestRow] = []
    problems: list[str] = []
    valid_labels = set(taxonomy.labels)
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != MANIFEST_HEADER:
            raise DataError(f"{path}: expected header "
                            f"{','.join(MANIFEST_HEADER)!r}, got {header}")
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(MANIFEST_HEADER):
                problems.append(f"row {lineno}: expected {len(MANIFEST_HEADER)} "
                                f"columns, got {len(row)}")
                continue
            seq_id, file_rel, label, subject, side, score_text = (c.strip() for c in row)
            if not seq_id:
                problems.append(f"row {lineno}: empty sequence_id")
            file_path = (path.parent / file_rel).resolve()
            if not file_path.is_file():
                problems.append(f"row {lineno}: sequence file not found: {file_rel}")
            if label not in valid_labels:
                problems.append(f"row {lineno}: label {label!r} not in taxonomy")
            if side not in SIDES:
                problems.append(f"row {lineno}: side {side!r} not in {SIDES}")
            score: Optional[int] = None
            if score_text:
                try:
                    score = int(score_text)
                except ValueError:
                    problems.append(f"row {lineno}: score {score_text!r} is not an integer")
                else:
                    if not 0 <= score <= 3:
                        problems.append(f"row {lineno}: score {score} outside 0..3")
            rows.append(ManifestRow(seq_id, file_path, label, subject, side, score))
    ids = [r.sequence_id for r in rows]
    for dup in sorted({i for i in ids if ids.count(i) > 1}):
        problems.append(f"duplicate sequence_id {dup!r}")
    if problems:
        raise DataError(f"{path}: " + "; ".join(problems))
    return rows


def read_sequence_file(path: str | Path, *, sample_rate: float = 60.0) -> np.ndarray:
    """Read one sequence CSV and return samples as [10 x T] float64.

    Checks the header, numeric parsing, strictly increasing ``t``, and the
    inter-sample interval tolerance against the nominal rate.
    """
    path = Path(path)
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != SEQUENCE_HEADER:
            raise DataError(f"{path}: expected header "
                            f"{','.join(SEQUENCE_HEADER)!r}, got {header}")
        try:
            data = np.array([[float(c) for c in row] for row in reader if row],
                            dtype=np.float64)
        except ValueError as exc:
            raise DataError(f"{path}: non-numeric value: {exc}") from None
    if data.size == 0:
        raise DataError(f"{path}: no samples")
    if data.ndim != 2 or data.shape[1] != len(SEQUENCE_HEADER):
        raise DataError(f"{path}: expected {len(SEQUENCE_HEADER)} columns")
    t = data[:, 0]
    if len(t) > 1:
        dt = np.diff(t)
        if np.any(dt <= 0):
            bad = int(np.flatnonzero(dt <= 0)[0]) + 1
            raise DataError(f"{path}: t not strictly increasing at sample {bad}")
        nominal = 1.0 / sample_rate
        off = np.abs(dt - nominal) > INTERVAL_TOLERANCE * nominal
        if np.any(off):
            bad = int(np.flatnonzero(off)[0]) + 1
            raise DataError(
                f"{path}: interval {dt[off][0]:.6g}s at sample {bad} deviates "
                f"more than {INTERVAL_TOLERANCE:.0%} from nominal {nominal:.6g}s")
    return np.ascontiguousarray(data[:, 1:].T)


def load_dataset(manifest_path: str | Path, taxonomy: Optional[LabelTaxonomy] = None,
                 *, sample_rate: float = 60.0) -> Dataset:
    """Load every manifest row into a validated Dataset (all-or-nothing)."""
    taxonomy = taxonomy or LabelTaxonomy.default()
    rows = read_manifest(manifest_path, taxonomy)
    sequences: list[SensorSequence] = []
    problems: list[str] = []
    for i, row in enumerate(rows):
        lineno = i + 2
        try:
            samples = read_sequence_file(row.file, sample_rate=sample_rate)
            seq = SensorSequence(
                id=row.sequence_id, samples=samples, channels=ALL_CHANNELS,
                label=row.label, subject_id=row.subject_id, side=row.side,
                score=row.score, sample_rate=sample_rate)
        except DataError as exc:
            problems.append(f"row {lineno}: {exc}")
            continue
        for violation in validate_sequence(seq):
            problems.append(f"row {lineno} ({seq.id}): {violation}")
        sequences.append(seq)
    if problems:
        raise DataError(f"{manifest_path}: " + "; ".join(problems))
    return Dataset(tuple(sequences), taxonomy)


def balance_junk(ds: Dataset, seed: int) -> Dataset:
    """Cap junk sequences at the largest per-item count.

    If the junk count exceeds the maximum count M over non-junk items,
    exactly M junk sequences are retained, chosen by seeded uniform sampling
    without replacement. Non-junk sequences are untouched and dataset order
    is preserved.
    """
    counts = ds.label_counts()
    item_counts = {k: v for k, v in counts.items() if k != JUNK_LABEL}
    if not item_counts:
        raise DataError("balance_junk requires at least one non-junk sequence")
    cap = max(item_counts.values())
    junk_ids = [s.id for s in ds if s.label == JUNK_LABEL]
    if len(junk_ids) <= cap:
        return ds
    rng = np.random.default_rng(seed)
    kept = set(rng.choice(np.array(junk_ids, dtype=object), size=cap, replace=False))
    sequences = tuple(s for s in ds if s.label != JUNK_LABEL or s.id in kept)
    return ds.replace_sequences(sequences)


def truncate_longest(ds: Dataset, keep_fraction: float) -> Dataset:
    """Retain the ceil(keep_fraction * N) shortest sequences.

    Ties in length are broken by ascending sequence id so the result is
    deterministic. Output keeps the original dataset order.
    """
    if not 0.0 < keep_fraction <= 1.0:
        raise DataError(f"keep_fraction must be in (0, 1], got {keep_fraction}")
    n_keep = math.ceil(keep_fraction * len(ds))
    ranked = sorted(ds, key=lambda s: (s.num_samples, s.id))
    kept = {s.id for s in ranked[:n_keep]}
    return ds.replace_sequences(tuple(s for s in ds if s.id in kept))


def select_channels(ds: Dataset, channel_set: ChannelSet) -> Dataset:
    """New dataset with only the requested channel roles, order preserved."""
    roles = channel_set.roles
    missing = [r for r in roles if r not in ds.channels]
    if missing:
        raise DataError(f"dataset lacks channels {missing}")
    sequences = []
    for seq in ds:
        sequences.append(SensorSequence(
            id=seq.id, samples=seq.channel_rows(roles), channels=roles,
            label=seq.label, subject_id=seq.subject_id, side=seq.side,
            score=seq.score, sample_rate=seq.sample_rate))
    return ds.replace_sequences(tuple(sequences))


def write_dataset(ds: Dataset, out_dir: str | Path, *,
                  sequences_subdir: str = "sequences") -> Path:
    """Write manifest + per-sequence CSVs (+ taxonomy) in the ingest layout.

    Returns the manifest path. Floats are written with repr so a round trip
    through ``load_dataset`` reproduces samples bit-exactly.
    """
    out_dir = Path(out_dir)
    seq_dir = out_dir / sequences_subdir
    seq_dir.mkdir(parents=True, exist_ok=True)
    manifest_path = out_dir / "manifest.csv"
    with open(manifest_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(MANIFEST_HEADER)
        for seq in ds:
            rel = f"{sequences_subdir}/{seq.id}.csv"
            score = "" if seq.score is None else str(seq.score)
            writer.writerow([seq.id, rel, seq.label, seq.subject_id, seq.side, score])
            _write_sequence_csv(seq_dir / f"{seq.id}.csv", seq)
    ds.taxonomy.to_csv(out_dir / "taxonomy.csv")
    return manifest_path


def _write_sequence_csv(path: Path, seq: SensorSequence) -> None:
    if seq.channels != ALL_CHANNELS:
        raise DataError(f"sequence {seq.id!r}: only full 10-channel sequences "
                        f"can be written in the standard layout")
    period = 1.0 / seq.sample_rate
    with open(path, "w", newline="") as fh:
        fh.write(",".join(SEQUENCE_HEADER) + "\n")
        for i in range(seq.num_samples):
            cells = [repr(i * period)] + [repr(float(v)) for v in seq.samples[:, i]]
            fh.write(",".join(cells) + "\n")
