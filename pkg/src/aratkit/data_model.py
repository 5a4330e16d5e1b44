"""Core domain types: channel layout, item/domain taxonomy, sensor sequences.

Everything here is immutable after construction and safe to share across
workers. Structural problems (wrong shapes, duplicate ids) raise DataError at
construction time; per-sequence signal invariants are checked by
``validate_sequence``, which reports violations instead of raising.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Iterator, Optional, Sequence

import numpy as np

from .errors import DataError

GRAVITY_MS2 = 9.80665

ACC_CHANNELS = ("acc_x", "acc_y", "acc_z")
GYR_CHANNELS = ("gyr_x", "gyr_y", "gyr_z")
QUAT_CHANNELS = ("quat_w", "quat_x", "quat_y", "quat_z")
ALL_CHANNELS = ACC_CHANNELS + GYR_CHANNELS + QUAT_CHANNELS

JUNK_LABEL = "junk"
SIDES = ("left", "right")

QUAT_NORM_TOL = 1e-3
MIN_SEQUENCE_LENGTH = 9


class ChannelSet(Enum):
    """Input-feature subsets: accelerometer+gyroscope, quaternions, or both."""

    ACC_GYRO = "acc-gyro"
    QUAT = "quat"
    ALL = "all"

    @property
    def roles(self) -> tuple[str, ...]:
        if self is ChannelSet.ACC_GYRO:
            return ACC_CHANNELS + GYR_CHANNELS
        if self is ChannelSet.QUAT:
            return QUAT_CHANNELS
        return ALL_CHANNELS

    @property
    def num_channels(self) -> int:
        return len(self.roles)

    @classmethod
    def parse(cls, name: str) -> "ChannelSet":
        for member in cls:
            if name in (member.value, member.name, member.name.lower()):
                return member
        raise DataError(f"unknown channel set {name!r}; expected one of "
                        f"{[m.value for m in cls]}")


class Domain(Enum):
    """ARAT movement domains plus the junk bucket."""

    GRASP = "Grasp"
    GRIP = "Grip"
    PINCH = "Pinch"
    GROSS = "Gross"
    JUNK = "Junk"


MOVEMENT_DOMAINS = (Domain.GRASP, Domain.GRIP, Domain.PINCH, Domain.GROSS)

# Stand-in ids for the 19 standard items (6 grasp, 4 grip, 6 pinch, 3 gross).
# Any other naming convention can be substituted via a taxonomy CSV.
_DEFAULT_ITEMS: tuple[tuple[str, Domain], ...] = (
    ("cube_10cm", Domain.GRASP),
    ("cube_2_5cm", Domain.GRASP),
    ("cube_5cm", Domain.GRASP),
    ("cube_7_5cm", Domain.GRASP),
    ("ball_7_5cm", Domain.GRASP),
    ("stone", Domain.GRASP),
    ("pour_glass_to_glass", Domain.GRIP),
    ("tube_2_25cm", Domain.GRIP),
    ("tube_1cm", Domain.GRIP),
    ("washer_over_bolt", Domain.GRIP),
    ("bearing_3rd_finger", Domain.PINCH),
    ("marble_index_finger", Domain.PINCH),
    ("bearing_2nd_finger", Domain.PINCH),
    ("bearing_1st_finger", Domain.PINCH),
    ("marble_3rd_finger", Domain.PINCH),
    ("marble_2nd_finger", Domain.PINCH),
    ("hand_behind_head", Domain.GROSS),
    ("hand_on_top_of_head", Domain.GROSS),
    ("hand_to_mouth", Domain.GROSS),
)


@dataclass(frozen=True)
class LabelTaxonomy:
    """19 item ids mapped onto the four movement domains, plus implicit junk."""

    item_domains: tuple[tuple[str, Domain], ...]

    def __post_init__(self) -> None:
        ids = [item for item, _ in self.item_domains]
        if len(ids) != 19:
            raise DataError(f"taxonomy must define exactly 19 items, got {len(ids)}")
        if len(set(ids)) != len(ids):
            dupes = sorted({i for i in ids if ids.count(i) > 1})
            raise DataError(f"duplicate taxonomy items: {dupes}")
        if JUNK_LABEL in ids:
            raise DataError(f"{JUNK_LABEL!r} is reserved and cannot be a taxonomy item")
        for item, dom in self.item_domains:
            if dom not in MOVEMENT_DOMAINS:
                raise DataError(f"item {item!r} mapped to non-movement domain {dom}")

    @property
    def items(self) -> tuple[str, ...]:
        return tuple(item for item, _ in self.item_domains)

    @property
    def labels(self) -> tuple[str, ...]:
        """All 20 valid labels: the 19 items followed by junk."""
        return self.items + (JUNK_LABEL,)

    def domain_of(self, label: str) -> Domain:
        """Domain of an item label. Total over ``labels``; junk maps to Junk."""
        if label == JUNK_LABEL:
            return Domain.JUNK
        for item, dom in self.item_domains:
            if item == label:
                return dom
        raise DataError(f"label {label!r} is not in the taxonomy")

    def items_of(self, domain: Domain) -> tuple[str, ...]:
        if domain is Domain.JUNK:
            return (JUNK_LABEL,)
        return tuple(item for item, dom in self.item_domains if dom is domain)

    @classmethod
    def default(cls) -> "LabelTaxonomy":
        return cls(_DEFAULT_ITEMS)

    @classmethod
    def from_csv(cls, path: str | Path) -> "LabelTaxonomy":
        """Load from a CSV with header ``item_id,domain``; junk is implicit."""
        path = Path(path)
        rows: list[tuple[str, Domain]] = []
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header is None or [h.strip() for h in header] != ["item_id", "domain"]:
                raise DataError(f"{path}: expected header 'item_id,domain', got {header}")
            for lineno, row in enumerate(reader, start=2):
                if not row or all(not c.strip() for c in row):
                    continue
                if len(row) != 2:
                    raise DataError(f"{path}:{lineno}: expected 2 columns, got {len(row)}")
                item, dom_name = row[0].strip(), row[1].strip()
                try:
                    dom = Domain(dom_name)
                except ValueError:
                    raise DataError(f"{path}:{lineno}: unknown domain {dom_name!r}") from None
                rows.append((item, dom))
        return cls(tuple(rows))

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["item_id", "domain"])
            for item, dom in self.item_domains:
                writer.writerow([item, dom.value])


def domain_of(item: str, taxonomy: Optional[LabelTaxonomy] = None) -> Domain:
    """Map an item label to its movement domain under the given taxonomy."""
    return (taxonomy or LabelTaxonomy.default()).domain_of(item)


@dataclass(frozen=True)
class SensorSequence:
    """One variable-length multichannel recording with its label and metadata.

    ``samples`` is [channels x T] float64 with rows ordered as ``channels``.
    Acceleration is in m/s^2, angular velocity in deg/s, quaternions unitless
    (w, x, y, z). The array is frozen after construction.
    """

    id: str
    samples: np.ndarray
    channels: tuple[str, ...] = ALL_CHANNELS
    label: str = JUNK_LABEL
    subject_id: str = ""
    side: str = "left"
    score: Optional[int] = None
    sample_rate: float = 60.0

    def __post_init__(self) -> None:
        samples = np.ascontiguousarray(np.asarray(self.samples, dtype=np.float64))
        if samples.ndim != 2:
            raise DataError(f"sequence {self.id!r}: samples must be 2-D "
                            f"[channels x T], got shape {samples.shape}")
        if samples.shape[0] != len(self.channels):
            raise DataError(f"sequence {self.id!r}: {samples.shape[0]} sample rows "
                            f"but {len(self.channels)} channel roles")
        if samples.shape[1] < 1:
            raise DataError(f"sequence {self.id!r}: empty sample array")
        if self.sample_rate <= 0:
            raise DataError(f"sequence {self.id!r}: sample_rate must be positive")
        samples.flags.writeable = False
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "channels", tuple(self.channels))

    @property
    def num_samples(self) -> int:
        return self.samples.shape[1]

    def channel_index(self, role: str) -> int:
        try:
            return self.channels.index(role)
        except ValueError:
            raise DataError(f"sequence {self.id!r} has no channel {role!r}") from None

    def channel_rows(self, roles: Sequence[str]) -> np.ndarray:
        return self.samples[[self.channel_index(r) for r in roles]]

    def with_samples(self, samples: np.ndarray) -> "SensorSequence":
        """Copy of this sequence with replaced sample array (same metadata)."""
        return SensorSequence(
            id=self.id, samples=samples, channels=self.channels, label=self.label,
            subject_id=self.subject_id, side=self.side, score=self.score,
            sample_rate=self.sample_rate,
        )


def validate_sequence(seq: SensorSequence) -> list[str]:
    """Check signal invariants; returns one message per violation.

    Never raises: an empty list means the sequence is valid. Checks finite
    samples, minimum length, and quaternion norms where quaternion channels
    are present.
    """
    problems: list[str] = []
    if seq.num_samples < MIN_SEQUENCE_LENGTH:
        problems.append(
            f"length {seq.num_samples} below minimum {MIN_SEQUENCE_LENGTH}")
    bad = ~np.isfinite(seq.samples)
    if bad.any():
        for row in np.flatnonzero(bad.any(axis=1)):
            t = int(np.flatnonzero(bad[row])[0])
            problems.append(
                f"non-finite value in channel {seq.channels[row]!r} at index {t}")
    quat_roles = [r for r in QUAT_CHANNELS if r in seq.channels]
    if len(quat_roles) == 4:
        norms = np.linalg.norm(seq.channel_rows(quat_roles), axis=0)
        off = np.abs(norms - 1.0) > QUAT_NORM_TOL
        # non-finite quats already reported above
        off &= np.isfinite(norms)
        if off.any():
            t = int(np.flatnonzero(off)[0])
            problems.append(
                f"quaternion norm {norms[t]:.6g} at index {t} deviates from 1 "
                f"by more than {QUAT_NORM_TOL}")
    if seq.side not in SIDES:
        problems.append(f"side {seq.side!r} not in {SIDES}")
    if seq.score is not None and not (0 <= int(seq.score) <= 3):
        problems.append(f"score {seq.score} outside 0..3")
    return problems


@dataclass(frozen=True)
class Dataset:
    """An ordered collection of sequences sharing one channel layout."""

    sequences: tuple[SensorSequence, ...]
    taxonomy: LabelTaxonomy = field(default_factory=LabelTaxonomy.default)

    def __post_init__(self) -> None:
        object.__setattr__(self, "sequences", tuple(self.sequences))
        ids = [s.id for s in self.sequences]
        if len(set(ids)) != len(ids):
            dupes = sorted({i for i in ids if ids.count(i) > 1})
            raise DataError(f"duplicate sequence ids: {dupes}")
        if self.sequences:
            layout = self.sequences[0].channels
            rate = self.sequences[0].sample_rate
            for seq in self.sequences:
                if seq.channels != layout:
                    raise DataError(f"sequence {seq.id!r} channel layout "
                                    f"{seq.channels} differs from {layout}")
                if seq.sample_rate != rate:
                    raise DataError(f"sequence {seq.id!r} sample rate "
                                    f"{seq.sample_rate} differs from {rate}")
        valid = set(self.taxonomy.labels)
        for seq in self.sequences:
            if seq.label not in valid:
                raise DataError(f"sequence {seq.id!r} label {seq.label!r} "
                                f"not in taxonomy")

    def __len__(self) -> int:
        return len(self.sequences)

    def __iter__(self) -> Iterator[SensorSequence]:
        return iter(self.sequences)

    @property
    def ids(self) -> tuple[str, ...]:
        return tuple(s.id for s in self.sequences)

    @property
    def channels(self) -> tuple[str, ...]:
        if not self.sequences:
            return ()
        return self.sequences[0].channels

    @property
    def sample_rate(self) -> float:
        if not self.sequences:
            return 60.0
        return self.sequences[0].sample_rate

    def by_id(self, seq_id: str) -> SensorSequence:
        for seq in self.sequences:
            if seq.id == seq_id:
                return seq
        raise DataError(f"no sequence with id {seq_id!r}")

    def label_counts(self) -> dict[str, int]:
        counts: dict[str, int] = {}
        for seq in self.sequences:
            counts[seq.label] = counts.get(seq.label, 0) + 1
        return counts

    def subset(self, ids: Iterable[str]) -> "Dataset":
        """Subset by id, preserving this dataset's order."""
        wanted = set(ids)
        missing = wanted - set(self.ids)
        if missing:
            raise DataError(f"unknown sequence ids: {sorted(missing)}")
        kept = tuple(s for s in self.sequences if s.id in wanted)
        return Dataset(kept, self.taxonomy)

    def replace_sequences(self, sequences: Iterable[SensorSequence]) -> "Dataset":
        return Dataset(tuple(sequences), self.taxonomy)


def write_default_taxonomy(path: str | Path) -> None:
    LabelTaxonomy.default().to_csv(path)
