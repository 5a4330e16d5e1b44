"""Preprocessing grid: padding, low-pass filtering, gravity freeing, and
train-time Gaussian noise, composed into one configurable per-fold pipeline.

Stage order inside ``apply_config`` is fixed: (1) freeing, (2) filtering,
(3) noise (train phase only), (4) padding to the training-fold maximum
length. Evaluation sequences longer than that length are truncated.

Quaternion convention: sensor-to-world rotation, Hamilton product, w-first
storage. Filtering is a 4th-order Butterworth applied forward-backward, so
the pass band sees two -3 dB points at the cutoff (amplitude ratio 0.5).

All randomness is driven by per-sequence generators derived from the master
seed and the sequence id, so parallel and serial preprocessing produce
identical output.
"""

from __future__ import annotations

import hashlib
import itertools
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from scipy.signal import butter, filtfilt

from .data_model import (
    ACC_CHANNELS,
    ChannelSet,
    Dataset,
    GRAVITY_MS2,
    GYR_CHANNELS,
    QUAT_CHANNELS,
    QUAT_NORM_TOL,
    SensorSequence,
)
from .errors import ConfigError, DataError

FILTER_ORDER = 4
GRAVITY_VECTOR = np.array([0.0, 0.0, GRAVITY_MS2])

PADDING_MODES = ("mean", "zero")
PHASES = ("train", "eval")

# Discrete grid levels actually swept (None disables the stage).
NOISE_LEVELS_ACC = (None, 0.1, 0.5, 1.0)
NOISE_LEVELS_GYR = (None, 1.0, 3.0, 5.0)
FILTER_CUTOFFS_HZ = (None, 10.0, 20.0)

_CONFIG_KEYS = (
    "padding_mode",
    "filter_cutoff_acc_hz",
    "filter_cutoff_gyr_hz",
    "free_acceleration",
    "free_angular_velocity",
    "noise_std_acc",
    "noise_std_gyr",
)


@dataclass(frozen=True)
class PreprocessConfig:
    """One cell of the preprocessing grid."""

    padding_mode: str = "zero"
    filter_cutoff_acc_hz: Optional[float] = None
    filter_cutoff_gyr_hz: Optional[float] = None
    free_acceleration: bool = False
    free_angular_velocity: bool = False
    noise_std_acc: Optional[float] = None
    noise_std_gyr: Optional[float] = None

    def __post_init__(self) -> None:
        if self.padding_mode not in PADDING_MODES:
            raise ConfigError(f"padding_mode must be one of {PADDING_MODES}, "
                              f"got {self.padding_mode!r}")
        for name in ("filter_cutoff_acc_hz", "filter_cutoff_gyr_hz"):
            value = getattr(self, name)
            if value is not None and value <= 0:
                raise ConfigError(f"{name} must be positive, got {value}")
        for name in ("noise_std_acc", "noise_std_gyr"):
            value = getattr(self, name)
            if value is not None and value <= 0:
                raise ConfigError(f"{name} must be positive, got {value}")

    def validate_for_rate(self, sample_rate: float) -> None:
        nyquist = sample_rate / 2.0
        for name in ("filter_cutoff_acc_hz", "filter_cutoff_gyr_hz"):
            value = getattr(self, name)
            if value is not None and value >= nyquist:
                raise ConfigError(f"{name}={value} must be strictly below the "
                                  f"Nyquist frequency {nyquist} Hz")

    def to_text(self) -> str:
        """Flat key=value serialization, one key per line."""
        lines = []
        for key in _CONFIG_KEYS:
            value = getattr(self, key)
            if value is None:
                text = "none"
            elif isinstance(value, bool):
                text = "true" if value else "false"
            else:
                text = repr(float(value)) if isinstance(value, float) else str(value)
            lines.append(f"{key}={text}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "PreprocessConfig":
        values: dict[str, object] = {}
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ConfigError(f"config line {lineno}: expected key=value, got {raw!r}")
            key, _, value = line.partition("=")
            key, value = key.strip(), value.strip()
            if key not in _CONFIG_KEYS:
                raise ConfigError(f"config line {lineno}: unknown key {key!r}")
            if key in values:
                raise ConfigError(f"config line {lineno}: duplicate key {key!r}")
            values[key] = _parse_config_value(key, value, lineno)
        return cls(**values)  # type: ignore[arg-type]

    @classmethod
    def from_file(cls, path: str | Path) -> "PreprocessConfig":
        return cls.from_text(Path(path).read_text())

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_text())


def _parse_config_value(key: str, value: str, lineno: int):
    lowered = value.lower()
    if key == "padding_mode":
        return value
    if lowered in ("none", ""):
        return None
    if key in ("free_acceleration", "free_angular_velocity"):
        if lowered in ("true", "yes", "1"):
            return True
        if lowered in ("false", "no", "0"):
            return False
        raise ConfigError(f"config line {lineno}: expected boolean for {key}, got {value!r}")
    try:
        return float(value)
    except ValueError:
        raise ConfigError(f"config line {lineno}: expected number or 'none' for "
                          f"{key}, got {value!r}") from None


def enumerate_grid(paired_filters: bool = True) -> list[PreprocessConfig]:
    """Full Cartesian product of the preprocessing axes.

    Freeing toggles acceleration and angular velocity jointly, and by default
    the two filter cutoffs sweep as one paired axis (192 configs); with
    ``paired_filters=False`` the cutoffs vary independently (576 configs).
    """
    if paired_filters:
        filter_pairs = [(c, c) for c in FILTER_CUTOFFS_HZ]
    else:
        filter_pairs = list(itertools.product(FILTER_CUTOFFS_HZ, FILTER_CUTOFFS_HZ))
    configs = []
    for padding in PADDING_MODES:
        for cut_acc, cut_gyr in filter_pairs:
            for freed in (False, True):
                for std_acc in NOISE_LEVELS_ACC:
                    for std_gyr in NOISE_LEVELS_GYR:
                        configs.append(PreprocessConfig(
                            padding_mode=padding,
                            filter_cutoff_acc_hz=cut_acc,
                            filter_cutoff_gyr_hz=cut_gyr,
                            free_acceleration=freed,
                            free_angular_velocity=freed,
                            noise_std_acc=std_acc,
                            noise_std_gyr=std_gyr,
                        ))
    return configs


# ---------------------------------------------------------------------------
# Single-sequence operations


def pad_to_length(seq: SensorSequence, target_len: int, mode: str) -> SensorSequence:
    """Extend a sequence at the tail to ``target_len`` samples.

    Zero mode appends zeros; mean mode appends each channel's mean over the
    sequence's own samples. The original samples are bit-identical in the
    prefix.
    """
    if mode not in PADDING_MODES:
        raise ConfigError(f"padding mode must be one of {PADDING_MODES}, got {mode!r}")
    if target_len < seq.num_samples:
        raise DataError(f"target_len {target_len} below sequence length "
                        f"{seq.num_samples}")
    return seq.with_samples(_pad_rows(seq.samples, target_len, mode))


def _pad_rows(samples: np.ndarray, target_len: int, mode: str) -> np.ndarray:
    t = samples.shape[1]
    if target_len == t:
        return samples
    if mode == "zero":
        fill = np.zeros((samples.shape[0], 1))
    else:
        fill = samples.mean(axis=1, keepdims=True)
    return np.hstack([samples, np.broadcast_to(fill, (samples.shape[0], target_len - t))])


def butterworth_lowpass(seq: SensorSequence, cutoff_hz: float,
                        channels: Sequence[str]) -> SensorSequence:
    """Zero-phase 4th-order low-pass on the selected channels.

    Forward-backward application cancels phase lag; other channels are
    untouched. For sequences shorter than the default filtfilt edge padding,
    the padding is clamped to T-1 samples.
    """
    if not 0 < cutoff_hz < seq.sample_rate / 2:
        raise ConfigError(f"cutoff {cutoff_hz} Hz outside (0, "
                          f"{seq.sample_rate / 2}) for rate {seq.sample_rate}")
    rows = [seq.channel_index(r) for r in channels]
    out = np.array(seq.samples)
    out[rows] = _filtfilt_rows(out[rows], cutoff_hz, seq.sample_rate)
    return seq.with_samples(out)


def _filtfilt_rows(rows: np.ndarray, cutoff_hz: float, sample_rate: float) -> np.ndarray:
    b, a = butter(FILTER_ORDER, cutoff_hz, btype="low", fs=sample_rate)
    padlen = min(3 * max(len(a), len(b)), rows.shape[1] - 1)
    return filtfilt(b, a, rows, axis=1, padlen=padlen)


def _check_quaternions(quat: np.ndarray) -> np.ndarray:
    """Validate near-unit norms and return the normalized [4 x T] array."""
    if quat.ndim != 2 or quat.shape[0] != 4:
        raise DataError(f"quaternion series must be [4 x T], got {quat.shape}")
    norms = np.linalg.norm(quat, axis=0)
    off = np.abs(norms - 1.0) > QUAT_NORM_TOL
    if np.any(off):
        t = int(np.flatnonzero(off)[0])
        raise DataError(f"quaternion norm {norms[t]:.6g} at index {t} beyond "
                        f"tolerance {QUAT_NORM_TOL}")
    return quat / norms


def _rotate_series(vec: np.ndarray, quat: np.ndarray) -> np.ndarray:
    """Rotate each 3-vector sample into the world frame by its quaternion.

    ``vec`` is [3 x T], ``quat`` [4 x T] (w, x, y, z), unit-normalized by the
    caller. Uses v' = v + 2w (u x v) + 2 u x (u x v).
    """
    v = vec.T
    w = quat[0][:, None]
    u = quat[1:].T
    uv = np.cross(u, v)
    return (v + 2.0 * (w * uv + np.cross(u, uv))).T


def free_acceleration(acc: np.ndarray, quat: np.ndarray) -> np.ndarray:
    """World-frame acceleration with gravity removed.

    ``acc`` is [3 x T] in m/s^2, ``quat`` [4 x T] sensor-to-world. Each sample
    is rotated into the world frame, then (0, 0, 9.80665) is subtracted.
    """
    if acc.ndim != 2 or acc.shape[0] != 3:
        raise DataError(f"acceleration series must be [3 x T], got {acc.shape}")
    if acc.shape[1] != quat.shape[1]:
        raise DataError("acceleration and quaternion series lengths differ")
    q = _check_quaternions(quat)
    return _rotate_series(acc, q) - GRAVITY_VECTOR[:, None]


def free_angular_velocity(gyr: np.ndarray, quat: np.ndarray) -> np.ndarray:
    """World-frame angular velocity ([3 x T] deg/s); no gravity term."""
    if gyr.ndim != 2 or gyr.shape[0] != 3:
        raise DataError(f"angular velocity series must be [3 x T], got {gyr.shape}")
    if gyr.shape[1] != quat.shape[1]:
        raise DataError("angular velocity and quaternion series lengths differ")
    q = _check_quaternions(quat)
    return _rotate_series(gyr, q)


def inject_noise(seq: SensorSequence, std_acc: float, std_gyr: float,
                 rng: np.random.Generator) -> SensorSequence:
    """Add iid Gaussian noise to acceleration and gyroscope channels.

    Acceleration channels get N(0, std_acc), gyroscope channels N(0, std_gyr),
    drawn in that order from ``rng``; quaternion channels are never perturbed.
    A std of 0 leaves the corresponding group untouched.
    """
    if std_acc < 0 or std_gyr < 0:
        raise ConfigError("noise stds must be >= 0")
    out = np.array(seq.samples)
    _add_group_noise(out, seq.channels, std_acc, std_gyr, rng)
    return seq.with_samples(out)


def _add_group_noise(samples: np.ndarray, channels: tuple[str, ...],
                     std_acc: float, std_gyr: float,
                     rng: np.random.Generator) -> None:
    for roles, std in ((ACC_CHANNELS, std_acc), (GYR_CHANNELS, std_gyr)):
        if std > 0:
            rows = [channels.index(r) for r in roles]
            samples[rows] += rng.normal(0.0, std, size=(len(rows), samples.shape[1]))


def sequence_rng(master_seed: int, sequence_id: str) -> np.random.Generator:
    """Generator derived from (master seed, sequence id), order-independent."""
    digest = hashlib.sha256(sequence_id.encode("utf-8")).digest()
    id_entropy = int.from_bytes(digest[:8], "big")
    return np.random.default_rng(np.random.SeedSequence([master_seed, id_entropy]))


# ---------------------------------------------------------------------------
# Dataset-level composition


@dataclass(frozen=True)
class PreprocessResult:
    """Padded tensor plus the metadata needed to reuse or audit it."""

    tensor: np.ndarray          # [N x C x L] float64
    channels: tuple[str, ...]
    length: int
    ids: tuple[str, ...]
    labels: tuple[str, ...]
    phase: str
    config: PreprocessConfig

    def __post_init__(self) -> None:
        self.tensor.flags.writeable = False


def apply_config(ds: Dataset, cfg: PreprocessConfig, phase: str, seed: int, *,
                 channels: Optional[ChannelSet] = None,
                 target_len: Optional[int] = None) -> PreprocessResult:
    """Run the full preprocessing pipeline over a dataset.

    ``phase='train'`` pads to the dataset's own maximum length and applies
    configured noise; ``phase='eval'`` requires ``target_len`` (the training
    fold's length), never injects noise, and truncates longer sequences.
    ``channels`` selects the output rows after freeing and filtering, so
    freed signals can be computed from quaternions that are then dropped.
    """
    if phase not in PHASES:
        raise ConfigError(f"phase must be one of {PHASES}, got {phase!r}")
    if len(ds) == 0:
        raise DataError("cannot preprocess an empty dataset")
    cfg.validate_for_rate(ds.sample_rate)
    _check_required_channels(ds, cfg)

    if phase == "train":
        length = max(s.num_samples for s in ds)
        if target_len is not None and target_len != length:
            raise ConfigError("target_len is derived from the data in train phase")
    else:
        if target_len is None:
            raise ConfigError("eval phase requires the training fold's target_len")
        length = int(target_len)

    out_roles = channels.roles if channels is not None else ds.channels
    missing = [r for r in out_roles if r not in ds.channels]
    if missing:
        raise DataError(f"dataset lacks requested channels {missing}")
    out_rows = [ds.channels.index(r) for r in out_roles]

    tensor = np.empty((len(ds), len(out_roles), length), dtype=np.float64)
    for i, seq in enumerate(ds):
        arr = np.array(seq.samples)
        arr = _apply_freeing(arr, ds.channels, cfg)
        arr = _apply_filters(arr, ds.channels, cfg, ds.sample_rate)
        if phase == "train" and (cfg.noise_std_acc or cfg.noise_std_gyr):
            rng = sequence_rng(seed, seq.id)
            _add_group_noise(arr, ds.channels, cfg.noise_std_acc or 0.0,
                             cfg.noise_std_gyr or 0.0, rng)
        arr = arr[:, :length] if arr.shape[1] > length else \
            _pad_rows(arr, length, cfg.padding_mode)
        tensor[i] = arr[out_rows]

    return PreprocessResult(
        tensor=tensor, channels=tuple(out_roles), length=length,
        ids=ds.ids, labels=tuple(s.label for s in ds), phase=phase, config=cfg)


def _check_required_channels(ds: Dataset, cfg: PreprocessConfig) -> None:
    have = set(ds.channels)
    if cfg.free_acceleration and not (set(ACC_CHANNELS) | set(QUAT_CHANNELS)) <= have:
        raise ConfigError("free_acceleration needs acceleration and quaternion channels")
    if cfg.free_angular_velocity and not (set(GYR_CHANNELS) | set(QUAT_CHANNELS)) <= have:
        raise ConfigError("free_angular_velocity needs gyroscope and quaternion channels")
    if cfg.filter_cutoff_acc_hz is not None and not set(ACC_CHANNELS) <= have:
        raise ConfigError("filter_cutoff_acc_hz set but acceleration channels absent")
    if cfg.filter_cutoff_gyr_hz is not None and not set(GYR_CHANNELS) <= have:
        raise ConfigError("filter_cutoff_gyr_hz set but gyroscope channels absent")
    if (cfg.noise_std_acc is not None and not set(ACC_CHANNELS) <= have) or \
       (cfg.noise_std_gyr is not None and not set(GYR_CHANNELS) <= have):
        raise ConfigError("noise configured for channels absent from the dataset")


def _apply_freeing(arr: np.ndarray, channels: tuple[str, ...],
                   cfg: PreprocessConfig) -> np.ndarray:
    if not (cfg.free_acceleration or cfg.free_angular_velocity):
        return arr
    quat = arr[[channels.index(r) for r in QUAT_CHANNELS]]
    if cfg.free_acceleration:
        rows = [channels.index(r) for r in ACC_CHANNELS]
        arr[rows] = free_acceleration(arr[rows], quat)
    if cfg.free_angular_velocity:
        rows = [channels.index(r) for r in GYR_CHANNELS]
        arr[rows] = free_angular_velocity(arr[rows], quat)
    return arr


def _apply_filters(arr: np.ndarray, channels: tuple[str, ...],
                   cfg: PreprocessConfig, sample_rate: float) -> np.ndarray:
    for roles, cutoff in ((ACC_CHANNELS, cfg.filter_cutoff_acc_hz),
                          (GYR_CHANNELS, cfg.filter_cutoff_gyr_hz)):
        if cutoff is not None:
            rows = [channels.index(r) for r in roles]
            arr[rows] = _filtfilt_rows(arr[rows], cutoff, sample_rate)
    return arr
