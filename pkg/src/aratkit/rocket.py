"""Random-convolutional-kernel transform with PPV pooling.

The transform applies all 84 distinct length-9 kernels whose weights are
three +2 entries and six -1 entries (so every kernel sums to zero), at a
fixed ladder of dilations derived from the input length, over seeded random
channel subsets. For each (kernel, dilation) pair a handful of biases is
drawn from the quantiles of the pair's convolution output on one random
training example, and each feature is the proportion of convolution outputs
strictly greater than its bias.

Feature layout is (dilation-major, kernel-minor): pair p = d_idx * 84 + k_idx
owns the contiguous block of ``features_per_dilation[d_idx]`` features, and
pair padding flags alternate with p so roughly half the features pool the
symmetrically zero-padded convolution (length L) and half the valid
convolution (length L - 8d). Fitting and transforming are pure functions of
(data, seed, target_features).
"""

from __future__ import annotations

import hashlib
import itertools
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from numba import njit, prange

from .errors import ConfigError, DataError

KERNEL_LENGTH = 9
KERNEL_CENTER = 4           # tap offset (j - 4) * d centers padded outputs
NUM_KERNELS = 84            # C(9, 3) three-positive-weight patterns
POSITIVE_WEIGHT = 2
NEGATIVE_WEIGHT = -1
BIAS_QUANTILES = (0.25, 0.5, 0.75)
MAX_DILATIONS_PER_KERNEL = 32

# Largest multiple of 84 * 3 (kernels x bias quantiles) not exceeding 10,000.
DEFAULT_NUM_FEATURES = 9828

ChannelAssignments = tuple[tuple[int, ...], ...]


@dataclass(frozen=True)
class KernelPattern:
    """Nine integer weights: exactly three +2 entries, six -1 entries."""

    weights: tuple[int, ...]

    def __post_init__(self) -> None:
        if len(self.weights) != KERNEL_LENGTH:
            raise ConfigError(f"kernel must have {KERNEL_LENGTH} weights")
        pos = self.positive_indices
        if len(pos) != 3 or any(w not in (POSITIVE_WEIGHT, NEGATIVE_WEIGHT)
                                for w in self.weights):
            raise ConfigError(f"kernel weights must be three {POSITIVE_WEIGHT} and "
                              f"six {NEGATIVE_WEIGHT}, got {self.weights}")

    @property
    def positive_indices(self) -> tuple[int, ...]:
        return tuple(i for i, w in enumerate(self.weights) if w == POSITIVE_WEIGHT)


def enumerate_kernels() -> list[KernelPattern]:
    """All 84 patterns, in lexicographic order of their +2 index triples."""
    kernels = []
    for triple in itertools.combinations(range(KERNEL_LENGTH), 3):
        weights = [NEGATIVE_WEIGHT] * KERNEL_LENGTH
        for i in triple:
            weights[i] = POSITIVE_WEIGHT
        kernels.append(KernelPattern(tuple(weights)))
    return kernels


def _weight_matrix(kernels: Sequence[KernelPattern]) -> np.ndarray:
    return np.array([k.weights for k in kernels], dtype=np.float64)


@dataclass(frozen=True)
class DilationPlan:
    """Dilation ladder, per-dilation feature budget, and padding flags.

    ``features_per_dilation[i]`` is the per-kernel feature count at dilation
    ``dilations[i]``; ``padding_flags[i, k]`` says whether pair (kernel k,
    dilation i) pools the zero-padded convolution.
    """

    input_length: int
    dilations: np.ndarray            # [D] int32, ascending, deduplicated
    features_per_dilation: np.ndarray  # [D] int32, positive
    padding_flags: np.ndarray        # [D x 84] bool

    def __post_init__(self) -> None:
        for name in ("dilations", "features_per_dilation", "padding_flags"):
            arr = getattr(self, name)
            arr.flags.writeable = False
        if self.dilations.size == 0 or np.any(self.features_per_dilation <= 0):
            raise ConfigError("dilation plan must have positive feature budgets")
        max_d = int(self.dilations[-1])
        if (KERNEL_LENGTH - 1) * max_d > self.input_length - 1:
            raise ConfigError(f"dilation {max_d} exceeds span for length "
                              f"{self.input_length}")
        if self.padding_flags.shape != (self.dilations.size, NUM_KERNELS):
            raise ConfigError("padding_flags must be [num_dilations x 84]")

    @property
    def num_pairs(self) -> int:
        return self.dilations.size * NUM_KERNELS

    @property
    def num_features(self) -> int:
        return int(NUM_KERNELS * self.features_per_dilation.sum())

    def feature_offsets(self) -> np.ndarray:
        """Start offsets of each pair's feature block, dilation-major."""
        per_pair = np.repeat(self.features_per_dilation.astype(np.int64), NUM_KERNELS)
        return np.concatenate([[0], np.cumsum(per_pair)])


def plan_dilations(input_length: int, target_features: int = DEFAULT_NUM_FEATURES, *,
                   max_dilations_per_kernel: int = MAX_DILATIONS_PER_KERNEL
                   ) -> DilationPlan:
    """Build the dilation ladder and split the feature budget across it.

    Dilations are floor(2^e) for exponents uniformly spaced over
    [0, log2((L-1)/8)], deduplicated ascending. Each kernel's budget
    (target_features / 84) is spread over dilations proportionally to how
    many exponents collapsed onto each, in multiples of the three bias
    quantiles, remainders round-robin from the smallest dilation. The number
    of exponent samples is capped to keep plans small for long inputs.
    """
    if input_length < KERNEL_LENGTH:
        raise DataError(f"input length {input_length} below kernel span "
                        f"{KERNEL_LENGTH}")
    if target_features < NUM_KERNELS or target_features % NUM_KERNELS != 0:
        raise ConfigError(f"target_features must be a positive multiple of "
                          f"{NUM_KERNELS}, got {target_features}")
    per_kernel = target_features // NUM_KERNELS
    triples, extra = divmod(per_kernel, len(BIAS_QUANTILES))
    num_samples = max(1, min(triples, max_dilations_per_kernel))

    max_exponent = np.log2((input_length - 1) / (KERNEL_LENGTH - 1))
    exponents = np.linspace(0.0, max_exponent, num_samples)
    dilations, counts = np.unique(np.floor(2.0 ** exponents).astype(np.int32),
                                  return_counts=True)

    triple_alloc = (counts * triples) // num_samples
    shortfall = triples - int(triple_alloc.sum())
    for i in range(shortfall):
        triple_alloc[i % len(triple_alloc)] += 1
    features = (len(BIAS_QUANTILES) * triple_alloc).astype(np.int32)
    for i in range(extra):
        features[i % len(features)] += 1

    pair_index = (np.arange(len(dilations))[:, None] * NUM_KERNELS
                  + np.arange(NUM_KERNELS)[None, :])
    padding_flags = (pair_index % 2) == 0
    return DilationPlan(input_length=int(input_length),
                        dilations=dilations.astype(np.int32),
                        features_per_dilation=features,
                        padding_flags=padding_flags)


def assign_channels(num_channels: int, plan: DilationPlan,
                    rng: np.random.Generator) -> ChannelAssignments:
    """Seeded channel subset per (kernel, dilation) pair, dilation-major.

    Subset size is uniform on {1..min(num_channels, 9)} and the subset itself
    is a uniform draw without replacement, stored ascending.
    """
    if num_channels < 1:
        raise DataError(f"num_channels must be >= 1, got {num_channels}")
    max_size = min(num_channels, KERNEL_LENGTH)
    assignments = []
    for _ in range(plan.num_pairs):
        size = int(rng.integers(1, max_size + 1))
        subset = np.sort(rng.choice(num_channels, size=size, replace=False))
        assignments.append(tuple(int(c) for c in subset))
    return tuple(assignments)


def dilated_convolve(x: np.ndarray, kernel: KernelPattern, dilation: int,
                     pad: bool) -> np.ndarray:
    """Dilated 1-D convolution y[t] = sum_j w[j] * x[t + (j-4)*d].

    With ``pad`` the out-of-range taps read as zero and the output has the
    input's length; without it only fully supported positions are returned
    (length L - 8d).
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise DataError(f"series must be 1-D, got shape {x.shape}")
    if dilation < 1:
        raise DataError(f"dilation must be >= 1, got {dilation}")
    length = x.size
    if pad:
        y = np.zeros(length, dtype=np.float64)
        for j, w in enumerate(kernel.weights):
            off = (j - KERNEL_CENTER) * dilation
            if off >= 0:
                y[: length - off] += w * x[off:]
            else:
                y[-off:] += w * x[: length + off]
        return y
    n_valid = length - (KERNEL_LENGTH - 1) * dilation
    if n_valid < 1:
        raise DataError(f"series of length {length} too short for valid "
                        f"convolution at dilation {dilation}")
    y = np.zeros(n_valid, dtype=np.float64)
    for j, w in enumerate(kernel.weights):
        y += w * x[j * dilation: j * dilation + n_valid]
    return y


def ppv(conv_output: np.ndarray, bias: float) -> float:
    """Proportion of positions strictly greater than the bias."""
    conv_output = np.asarray(conv_output, dtype=np.float64)
    if conv_output.size == 0:
        raise DataError("PPV of an empty series is undefined")
    return float(np.mean(conv_output > bias))


def _pair_quantiles(budget: int) -> np.ndarray:
    return np.array([BIAS_QUANTILES[i % len(BIAS_QUANTILES)] for i in range(budget)])


def fit_biases(train_tensor: np.ndarray, kernels: Sequence[KernelPattern],
               plan: DilationPlan, assignments: ChannelAssignments,
               rng: np.random.Generator) -> np.ndarray:
    """Bias table from quantiles of per-pair convolutions on random examples.

    Pairs are visited dilation-major, kernel-minor; each draws one training
    example, convolves its channel-summed signal (padded or valid per the
    pair's flag), and fills its feature block by cycling the 0.25/0.5/0.75
    quantiles of that output.
    """
    X = np.asarray(train_tensor, dtype=np.float64)
    if X.ndim != 3 or X.shape[0] < 1:
        raise DataError(f"train tensor must be [N x C x L] with N >= 1, "
                        f"got shape {X.shape}")
    if X.shape[2] != plan.input_length:
        raise DataError(f"tensor length {X.shape[2]} does not match plan "
                        f"length {plan.input_length}")
    if len(assignments) != plan.num_pairs:
        raise DataError("one channel assignment per (kernel, dilation) pair required")
    offsets = plan.feature_offsets()
    biases = np.empty(plan.num_features, dtype=np.float64)
    pair = 0
    for d_idx in range(plan.dilations.size):
        dilation = int(plan.dilations[d_idx])
        budget = int(plan.features_per_dilation[d_idx])
        quantiles = _pair_quantiles(budget)
        for k_idx in range(NUM_KERNELS):
            example = int(rng.integers(X.shape[0]))
            z = X[example, list(assignments[pair])].sum(axis=0)
            y = dilated_convolve(z, kernels[k_idx], dilation,
                                 bool(plan.padding_flags[d_idx, k_idx]))
            biases[offsets[pair]: offsets[pair + 1]] = np.quantile(y, quantiles)
            pair += 1
    return biases


@dataclass(frozen=True)
class RocketModel:
    """Fitted transform: kernels, dilation plan, channel subsets, biases."""

    kernels: tuple[KernelPattern, ...]
    plan: DilationPlan
    channel_assignments: ChannelAssignments
    biases: np.ndarray
    fitted_length: int
    num_channels: int
    seed: int

    def __post_init__(self) -> None:
        self.biases.flags.writeable = False
        if len(self.kernels) != NUM_KERNELS:
            raise ConfigError(f"model must carry {NUM_KERNELS} kernels")
        if self.biases.size != self.plan.num_features:
            raise ConfigError(f"bias count {self.biases.size} does not match "
                              f"feature count {self.plan.num_features}")
        if len(self.channel_assignments) != self.plan.num_pairs:
            raise ConfigError("one channel subset per (kernel, dilation) pair required")
        for subset in self.channel_assignments:
            if not subset or min(subset) < 0 or max(subset) >= self.num_channels:
                raise ConfigError(f"channel subset {subset} outside "
                                  f"0..{self.num_channels - 1}")
        if self.fitted_length != self.plan.input_length:
            raise ConfigError("fitted_length must match the plan's input length")

    @property
    def num_features(self) -> int:
        return int(self.biases.size)

    def to_dict(self) -> dict:
        return {
            "format": "aratkit-rocket-model",
            "version": 1,
            "seed": self.seed,
            "num_channels": self.num_channels,
            "fitted_length": self.fitted_length,
            "dilations": [int(d) for d in self.plan.dilations],
            "features_per_dilation": [int(f) for f in self.plan.features_per_dilation],
            "padding_flags": [[bool(b) for b in row] for row in self.plan.padding_flags],
            "kernels": [list(k.weights) for k in self.kernels],
            "channel_assignments": [list(a) for a in self.channel_assignments],
            "biases": [float(b) for b in self.biases],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "RocketModel":
        if data.get("format") != "aratkit-rocket-model":
            raise DataError("not a rocket model file")
        plan = DilationPlan(
            input_length=int(data["fitted_length"]),
            dilations=np.array(data["dilations"], dtype=np.int32),
            features_per_dilation=np.array(data["features_per_dilation"],
                                           dtype=np.int32),
            padding_flags=np.array(data["padding_flags"], dtype=bool),
        )
        return cls(
            kernels=tuple(KernelPattern(tuple(w)) for w in data["kernels"]),
            plan=plan,
            channel_assignments=tuple(tuple(int(c) for c in a)
                                      for a in data["channel_assignments"]),
            biases=np.array(data["biases"], dtype=np.float64),
            fitted_length=int(data["fitted_length"]),
            num_channels=int(data["num_channels"]),
            seed=int(data["seed"]),
        )

    def canonical_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    def sha256(self) -> str:
        return hashlib.sha256(self.canonical_json().encode("utf-8")).hexdigest()

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.canonical_json())

    @classmethod
    def load(cls, path: str | Path) -> "RocketModel":
        return cls.from_dict(json.loads(Path(path).read_text()))


def fit(train_tensor: np.ndarray, num_channels: Optional[int] = None,
        target_features: int = DEFAULT_NUM_FEATURES, seed: int = 0) -> RocketModel:
    """Fit the transform on a padded training tensor [N x C x L]."""
    X = np.asarray(train_tensor, dtype=np.float64)
    if X.ndim != 3 or X.shape[0] < 1:
        raise DataError(f"train tensor must be [N x C x L], got shape {X.shape}")
    if num_channels is None:
        num_channels = X.shape[1]
    elif num_channels != X.shape[1]:
        raise DataError(f"num_channels {num_channels} does not match tensor "
                        f"channel count {X.shape[1]}")
    plan = plan_dilations(X.shape[2], target_features)
    channel_ss, bias_ss = np.random.SeedSequence(seed).spawn(2)
    kernels = tuple(enumerate_kernels())
    assignments = assign_channels(num_channels, plan,
                                  np.random.default_rng(channel_ss))
    biases = fit_biases(X, kernels, plan, assignments,
                        np.random.default_rng(bias_ss))
    return RocketModel(kernels=kernels, plan=plan,
                       channel_assignments=assignments, biases=biases,
                       fitted_length=int(X.shape[2]),
                       num_channels=int(num_channels), seed=int(seed))


def transform(model: RocketModel, tensor: np.ndarray) -> np.ndarray:
    """PPV feature matrix [N x num_features] for a padded tensor.

    Pure and parallelizable: each sequence's row is computed independently,
    so results do not depend on batch order, batch partitioning, or worker
    count.
    """
    X = np.ascontiguousarray(np.asarray(tensor, dtype=np.float64))
    if X.ndim != 3:
        raise DataError(f"tensor must be [N x C x L], got shape {X.shape}")
    if X.shape[1] != model.num_channels:
        raise DataError(f"tensor has {X.shape[1]} channels, model was fitted "
                        f"on {model.num_channels}")
    if X.shape[2] != model.fitted_length:
        raise DataError(f"tensor length {X.shape[2]} does not match fitted "
                        f"length {model.fitted_length}")
    sizes = np.array([len(a) for a in model.channel_assignments], dtype=np.int32)
    flat = np.array([c for a in model.channel_assignments for c in a],
                    dtype=np.int32)
    channel_offsets = np.concatenate([[0], np.cumsum(sizes)]).astype(np.int64)
    return _transform_kernel(
        X,
        _weight_matrix(model.kernels),
        model.plan.dilations.astype(np.int64),
        np.ascontiguousarray(model.plan.padding_flags.reshape(-1)),
        flat,
        channel_offsets,
        model.plan.feature_offsets(),
        np.asarray(model.biases, dtype=np.float64),
    )


@njit(cache=True, parallel=True, nogil=True)
def _transform_kernel(X, wmat, dilations, pad_flags, ch_flat, ch_offsets,
                      feat_offsets, biases):  # pragma: no cover - numba
    n_seq, _, length = X.shape
    num_pairs = pad_flags.size
    num_features = biases.size
    out = np.zeros((n_seq, num_features), dtype=np.float64)
    for n in prange(n_seq):
        z = np.empty(length, dtype=np.float64)
        y = np.empty(length, dtype=np.float64)
        for p in range(num_pairs):
            d_idx = p // NUM_KERNELS
            k_idx = p % NUM_KERNELS
            dilation = dilations[d_idx]
            # channel-summed signal for this pair
            for t in range(length):
                z[t] = 0.0
            for ci in range(ch_offsets[p], ch_offsets[p + 1]):
                c = ch_flat[ci]
                for t in range(length):
                    z[t] += X[n, c, t]
            # dilated convolution, padded or valid
            if pad_flags[p]:
                n_pool = length
                for t in range(length):
                    acc = 0.0
                    for j in range(KERNEL_LENGTH):
                        idx = t + (j - KERNEL_CENTER) * dilation
                        if 0 <= idx < length:
                            acc += wmat[k_idx, j] * z[idx]
                    y[t] = acc
            else:
                n_pool = length - (KERNEL_LENGTH - 1) * dilation
                for t in range(n_pool):
                    acc = 0.0
                    for j in range(KERNEL_LENGTH):
                        acc += wmat[k_idx, j] * z[t + j * dilation]
                    y[t] = acc
            # PPV per feature in this pair's block
            for f in range(feat_offsets[p], feat_offsets[p + 1]):
                bias = biases[f]
                count = 0
                for t in range(n_pool):
                    if y[t] > bias:
                        count += 1
                out[n, f] = count / n_pool
    return out
