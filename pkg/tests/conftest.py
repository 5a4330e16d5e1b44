import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from aratkit import Dataset, LabelTaxonomy, SensorSequence, SynthSpec, generate
from aratkit.data_model import ALL_CHANNELS


def make_sequence(seq_id="s0", length=40, label=None, value=None, seed=0,
                  sample_rate=60.0, side="left", score=2, subject="subjA"):
    """Well-formed 10-channel sequence with unit quaternions."""
    taxonomy = LabelTaxonomy.default()
    rng = np.random.default_rng(seed)
    samples = np.zeros((10, length))
    if value is not None:
        samples[:6] = value
    else:
        samples[:6] = rng.standard_normal((6, length))
    samples[6] = 1.0  # identity quaternion
    return SensorSequence(
        id=seq_id, samples=samples, channels=ALL_CHANNELS,
        label=label or taxonomy.items[0], subject_id=subject, side=side,
        score=score, sample_rate=sample_rate)


def make_dataset(n=12, num_labels=3, length=40, junk=0, seed=0,
                 lengths=None):
    taxonomy = LabelTaxonomy.default()
    sequences = []
    for i in range(n):
        seq_len = lengths[i] if lengths is not None else length
        sequences.append(make_sequence(
            seq_id=f"s{i:03d}", length=seq_len,
            label=taxonomy.items[i % num_labels], seed=seed + i))
    for j in range(junk):
        seq_len = lengths[n + j] if lengths is not None else length
        sequences.append(make_sequence(
            seq_id=f"j{j:03d}", length=seq_len, label="junk",
            seed=seed + n + j, score=None))
    return Dataset(tuple(sequences), taxonomy)


EASY_SPEC = SynthSpec(num_classes=5, sequences_per_class=40,
                      length_median=150, length_sigma=0.35,
                      class_frequencies=(0.5, 1.0, 2.0, 4.0, 8.0),
                      noise_floor=0.0, seed=42)

TINY_SPEC = SynthSpec(num_classes=3, sequences_per_class=8,
                      length_median=60, length_sigma=0.2,
                      class_frequencies=(1.0, 3.0, 9.0),
                      noise_floor=0.0, seed=11)


@pytest.fixture(scope="session")
def easy_dataset():
    """5 classes x 40 sequences with well-separated frequencies."""
    return generate(EASY_SPEC)


@pytest.fixture(scope="session")
def tiny_dataset():
    """3 classes x 8 short sequences for fast pipeline tests."""
    return generate(TINY_SPEC)


@pytest.fixture()
def taxonomy():
    return LabelTaxonomy.default()


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """One PASS/FAIL line per acceptance criterion at the end of the run."""
    lines = {}
    for status, verdict in (("passed", "PASS"), ("failed", "FAIL"),
                            ("error", "FAIL")):
        for report in terminalreporter.stats.get(status, []):
            nodeid = getattr(report, "nodeid", "")
            if "test_acceptance" in nodeid and "criterion" in nodeid:
                name = nodeid.split("::")[-1].replace("test_", "")
                lines[name] = verdict
    if lines:
        terminalreporter.write_sep("-", "acceptance criteria")
        for name in sorted(lines):
            terminalreporter.write_line(f"{name}: {lines[name]}")
