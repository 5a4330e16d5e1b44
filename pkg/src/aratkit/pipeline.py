"""End-to-end fitted pipeline: preprocessing config + transform + classifier.

A FittedPipeline is what one cross-validation fold trains and what ``fit``
persists: everything needed to turn raw sequences into label predictions.
All fitted state (padding length, biases, standardizer, lambda) derives from
training data only; evaluation data is padded or truncated to the training
length and never sees noise injection.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import rocket
from .classifier import RidgeModel, Standardizer, predict, ridge_fit, standardize_fit
from .data_model import ChannelSet, Dataset
from .errors import DataError
from .preprocess import PreprocessConfig, apply_config

PIPELINE_FORMAT = "aratkit-pipeline"


def derive_seeds(seed: int, count: int) -> list[int]:
    """Deterministic child seeds from a master seed."""
    children = np.random.SeedSequence(seed).spawn(count)
    return [int(c.generate_state(1, np.uint32)[0]) for c in children]


@dataclass(frozen=True)
class FittedPipeline:
    config: PreprocessConfig
    channel_set: Optional[ChannelSet]
    fitted_length: int
    rocket_model: rocket.RocketModel
    standardizer: Standardizer
    ridge: RidgeModel
    seed: int

    @property
    def num_features(self) -> int:
        return self.rocket_model.num_features


def fit_pipeline(train_ds: Dataset, cfg: PreprocessConfig,
                 channels: Optional[ChannelSet] = None, *,
                 feature_count: int = rocket.DEFAULT_NUM_FEATURES,
                 seed: int = 42,
                 lambda_grid: Optional[Sequence[float]] = None) -> FittedPipeline:
    """Train preprocessing, transform, and classifier on one training set."""
    noise_seed, rocket_seed = derive_seeds(seed, 2)
    prep = apply_config(train_ds, cfg, "train", noise_seed, channels=channels)
    model = rocket.fit(prep.tensor, target_features=feature_count,
                       seed=rocket_seed)
    features = rocket.transform(model, prep.tensor)
    standardizer = standardize_fit(features)
    ridge = ridge_fit(standardizer.apply(features), list(prep.labels),
                      lambda_grid)
    return FittedPipeline(config=cfg, channel_set=channels,
                          fitted_length=prep.length, rocket_model=model,
                          standardizer=standardizer, ridge=ridge, seed=seed)


def predict_pipeline(pipe: FittedPipeline, ds: Dataset
                     ) -> tuple[tuple[str, ...], tuple[str, ...], tuple[str, ...]]:
    """Predict labels for a dataset; returns (ids, truths, predictions)."""
    prep = apply_config(ds, pipe.config, "eval", 0, channels=pipe.channel_set,
                        target_len=pipe.fitted_length)
    features = rocket.transform(pipe.rocket_model, prep.tensor)
    preds = predict(pipe.ridge, pipe.standardizer, features)
    return prep.ids, prep.labels, tuple(preds)


def save_pipeline(pipe: FittedPipeline, path: str | Path) -> None:
    """Self-contained JSON bundle; floats round-trip bit-exactly."""
    payload = {
        "format": PIPELINE_FORMAT,
        "version": 1,
        "seed": pipe.seed,
        "config": pipe.config.to_text(),
        "channel_set": pipe.channel_set.value if pipe.channel_set else None,
        "fitted_length": pipe.fitted_length,
        "rocket_model": pipe.rocket_model.to_dict(),
        "rocket_sha256": pipe.rocket_model.sha256(),
        "standardizer": {
            "mean": [float(v) for v in pipe.standardizer.mean],
            "std": [float(v) for v in pipe.standardizer.std],
        },
        "ridge": {
            "weights": [[float(v) for v in row] for row in pipe.ridge.weights],
            "intercepts": [float(v) for v in pipe.ridge.intercepts],
            "chosen_lambda": pipe.ridge.chosen_lambda,
            "class_order": list(pipe.ridge.class_order),
            "loo_mse": [[lam, mse] for lam, mse in pipe.ridge.loo_mse],
        },
    }
    Path(path).write_text(json.dumps(payload, sort_keys=True))


def load_pipeline(path: str | Path) -> FittedPipeline:
    data = json.loads(Path(path).read_text())
    if data.get("format") != PIPELINE_FORMAT:
        raise DataError(f"{path}: not a pipeline bundle")
    model = rocket.RocketModel.from_dict(data["rocket_model"])
    if model.sha256() != data["rocket_sha256"]:
        raise DataError(f"{path}: rocket model hash mismatch")
    ridge = RidgeModel(
        weights=np.array(data["ridge"]["weights"], dtype=np.float64),
        intercepts=np.array(data["ridge"]["intercepts"], dtype=np.float64),
        chosen_lambda=float(data["ridge"]["chosen_lambda"]),
        class_order=tuple(data["ridge"]["class_order"]),
        loo_mse=tuple((float(l), float(m)) for l, m in data["ridge"]["loo_mse"]),
    )
    standardizer = Standardizer(
        mean=np.array(data["standardizer"]["mean"], dtype=np.float64),
        std=np.array(data["standardizer"]["std"], dtype=np.float64),
    )
    channel_set = (ChannelSet.parse(data["channel_set"])
                   if data["channel_set"] else None)
    return FittedPipeline(
        config=PreprocessConfig.from_text(data["config"]),
        channel_set=channel_set,
        fitted_length=int(data["fitted_length"]),
        rocket_model=model,
        standardizer=standardizer,
        ridge=ridge,
        seed=int(data["seed"]),
    )
