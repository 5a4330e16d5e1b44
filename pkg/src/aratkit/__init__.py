"""MiniROCKET classification pipeline for wrist-IMU movement-item recordings.

A numpy/scipy library plus a CLI covering the whole workflow: dataset
ingestion and validation, the preprocessing grid (padding, filtering,
gravity freeing, noise), the 84-kernel PPV transform, ridge classification,
seeded 10-fold cross-validation with item- and domain-level confusion
matrices, grid search, and synthetic data generation.
"""

__version__ = "0.1.0"

from .classifier import (
    RidgeModel,
    Standardizer,
    predict,
    ridge_fit,
    standardize_fit,
)
from .data_model import (
    ChannelSet,
    Dataset,
    Domain,
    LabelTaxonomy,
    SensorSequence,
    domain_of,
    validate_sequence,
)
from .errors import AratkitError, ConfigError, DataError
from .evaluation import (
    ConfusionMatrix,
    CvReport,
    FoldPlan,
    aggregate_domains,
    confusion,
    grid_search,
    make_folds,
    run_cv,
)
from .ingest import (
    balance_junk,
    load_dataset,
    select_channels,
    truncate_longest,
    write_dataset,
)
from .pipeline import (
    FittedPipeline,
    fit_pipeline,
    load_pipeline,
    predict_pipeline,
    save_pipeline,
)
from .preprocess import (
    PreprocessConfig,
    apply_config,
    butterworth_lowpass,
    enumerate_grid,
    free_acceleration,
    free_angular_velocity,
    inject_noise,
    pad_to_length,
)
from .rocket import (
    DilationPlan,
    KernelPattern,
    RocketModel,
    assign_channels,
    dilated_convolve,
    enumerate_kernels,
    fit,
    fit_biases,
    plan_dilations,
    ppv,
    transform,
)
from .synth import SynthSpec, generate

__all__ = [
    "__version__",
    "AratkitError", "ConfigError", "DataError",
    "ChannelSet", "Dataset", "Domain", "LabelTaxonomy", "SensorSequence",
    "domain_of", "validate_sequence",
    "balance_junk", "load_dataset", "select_channels", "truncate_longest",
    "write_dataset",
    "PreprocessConfig", "apply_config", "butterworth_lowpass",
    "enumerate_grid", "free_acceleration", "free_angular_velocity",
    "inject_noise", "pad_to_length",
    "DilationPlan", "KernelPattern", "RocketModel", "assign_channels",
    "dilated_convolve", "enumerate_kernels", "fit", "fit_biases",
    "plan_dilations", "ppv", "transform",
    "RidgeModel", "Standardizer", "predict", "ridge_fit", "standardize_fit",
    "FittedPipeline", "fit_pipeline", "load_pipeline", "predict_pipeline",
    "save_pipeline",
    "ConfusionMatrix", "CvReport", "FoldPlan", "aggregate_domains",
    "confusion", "grid_search", "make_folds", "run_cv",
    "SynthSpec", "generate",
]
