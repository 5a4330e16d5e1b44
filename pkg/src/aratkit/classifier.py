"""Linear multiclass classification over PPV features.

Features are standardized (population convention, constant columns clamped),
targets are one-hot, and the weights solve a ridge-regularized least-squares
problem with an unpenalized intercept. The regularization strength is picked
from a log grid by the closed-form leave-one-out residual shortcut, which
reuses one SVD of the centered feature matrix for every candidate.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import DataError

DEFAULT_LAMBDA_GRID = tuple(float(v) for v in np.logspace(-3.0, 3.0, 10))
CONSTANT_STD_FLOOR = 1e-12


@dataclass(frozen=True)
class Standardizer:
    """Per-feature training mean and population std (constants clamped to 1)."""

    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self) -> None:
        self.mean.flags.writeable = False
        self.std.flags.writeable = False

    def apply(self, features: np.ndarray) -> np.ndarray:
        X = np.asarray(features, dtype=np.float64)
        if X.shape[-1] != self.mean.size:
            raise DataError(f"feature count {X.shape[-1]} does not match "
                            f"standardizer width {self.mean.size}")
        return (X - self.mean) / self.std


def standardize_fit(features: np.ndarray) -> Standardizer:
    X = np.asarray(features, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < 1:
        raise DataError(f"features must be [N x F] with N >= 1, got {X.shape}")
    std = X.std(axis=0)
    std = np.where(std < CONSTANT_STD_FLOOR, 1.0, std)
    return Standardizer(mean=X.mean(axis=0), std=std)


@dataclass(frozen=True)
class RidgeModel:
    """Weights [F x K], intercepts [K], and the selected regularization."""

    weights: np.ndarray
    intercepts: np.ndarray
    chosen_lambda: float
    class_order: tuple[str, ...]
    loo_mse: tuple[tuple[float, float], ...] = ()

    def __post_init__(self) -> None:
        self.weights.flags.writeable = False
        self.intercepts.flags.writeable = False
        if not np.all(np.isfinite(self.weights)):
            raise DataError("ridge weights must be finite")
        if self.weights.shape[1] != len(self.class_order):
            raise DataError("one weight column per class required")

    def scores(self, features: np.ndarray) -> np.ndarray:
        X = np.asarray(features, dtype=np.float64)
        if X.shape[1] != self.weights.shape[0]:
            raise DataError(f"feature count {X.shape[1]} does not match model "
                            f"width {self.weights.shape[0]}")
        return X @ self.weights + self.intercepts


def ridge_fit(features: np.ndarray, labels: Sequence[str],
              lambda_grid: Optional[Sequence[float]] = None) -> RidgeModel:
    """Closed-form multiclass ridge with leave-one-out lambda selection.

    One SVD of the centered features serves every grid candidate: the hat
    diagonal is 1/N + sum_k U_ik^2 s_k^2/(s_k^2 + lambda), and the exact
    leave-one-out residual is (y - yhat) / (1 - h). The lambda with the
    smallest mean squared LOO residual wins (first in grid order on ties).
    The intercept is unpenalized via centering.
    """
    X = np.asarray(features, dtype=np.float64)
    labels = list(labels)
    if X.ndim != 2 or X.shape[0] != len(labels):
        raise DataError(f"features {X.shape} and labels ({len(labels)}) disagree")
    class_order = tuple(sorted(set(labels)))
    if len(class_order) < 2:
        raise DataError("ridge_fit needs at least 2 distinct labels")
    n = X.shape[0]
    if n < len(class_order):
        raise DataError(f"need at least one sample per class: N={n}, "
                        f"classes={len(class_order)}")
    grid = [float(v) for v in (lambda_grid if lambda_grid is not None
                               else DEFAULT_LAMBDA_GRID)]
    if not grid or any(v <= 0 for v in grid):
        raise DataError("lambda grid must be non-empty and positive")

    index = {c: i for i, c in enumerate(class_order)}
    Y = np.zeros((n, len(class_order)), dtype=np.float64)
    Y[np.arange(n), [index[l] for l in labels]] = 1.0

    x_mean = X.mean(axis=0)
    y_mean = Y.mean(axis=0)
    Xc = X - x_mean
    Yc = Y - y_mean

    U, s, Vt = np.linalg.svd(Xc, full_matrices=False)
    if s.size and s[0] > 0:
        keep = s > s[0] * 1e-12
        U, s, Vt = U[:, keep], s[keep], Vt[keep]
    s2 = s ** 2
    coeff = U.T @ Yc
    U2 = U ** 2

    loo_mse: list[tuple[float, float]] = []
    best_lambda, best_mse = grid[0], np.inf
    for lam in grid:
        shrink = s2 / (s2 + lam)
        resid = Yc - U @ (shrink[:, None] * coeff)
        h = 1.0 / n + U2 @ shrink
        denom = np.maximum(1.0 - h, 1e-12)
        mse = float(np.mean((resid / denom[:, None]) ** 2))
        loo_mse.append((lam, mse))
        if mse < best_mse:
            best_lambda, best_mse = lam, mse

    weights = Vt.T @ ((s / (s2 + best_lambda))[:, None] * coeff)
    intercepts = y_mean - x_mean @ weights
    return RidgeModel(weights=weights, intercepts=intercepts,
                      chosen_lambda=best_lambda, class_order=class_order,
                      loo_mse=tuple(loo_mse))


def predict(model: RidgeModel, standardizer: Optional[Standardizer],
            features: np.ndarray) -> list[str]:
    """Argmax class per row; ties resolve to the first class in class_order."""
    X = np.asarray(features, dtype=np.float64)
    if standardizer is not None:
        X = standardizer.apply(X)
    scores = model.scores(X)
    return [model.class_order[i] for i in np.argmax(scores, axis=1)]
