import numpy as np
import pytest

from aratkit import (
    DataError,
    predict,
    ridge_fit,
    standardize_fit,
)
from aratkit.classifier import DEFAULT_LAMBDA_GRID

from oracles import brute_loo_mse, normal_equation_ridge, one_hot


def two_clusters(n_per=10, gap=10.0, seed=0):
    rng = np.random.default_rng(seed)
    a = rng.standard_normal((n_per, 1))
    b = rng.standard_normal((n_per, 1)) + gap
    X = np.vstack([a, b])
    labels = ["low"] * n_per + ["high"] * n_per
    return X, labels


class TestStandardizer:
    def test_hand_values_population_convention(self):
        std = standardize_fit(np.array([[1.0], [3.0]]))
        assert std.mean[0] == 2.0
        assert std.std[0] == 1.0  # population (1/N) convention
        assert std.apply(np.array([[1.0], [3.0]])).ravel().tolist() == [-1.0, 1.0]

    def test_constant_column_clamped(self):
        X = np.full((5, 2), 7.0)
        X[:, 1] = np.arange(5)
        std = standardize_fit(X)
        out = std.apply(X)
        assert np.all(out[:, 0] == 0.0)
        assert std.std[0] == 1.0

    def test_fit_data_zero_mean(self):
        rng = np.random.default_rng(2)
        X = rng.standard_normal((30, 6)) * 5 + 3
        out = standardize_fit(X).apply(X)
        assert np.max(np.abs(out.mean(axis=0))) < 1e-9

    def test_width_mismatch_rejected(self):
        std = standardize_fit(np.zeros((3, 4)))
        with pytest.raises(DataError):
            std.apply(np.zeros((3, 5)))


class TestRidgeFit:
    def test_separable_clusters_perfect_training_accuracy(self):
        X, labels = two_clusters()
        model = ridge_fit(X, labels, lambda_grid=[1e-3])
        assert predict(model, None, X) == labels

    def test_huge_lambda_collapses_to_majority(self):
        X, labels = two_clusters(n_per=10)
        labels = labels[:5] + ["high"] * 15  # majority class "high"
        model = ridge_fit(X, labels, lambda_grid=[1e9])
        assert np.max(np.abs(model.weights)) < 1e-4
        assert set(predict(model, None, X)) == {"high"}

    def test_matches_normal_equation_oracle(self):
        rng = np.random.default_rng(4)
        X = rng.standard_normal((20, 5))
        labels = [["a", "b", "c"][i % 3] for i in range(20)]
        for lam in (0.01, 1.0, 100.0):
            model = ridge_fit(X, labels, lambda_grid=[lam])
            W, b = normal_equation_ridge(X, one_hot(labels, model.class_order),
                                         lam)
            assert np.max(np.abs(model.weights - W)) < 1e-8
            assert np.max(np.abs(model.intercepts - b)) < 1e-8

    def test_normal_equation_residual(self):
        rng = np.random.default_rng(5)
        X = rng.standard_normal((25, 8))
        labels = [["a", "b"][i % 2] for i in range(25)]
        for lam in DEFAULT_LAMBDA_GRID:
            model = ridge_fit(X, labels, lambda_grid=[lam])
            Y = one_hot(labels, model.class_order)
            Xc = X - X.mean(axis=0)
            Yc = Y - Y.mean(axis=0)
            lhs = (Xc.T @ Xc + lam * np.eye(8)) @ model.weights
            rhs = Xc.T @ Yc
            assert np.max(np.abs(lhs - rhs)) / max(np.max(np.abs(rhs)), 1) < 1e-8

    def test_loo_shortcut_matches_brute_force(self):
        rng = np.random.default_rng(6)
        X = rng.standard_normal((15, 4))
        labels = [["a", "b", "c"][i % 3] for i in range(15)]
        model = ridge_fit(X, labels, lambda_grid=[0.1, 1.0, 10.0])
        for lam, mse in model.loo_mse:
            brute = brute_loo_mse(X, labels, lam, model.class_order)
            assert mse == pytest.approx(brute, rel=1e-8)

    def test_lambda_selection_minimizes_loo(self):
        rng = np.random.default_rng(7)
        X = rng.standard_normal((30, 10))
        labels = [["a", "b"][i % 2] for i in range(30)]
        model = ridge_fit(X, labels)
        best = min(model.loo_mse, key=lambda t: t[1])
        assert model.chosen_lambda == best[0]

    def test_deterministic(self):
        X, labels = two_clusters(seed=3)
        a = ridge_fit(X, labels)
        b = ridge_fit(X, labels)
        assert np.array_equal(a.weights, b.weights)
        assert a.chosen_lambda == b.chosen_lambda

    def test_single_class_rejected(self):
        with pytest.raises(DataError):
            ridge_fit(np.zeros((4, 2)), ["same"] * 4)

    def test_label_length_mismatch_rejected(self):
        with pytest.raises(DataError):
            ridge_fit(np.zeros((4, 2)), ["a", "b", "a"])

    def test_bad_lambda_grid_rejected(self):
        X, labels = two_clusters()
        with pytest.raises(DataError):
            ridge_fit(X, labels, lambda_grid=[])
        with pytest.raises(DataError):
            ridge_fit(X, labels, lambda_grid=[-1.0])

    def test_wide_matrix_ok(self):
        # more features than samples, the shape the transform produces
        rng = np.random.default_rng(8)
        X = rng.standard_normal((12, 300))
        labels = [["a", "b", "c"][i % 3] for i in range(12)]
        model = ridge_fit(X, labels)
        assert np.all(np.isfinite(model.weights))
        assert predict(model, None, X) == labels


class TestPredict:
    def test_training_points_recovered(self):
        X, labels = two_clusters(seed=9)
        std = standardize_fit(X)
        model = ridge_fit(std.apply(X), labels)
        assert predict(model, std, X) == labels

    def test_tie_breaks_to_first_class(self):
        from aratkit.classifier import RidgeModel

        model = RidgeModel(weights=np.zeros((2, 3)),
                           intercepts=np.zeros(3),
                           chosen_lambda=1.0,
                           class_order=("alpha", "beta", "gamma"))
        assert predict(model, None, np.zeros((2, 2))) == ["alpha", "alpha"]

    def test_row_order_invariance(self):
        X, labels = two_clusters(seed=10)
        model = ridge_fit(X, labels)
        preds = predict(model, None, X)
        assert predict(model, None, X[::-1]) == preds[::-1]

    def test_score_scaling_invariance(self):
        from aratkit.classifier import RidgeModel

        rng = np.random.default_rng(11)
        W = rng.standard_normal((3, 4))
        b = rng.standard_normal(4)
        X = rng.standard_normal((20, 3))
        base = RidgeModel(weights=W, intercepts=b, chosen_lambda=1.0,
                          class_order=("a", "b", "c", "d"))
        scaled = RidgeModel(weights=3.0 * W, intercepts=3.0 * b,
                            chosen_lambda=1.0,
                            class_order=("a", "b", "c", "d"))
        assert predict(base, None, X) == predict(scaled, None, X)
