import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from sklearn.base import clone

from spnrep.classify import (
    C_GRID,
    LRModel,
    OneVsRestLogisticRegression,
    accuracy,
    binary_loss_and_grad,
    grid_select,
    predict,
    train_logreg_ovr,
)


def separable(rng, n=60):
    X = rng.normal(size=(n, 2))
    y = (X[:, 0] + 0.5 * X[:, 1] > 0).astype(int)
    X[y == 1] += 0.5
    X[y == 0] -= 0.5
    return X, y


def blobs(rng, n_per=50, k=3, d=4):
    centers = rng.normal(scale=3, size=(k, d))
    X = np.vstack([c + rng.normal(size=(n_per, d)) for c in centers])
    return X, np.repeat(np.arange(k), n_per)


class TestTraining:
    def test_separable_toy(self):
        X, y = separable(np.random.default_rng(0))
        model = train_logreg_ovr(X, y, C=1.0)
        assert accuracy(model, X, y) == 1.0

    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 2**31 - 1), st.sampled_from(C_GRID))
    def test_gradient_vs_central_differences(self, seed, C):
        rng = np.random.default_rng(seed)
        X = rng.normal(size=(30, 5))
        z = np.where(rng.random(30) < 0.5, 1.0, -1.0)
        w, b = rng.normal(size=5), float(rng.normal())
        _, gw, gb = binary_loss_and_grad(w, b, X, z, C)
        h = 1e-6
        theta = np.append(w, b)
        num = np.empty(6)
        for k in range(6):
            up, dn = theta.copy(), theta.copy()
            up[k] += h
            dn[k] -= h
            num[k] = (binary_loss_and_grad(up[:5], up[5], X, z, C)[0]
                      - binary_loss_and_grad(dn[:5], dn[5], X, z, C)[0]) / (2 * h)
        ana = np.append(gw, gb)
        rel = np.abs(ana - num) / np.maximum(1.0, np.abs(num))
        assert rel.max() < 1e-5

    def test_loss_monotone(self):
        X, y = blobs(np.random.default_rng(1))
        for C in C_GRID:
            model = train_logreg_ovr(X, y, C)
            for hist in model.loss_history:
                assert np.all(np.diff(hist) <= 0)

    def test_constant_features(self):
        X = np.ones((40, 3))
        y = np.array([0] * 25 + [1] * 15)
        model = train_logreg_ovr(X, y, C=1.0)
        assert np.abs(model.weights).max() < 1e-2
        assert (predict(model, X) == 0).all()

    def test_minus_inf_clamped(self):
        X = np.array([[-np.inf, 0.0], [0.0, 1.0], [-1.0, -np.inf], [2.0, 0.5]])
        model = train_logreg_ovr(X, [0, 1, 0, 1], C=0.1)
        assert np.isfinite(model.weights).all()

    def test_errors(self):
        with pytest.raises(ValueError):
            train_logreg_ovr(np.zeros((3, 2)), [1, 1, 1], 1.0)
        with pytest.raises(ValueError):
            train_logreg_ovr(np.zeros((3, 2)), [0, 1, 1], 0.0)
        with pytest.raises(ValueError):
            train_logreg_ovr(np.array([[np.nan, 1.0], [0, 0]]), [0, 1], 1.0)


class TestPredict:
    def test_ties_to_lowest_class(self):
        model = LRModel(np.zeros((3, 2)), np.zeros(3), np.array([4, 7, 9]), 1.0)
        assert predict(model, np.ones((5, 2))).tolist() == [4] * 5

    def test_zero_model_guess_rate(self):
        rng = np.random.default_rng(2)
        y = rng.permutation(np.repeat(np.arange(4), 250))
        model = LRModel(np.zeros((4, 3)), np.zeros(4), np.arange(4), 1.0)
        assert accuracy(model, rng.normal(size=(1000, 3)), y) == pytest.approx(0.25)

    def test_scale_invariance(self):
        X, y = blobs(np.random.default_rng(3))
        model = train_logreg_ovr(X, y, 1.0)
        scaled = LRModel(model.weights * 3.7, model.bias * 3.7, model.classes, model.C)
        np.testing.assert_array_equal(predict(model, X), predict(scaled, X))

    def test_arity_mismatch(self):
        model = LRModel(np.zeros((2, 2)), np.zeros(2), np.arange(2), 1.0)
        with pytest.raises(ValueError):
            predict(model, np.zeros((1, 3)))

    @settings(max_examples=20, deadline=None)
    @given(st.integers(0, 2**31 - 1))
    def test_accuracy_range(self, seed):
        rng = np.random.default_rng(seed)
        X, y = blobs(rng, 10, 2, 2)
        a = accuracy(train_logreg_ovr(X, y, 0.01), X, rng.permutation(y))
        assert 0.0 <= a <= 1.0


class TestGridSelect:
    def test_single_value(self):
        X, y = blobs(np.random.default_rng(4))
        assert grid_select((X, y), (X, y), [0.1])[1] == 0.1

    def test_chosen_from_grid(self):
        rng = np.random.default_rng(5)
        X, y = blobs(rng)
        V, w = blobs(rng)
        model, C = grid_select((X, y), (V, w))
        assert C in C_GRID and model.C == C

    def test_ties_smallest(self):
        # all labels in valid are noise-flipped copies; every C separates the clean train perfectly
        rng = np.random.default_rng(6)
        X, y = separable(rng, 80)
        V = X.copy()
        w = np.where(rng.random(80) < 0.3, 1 - y, y)
        accs = {C: accuracy(train_logreg_ovr(X, y, C), V, w) for C in C_GRID}
        assert len(set(accs.values())) == 1
        assert grid_select((X, y), (V, w))[1] == min(C_GRID)

    def test_empty_grid(self):
        with pytest.raises(ValueError):
            grid_select((np.zeros((2, 1)), [0, 1]), (np.zeros((2, 1)), [0, 1]), [])


class TestEstimator:
    def test_fit_predict(self):
        X, y = blobs(np.random.default_rng(7))
        est = OneVsRestLogisticRegression(C=1.0).fit(X, y)
        assert est.score(X, y) > 0.9
        assert est.decision_function(X).shape == (len(X), 3)
        assert clone(est).get_params() == est.get_params()
