"""One-vs-rest L2 logistic regression used as a linear probe on embeddings.

For every class c the binary problem

    (1 / C) * 0.5 * ||w||^2 + sum_i log(1 + exp(-z_i (w . x_i + b)))

with z_i = +1 for members of c and -1 otherwise is minimized by
full-batch gradient descent with a backtracking (Armijo) line search.
The bias is not penalized; smaller C means stronger regularization.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Sequence, Tuple

import numpy as np
from scipy.special import expit
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_is_fitted

from .validation import clamp_log_features

C_GRID = (0.0001, 0.001, 0.01, 0.1, 1.0)


def binary_loss_and_grad(w: np.ndarray, b: float, X: np.ndarray, z: np.ndarray, C: float):
    """Loss, weight gradient and bias gradient of one binary problem."""
    margin = z * (X @ w + b)
    loss = 0.5 * np.dot(w, w) / C + np.logaddexp(0.0, -margin).sum()
    coef = -z * expit(-margin)
    return loss, w / C + X.T @ coef, coef.sum()


def _fit_binary(X, z, C, max_iter, tol, armijo=1e-4, shrink=0.5):
    d = X.shape[1]
    theta = np.zeros(d + 1)

    def fg(th):
        loss, gw, gb = binary_loss_and_grad(th[:d], th[d], X, z, C)
        return loss, np.append(gw, gb)

    loss, grad = fg(theta)
    history = [loss]
    step = 1.0 / (1.0 / C + np.square(X).sum() + X.shape[0])
    prev_theta = prev_grad = None
    for _ in range(max_iter):
        if prev_theta is not None:
            s, yv = theta - prev_theta, grad - prev_grad
            sy = float(s @ yv)
            if sy > 0:
                step = float(s @ s) / sy
        gg = float(grad @ grad)
        if gg == 0.0:
            break
        while True:
            cand = theta - step * grad
            cand_loss, cand_grad = fg(cand)
            if cand_loss <= loss - armijo * step * gg or step < 1e-300:
                break
            step *= shrink
        if cand_loss > loss:
            break
        prev_theta, prev_grad = theta, grad
        decrease = loss - cand_loss
        theta, loss, grad = cand, cand_loss, cand_grad
        history.append(loss)
        if decrease < tol:
            break
    return theta[:d], theta[d], history


@dataclass
class LRModel:
    weights: np.ndarray  # (n_classes, d)
    bias: np.ndarray  # (n_classes,)
    classes: np.ndarray
    C: float
    loss_history: List[List[float]] = field(default_factory=list)

    def decision_function(self, X) -> np.ndarray:
        X = clamp_log_features(X)
        if X.ndim != 2 or X.shape[1] != self.weights.shape[1]:
            raise ValueError(f"expected {self.weights.shape[1]} features, got shape {X.shape}")
        return X @ self.weights.T + self.bias


def train_logreg_ovr(X, y, C: float, max_iter: int = 1000, tol: float = 1e-6) -> LRModel:
    """Fit one binary L2 logistic regression per class.

    -inf features are clamped to -700 first.
    """
    if C <= 0:
        raise ValueError("C must be positive")
    X = clamp_log_features(X)
    y = np.asarray(y)
    classes = np.unique(y)
    if classes.size < 2:
        raise ValueError("need at least two classes")
    W = np.zeros((classes.size, X.shape[1]))
    b = np.zeros(classes.size)
    histories = []
    for k, c in enumerate(classes):
        z = np.where(y == c, 1.0, -1.0)
        W[k], b[k], hist = _fit_binary(X, z, C, max_iter, tol)
        histories.append(hist)
    return LRModel(W, b, classes, float(C), histories)


def predict(model: LRModel, X) -> np.ndarray:
    """Class with the highest score; ties go to the lowest class."""
    return model.classes[np.argmax(model.decision_function(X), axis=1)]


def accuracy(model: LRModel, X, y) -> float:
    return float(np.mean(predict(model, X) == np.asarray(y)))


def grid_select(train: Tuple, valid: Tuple, C_grid: Sequence[float] = C_GRID,
                **fit_kw) -> Tuple[LRModel, float]:
    """Refit for every C and keep the best validation accuracy.

    Ties go to the smaller C.
    """
    if len(C_grid) == 0:
        raise ValueError("empty C grid")
    best, best_acc = None, -1.0
    for C in sorted(C_grid):
        model = train_logreg_ovr(*train, C=C, **fit_kw)
        acc = accuracy(model, *valid)
        if acc > best_acc:
            best, best_acc = model, acc
    return best, best.C


class OneVsRestLogisticRegression(ClassifierMixin, BaseEstimator):
    """scikit-learn style wrapper around :func:`train_logreg_ovr`."""

    def __init__(self, C=1.0, max_iter=1000, tol=1e-6):
        self.C = C
        self.max_iter = max_iter
        self.tol = tol

    def fit(self, X, y):
        self.model_ = train_logreg_ovr(X, y, self.C, self.max_iter, self.tol)
        self.classes_ = self.model_.classes
        self.n_features_in_ = self.model_.weights.shape[1]
        return self

    def decision_function(self, X):
        check_is_fitted(self, "model_")
        return self.model_.decision_function(X)

    def predict(self, X):
        check_is_fitted(self, "model_")
        return predict(self.model_, X)
