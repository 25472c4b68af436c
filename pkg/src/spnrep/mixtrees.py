"""Mixtures of Chow-Liu trees over binary variables.

Trees are learned from (optionally weighted) counts smoothed with a
pseudo-count ``alpha`` per cell, mixtures by EM. Marginals are computed
by upward message passing, in time linear in the number of variables.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional

import numpy as np
from scipy.special import logsumexp
from sklearn.base import BaseEstimator, DensityMixin
from sklearn.utils.validation import check_is_fitted

from .exceptions import SpnFormatError
from .validation import MARG, check_binary_matrix, check_evidence

MODEL_HEADER = "mt-model"
MODEL_VERSION = "v1"


def _pair_counts(X: np.ndarray, weights: Optional[np.ndarray]):
    Xf = X.astype(np.float64)
    w = np.ones(X.shape[0]) if weights is None else np.asarray(weights, dtype=float)
    total = w.sum()
    c11 = (Xf * w[:, None]).T @ Xf
    ones = np.diag(c11).copy()
    c10 = ones[:, None] - c11
    c01 = ones[None, :] - c11
    c00 = total - ones[:, None] - ones[None, :] + c11
    # counts[i, j, a, b] = weighted count of X_i = a, X_j = b
    counts = np.stack([np.stack([c00, c01], -1), np.stack([c10, c11], -1)], -2)
    return np.maximum(counts, 0.0), np.maximum(ones, 0.0), total


def mutual_information(data, alpha: float = 0.0, weights=None) -> np.ndarray:
    """Pairwise mutual information (nats) of the alpha-smoothed empirical joint."""
    X = check_binary_matrix(data)
    counts, _, total = _pair_counts(X, weights)
    joint = (counts + alpha) / (total + 4.0 * alpha)
    pa = joint.sum(axis=3, keepdims=True)
    pb = joint.sum(axis=2, keepdims=True)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = joint * np.log(joint / (pa * pb))
    mi = np.where(joint > 0, terms, 0.0).sum(axis=(2, 3))
    mi = 0.5 * (mi + mi.T)
    np.fill_diagonal(mi, 0.0)
    return mi


def maximum_spanning_tree(weights: np.ndarray) -> List[tuple]:
    """Kruskal on descending weight; ties broken by (i, j) order."""
    n = weights.shape[0]
    edges = sorted(
        ((i, j) for i in range(n) for j in range(i + 1, n)),
        key=lambda e: (-weights[e], e),
    )
    parent = list(range(n))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    chosen = []
    for i, j in edges:
        ri, rj = find(i), find(j)
        if ri != rj:
            parent[ri] = rj
            chosen.append((i, j))
            if len(chosen) == n - 1:
                break
    return chosen


@dataclass(frozen=True)
class ChowLiuTree:
    """Directed tree distribution.

    ``parents[i]`` is -1 for the root. ``log_cpt[i, a, b]`` is
    log p(X_i = b | X_parent = a); both rows of the root hold its marginal.
    ``order`` lists variables parents-first.
    """

    parents: np.ndarray
    log_cpt: np.ndarray
    order: np.ndarray

    @property
    def n_vars(self) -> int:
        return len(self.parents)

    @property
    def edges(self) -> List[tuple]:
        return sorted(tuple(sorted((int(p), i))) for i, p in enumerate(self.parents) if p >= 0)

    def log_marginal(self, evidence) -> np.ndarray:
        return tree_marginal(self, evidence)


def _orient(n_vars: int, edges, root: int = 0):
    adj = [[] for _ in range(n_vars)]
    for i, j in edges:
        adj[i].append(j)
        adj[j].append(i)
    parents = np.full(n_vars, -1, dtype=np.int64)
    order = [root]
    seen = {root}
    k = 0
    while k < len(order):
        u = order[k]
        k += 1
        for v in sorted(adj[u]):
            if v not in seen:
                seen.add(v)
                parents[v] = u
                order.append(v)
    return parents, np.asarray(order, dtype=np.int64)


def learn_chow_liu(data, alpha: float = 0.1, weights=None, root: int = 0) -> ChowLiuTree:
    """Maximum mutual-information spanning tree rooted at ``root``.

    Conditional tables use p(X_i = b | X_pa = a) = (c_ab + alpha) / (c_a + 2 alpha).
    """
    X = check_binary_matrix(data)
    n_vars = X.shape[1]
    counts, ones, total = _pair_counts(X, weights)
    edges = maximum_spanning_tree(mutual_information(X, alpha, weights)) if n_vars > 1 else []
    parents, order = _orient(n_vars, edges, root)

    log_cpt = np.empty((n_vars, 2, 2))
    for i in range(n_vars):
        p = parents[i]
        if p < 0:
            marg = np.array([total - ones[i], ones[i]])
            row = (marg + alpha) / (total + 2.0 * alpha)
            log_cpt[i] = np.log(row)[None, :]
        else:
            table = counts[p, i]  # [parent state, child state]
            log_cpt[i] = np.log((table + alpha) / (table.sum(axis=1, keepdims=True) + 2.0 * alpha))
    return ChowLiuTree(parents, log_cpt, order)


def tree_marginal(tree: ChowLiuTree, evidence) -> np.ndarray:
    """Batch log p(E = e) for a Chow-Liu tree, summing out -1 entries."""
    E = check_evidence(evidence, tree.n_vars)
    n = E.shape[0]
    # msg[i][:, b]: log-mass of the subtree below i given X_i = b
    msg = np.zeros((tree.n_vars, n, 2))
    for state in (0, 1):
        msg[:, :, state] = np.where((E.T == MARG) | (E.T == state), 0.0, -np.inf)
    for i in reversed(tree.order):
        p = tree.parents[i]
        scores = msg[i][:, None, :] + tree.log_cpt[i][None, :, :]  # n x a x b
        if p < 0:
            return logsumexp(scores[:, 0, :], axis=1)
        msg[p] += logsumexp(scores, axis=2)
    raise AssertionError("tree has no root")


@dataclass(frozen=True)
class TreeMixture:
    trees: List[ChowLiuTree]
    log_weights: np.ndarray

    @property
    def n_vars(self) -> int:
        return self.trees[0].n_vars

    def log_marginal(self, evidence) -> np.ndarray:
        return mixture_marginal(self, evidence)


def mixture_marginal(mix: TreeMixture, evidence) -> np.ndarray:
    comp = np.stack([tree_marginal(t, evidence) for t in mix.trees])
    return logsumexp(comp + np.asarray(mix.log_weights)[:, None], axis=0)


def _fit_once(X, k, alpha, max_iter, tol, rng):
    n = X.shape[0]
    resp = rng.dirichlet(np.ones(k), size=n)
    history = []
    mix = None
    for _ in range(max_iter):
        mass = resp.sum(axis=0)
        trees = [learn_chow_liu(X, alpha, weights=resp[:, c]) for c in range(k)]
        mix = TreeMixture(trees, np.log(mass / mass.sum()))
        comp = np.stack([tree_marginal(t, X) for t in trees], axis=1) + mix.log_weights
        row_ll = logsumexp(comp, axis=1)
        history.append(float(row_ll.sum()))
        resp = np.exp(comp - row_ll[:, None])
        if len(history) > 1 and history[-1] - history[-2] < tol:
            break
    return mix, history


def learn_mixture(data, k: int, alpha: float = 0.1, max_iter: int = 100, tol: float = 1e-4,
                  n_restarts: int = 3, seed=0):
    """Fit a k-component mixture of Chow-Liu trees by EM.

    The best of ``n_restarts`` runs by final training log-likelihood is
    kept. Returns the mixture and that run's per-iteration log-likelihoods.
    """
    if k < 1:
        raise ValueError("k must be at least 1")
    X = check_binary_matrix(data)
    if k == 1:
        tree = learn_chow_liu(X, alpha)
        ll = float(tree_marginal(tree, X).sum())
        return TreeMixture([tree], np.zeros(1)), [ll]
    rng = np.random.default_rng(seed)
    best = None
    for _ in range(n_restarts):
        mix, history = _fit_once(X, k, alpha, max_iter, tol, rng)
        if best is None or history[-1] > best[1][-1]:
            best = (mix, history)
    return best


def _fmt(x):
    return "%.17g" % x


def serialize_mixture(mix: TreeMixture) -> str:
    lines = [f"{MODEL_HEADER} {MODEL_VERSION} {mix.n_vars} {len(mix.trees)}"]
    for tree, lw in zip(mix.trees, mix.log_weights):
        lines.append(f"W {_fmt(lw)}")
        for i in range(tree.n_vars):
            c = tree.log_cpt[i]
            lines.append(
                f"{tree.parents[i]} {_fmt(c[0, 0])} {_fmt(c[0, 1])} {_fmt(c[1, 0])} {_fmt(c[1, 1])}"
            )
    return "\n".join(lines) + "\n"


def check_mixture(mix: TreeMixture, tol: float = 1e-9) -> None:
    if len(mix.trees) < 1:
        raise SpnFormatError("mixture has no components")
    if abs(np.exp(mix.log_weights).sum() - 1.0) > tol:
        raise SpnFormatError("mixture weights do not sum to 1")
    for t in mix.trees:
        if int((t.parents < 0).sum()) != 1:
            raise SpnFormatError("tree must have exactly one root")
        if len(t.order) != t.n_vars:
            raise SpnFormatError("parent relation is not a spanning tree")
        if np.abs(np.exp(t.log_cpt).sum(axis=2) - 1.0).max() > tol:
            raise SpnFormatError("conditional table rows do not sum to 1")


def deserialize_mixture(text: str) -> TreeMixture:
    rows = [ln.split("#", 1)[0].split() for ln in text.splitlines()]
    rows = [r for r in rows if r]
    if not rows or rows[0][:2] != [MODEL_HEADER, MODEL_VERSION] or len(rows[0]) != 4:
        raise SpnFormatError("missing or unsupported 'mt-model v1' header")
    try:
        n_vars, k = int(rows[0][2]), int(rows[0][3])
        if len(rows) != 1 + k * (n_vars + 1):
            raise ValueError("record count does not match header")
        trees, log_w = [], []
        pos = 1
        for _ in range(k):
            if rows[pos][0] != "W" or len(rows[pos]) != 2:
                raise ValueError("expected weight line")
            log_w.append(float(rows[pos][1]))
            recs = rows[pos + 1: pos + 1 + n_vars]
            if any(len(r) != 5 for r in recs):
                raise ValueError("variable records need 5 fields")
            parents = np.array([int(r[0]) for r in recs], dtype=np.int64)
            cpt = np.array([[float(v) for v in r[1:]] for r in recs]).reshape(n_vars, 2, 2)
            roots = np.flatnonzero(parents < 0)
            if roots.size != 1 or parents.max() >= n_vars:
                raise ValueError("parent relation must have exactly one root")
            edges = [(int(p), i) for i, p in enumerate(parents) if p >= 0]
            oriented, order = _orient(n_vars, edges, int(roots[0]))
            if len(order) != n_vars or not np.array_equal(oriented, parents):
                raise ValueError("parent relation is not a spanning tree")
            trees.append(ChowLiuTree(parents, cpt, order))
            pos += 1 + n_vars
    except (ValueError, IndexError) as exc:
        raise SpnFormatError(f"malformed mixture model: {exc}") from exc
    mix = TreeMixture(trees, np.asarray(log_w))
    check_mixture(mix)
    return mix


class MixtureOfTrees(DensityMixin, BaseEstimator):
    """Mixture of Chow-Liu trees density estimator.

    Parameters
    ----------
    n_components : int, default=3
    alpha : float, default=0.1
        Pseudo-count added to every cell of the pairwise count tables.
    max_iter, tol, n_restarts
        EM settings.
    random_state : int, default=0
    """

    def __init__(self, n_components=3, alpha=0.1, max_iter=100, tol=1e-4, n_restarts=3,
                 random_state=0):
        self.n_components = n_components
        self.alpha = alpha
        self.max_iter = max_iter
        self.tol = tol
        self.n_restarts = n_restarts
        self.random_state = random_state

    def fit(self, X, y=None):
        X = check_binary_matrix(X)
        self.mixture_, self.loglik_history_ = learn_mixture(
            X, self.n_components, self.alpha, self.max_iter, self.tol, self.n_restarts,
            self.random_state,
        )
        self.n_features_in_ = X.shape[1]
        return self

    @property
    def n_vars(self):
        check_is_fitted(self, "mixture_")
        return self.mixture_.n_vars

    def log_marginal(self, evidence):
        check_is_fitted(self, "mixture_")
        return mixture_marginal(self.mixture_, evidence)

    def score_samples(self, X):
        X = check_binary_matrix(X, self.n_vars)
        return self.log_marginal(X)

    def score(self, X, y=None):
        return float(np.mean(self.score_samples(X)))
