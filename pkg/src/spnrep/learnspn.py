"""Greedy top-down structure learning with binary splits (LearnSPN-b).

Each data slice (rows x columns) becomes:

* a smoothed Bernoulli leaf when it has a single column;
* a product of leaves when it has fewer than ``m_min`` rows;
* a product over two column blocks when the G-test dependency graph
  over its columns is disconnected;
* otherwise a sum over two row clusters found by EM on a two-component
  Bernoulli mixture, weighted by the cluster proportions.

Chains of same-type nodes produced by the binary splits are collapsed
afterwards so inner node types alternate.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.sparse.csgraph import connected_components
from scipy.special import logsumexp
from sklearn.base import BaseEstimator, DensityMixin
from sklearn.utils.validation import check_is_fitted

from .core import LeafNode, ProductNode, Spn, SumNode, build_spn, leaf_node
from .inference import evaluate_batch
from .validation import check_binary_matrix

logger = logging.getLogger(__name__)

ALPHA_GRID = (0.1, 0.2, 0.5, 1.0, 2.0)
RESP_CLAMP = 1e-6


@dataclass(frozen=True)
class LearnParams:
    rho: float = 20.0
    m_min: int = 500
    alpha: float = 0.1
    em_restarts: int = 3
    em_iters: int = 100
    em_tol: float = 1e-4
    seed: Optional[int] = 0

    def __post_init__(self):
        if self.rho <= 0:
            raise ValueError("rho must be positive")
        if self.m_min < 1:
            raise ValueError("m_min must be at least 1")
        if self.alpha < 0:
            raise ValueError("alpha must be nonnegative")
        if self.em_restarts < 1 or self.em_iters < 1:
            raise ValueError("em_restarts and em_iters must be positive")


def g_test(data: np.ndarray, col_i: int, col_j: int) -> float:
    """G statistic of the 2x2 contingency table of two binary columns."""
    return float(g_test_matrix(data[:, [col_i, col_j]])[0, 1])


def g_test_matrix(X: np.ndarray) -> np.ndarray:
    """Pairwise G statistics for all columns of a binary matrix.

    Empty cells contribute zero, so constant columns score 0 against
    everything.
    """
    X = X.astype(np.float64, copy=False)
    n = X.shape[0]
    c11 = X.T @ X
    ones = np.diag(c11).copy()
    zeros = n - ones
    c10 = ones[:, None] - c11
    c01 = ones[None, :] - c11
    c00 = n - ones[:, None] - ones[None, :] + c11
    g = np.zeros_like(c11)
    for count, ma, mb in (
        (c11, ones[:, None], ones[None, :]),
        (c10, ones[:, None], zeros[None, :]),
        (c01, zeros[:, None], ones[None, :]),
        (c00, zeros[:, None], zeros[None, :]),
    ):
        pos = count > 0
        with np.errstate(divide="ignore", invalid="ignore"):
            term = count * np.log(count * n / (ma * mb))
        g += np.where(pos, term, 0.0)
    g = 2.0 * np.triu(g, 1)
    return g + g.T  # exactly symmetric


def split_columns(X: np.ndarray, rho: float) -> Optional[Tuple[np.ndarray, np.ndarray]]:
    """Binary column split of a slice, as local column positions.

    Columns are linked when their G statistic exceeds ``rho``. Returns
    None when the dependency graph is connected, otherwise the largest
    connected component and the remaining columns. Equal-size components
    are ranked by their lowest column.
    """
    d = X.shape[1]
    if d < 2:
        return None
    adj = g_test_matrix(X) > rho
    n_comp, labels = connected_components(adj, directed=False)
    if n_comp == 1:
        return None
    sizes = np.bincount(labels)
    # labels are assigned in order of first appearance, so argmax favours
    # the component holding the lowest column on ties
    best = int(np.argmax(sizes))
    block = np.flatnonzero(labels == best)
    rest = np.flatnonzero(labels != best)
    return block, rest


def _em_two_clusters(X: np.ndarray, rng: np.random.Generator, params: LearnParams):
    n = X.shape[0]
    Xf = X.astype(np.float64)
    best_ll, best_resp = -np.inf, None
    for _ in range(params.em_restarts):
        r = rng.random(n)
        resp = np.column_stack([r, 1.0 - r])
        prev = -np.inf
        for _ in range(params.em_iters):
            resp = np.clip(resp, RESP_CLAMP, 1.0 - RESP_CLAMP)
            mass = resp.sum(axis=0)
            log_pi = np.log(mass / mass.sum())
            theta = np.clip((resp.T @ Xf) / mass[:, None], RESP_CLAMP, 1.0 - RESP_CLAMP)
            joint = Xf @ np.log(theta).T + (1.0 - Xf) @ np.log1p(-theta).T + log_pi
            row_ll = logsumexp(joint, axis=1)
            ll = float(row_ll.sum())
            resp = np.exp(joint - row_ll[:, None])
            if ll - prev < params.em_tol:
                break
            prev = ll
        if ll > best_ll:
            best_ll, best_resp = ll, resp
    return best_resp


def cluster_rows(X: np.ndarray, params: LearnParams, rng: np.random.Generator):
    """Split rows into two clusters by EM on a 2-component Bernoulli mixture.

    Returns (rows_a, rows_b, w_a, w_b) with local row positions. A
    degenerate clustering comes back with an empty ``rows_b`` and weights
    (1, 0).
    """
    n = X.shape[0]
    if n < 2:
        return np.arange(n), np.empty(0, dtype=np.int64), 1.0, 0.0
    resp = _em_two_clusters(X, rng, params)
    assign = np.argmax(resp, axis=1)
    rows_a = np.flatnonzero(assign == 0)
    rows_b = np.flatnonzero(assign == 1)
    if rows_a.size == 0:
        rows_a, rows_b = rows_b, rows_a
    return rows_a, rows_b, rows_a.size / n, rows_b.size / n


def leaf_probability(n_ones: float, n: float, alpha: float) -> float:
    """Smoothed p(X=1) = (n_ones + alpha) / (n + 2 alpha); 0.5 with no data."""
    denom = n + 2.0 * alpha
    if denom <= 0:
        return 0.5
    return (n_ones + alpha) / denom


def make_leaf(column: np.ndarray, var: int, alpha: float) -> LeafNode:
    return leaf_node(var, leaf_probability(float(np.sum(column)), float(len(column)), alpha))


@dataclass
class _Builder:
    data: np.ndarray
    params: LearnParams
    nodes: List = None
    leaf_counts: Dict[int, Tuple[int, int]] = None

    def __post_init__(self):
        self.nodes = []
        self.leaf_counts = {}

    def add(self, node) -> int:
        self.nodes.append(node)
        return len(self.nodes) - 1

    def leaf(self, rows: np.ndarray, var: int) -> int:
        column = self.data[rows, var]
        nid = self.add(make_leaf(column, var, self.params.alpha))
        self.leaf_counts[nid] = (int(column.sum()), int(len(column)))
        return nid

    def factorize(self, rows, cols) -> int:
        kids = [self.leaf(rows, v) for v in cols]
        return kids[0] if len(kids) == 1 else self.add(ProductNode(tuple(kids)))

    def grow(self, rows: np.ndarray, cols: np.ndarray, seq: np.random.SeedSequence) -> int:
        if len(cols) == 1:
            return self.leaf(rows, int(cols[0]))
        if len(rows) < self.params.m_min:
            return self.factorize(rows, cols)

        X = self.data[np.ix_(rows, cols)]
        split = split_columns(X, self.params.rho)
        seq_a, seq_b = seq.spawn(2)
        if split is not None:
            block, rest = split
            left = self.grow(rows, cols[block], seq_a)
            right = self.grow(rows, cols[rest], seq_b)
            return self.add(ProductNode((left, right)))

        rng = np.random.default_rng(seq)
        rows_a, rows_b, w_a, w_b = cluster_rows(X, self.params, rng)
        if rows_b.size == 0:
            return self.factorize(rows, cols)
        left = self.grow(rows[rows_a], cols, seq_a)
        right = self.grow(rows[rows_b], cols, seq_b)
        return self.add(SumNode((left, right), (float(np.log(w_a)), float(np.log(w_b)))))


def _collapse_chains(nodes: Sequence, root: int) -> Tuple[List, int, Dict[int, int]]:
    """Merge product-under-product and sum-under-sum chains of a tree.

    Returns the compacted node list, the new root id and the mapping
    from old to new ids for surviving nodes.
    """

    def flat(i):
        node = nodes[i]
        if node.kind == "product":
            kids = []
            for c in node.children:
                kids.extend(flat(c)[1] if nodes[c].kind == "product" else [(c, 0.0)])
            return node, kids
        if node.kind == "sum":
            kids = []
            for c, w in zip(node.children, node.log_weights):
                if nodes[c].kind == "sum":
                    kids.extend((cc, w + ww) for cc, ww in flat(c)[1])
                else:
                    kids.append((c, w))
            return node, kids
        return node, []

    new_nodes: List = []
    remap: Dict[int, int] = {}

    # iterative post-order over the tree reachable through collapsed links
    stack = [(root, False)]
    while stack:
        i, expanded = stack.pop()
        if i in remap:
            continue
        node, kids = flat(i)
        if not expanded and kids:
            stack.append((i, True))
            stack.extend((c, False) for c, _ in reversed(kids) if c not in remap)
            continue
        if node.kind == "leaf":
            new = node
        elif node.kind == "product":
            new = ProductNode(tuple(remap[c] for c, _ in kids))
        else:
            new = SumNode(tuple(remap[c] for c, _ in kids), tuple(float(w) for _, w in kids))
        new_nodes.append(new)
        remap[i] = len(new_nodes) - 1
    return new_nodes, remap[root], remap


@dataclass(frozen=True)
class LearnedStructure:
    """A learned network plus, per leaf, the (ones, rows) counts it was fit on."""

    spn: Spn
    leaf_counts: Dict[int, Tuple[int, int]]

    def with_alpha(self, alpha: float) -> Spn:
        nodes = list(self.spn.nodes)
        for nid, (ones, n) in self.leaf_counts.items():
            nodes[nid] = leaf_node(nodes[nid].var, leaf_probability(ones, n, alpha))
        return build_spn(nodes, self.spn.root, self.spn.n_vars)


def learn_structure_with_counts(data, params: LearnParams = LearnParams()) -> LearnedStructure:
    data = check_binary_matrix(data, name="data")
    n, d = data.shape
    builder = _Builder(data, params)
    root = builder.grow(np.arange(n), np.arange(d), np.random.SeedSequence(params.seed))
    nodes, root, remap = _collapse_chains(builder.nodes, root)
    spn = build_spn(nodes, root, d)
    counts = {remap[k]: v for k, v in builder.leaf_counts.items() if k in remap}
    logger.info("learned network: %d nodes over %d variables", len(spn), d)
    return LearnedStructure(spn, counts)


def learn_structure(data, params: LearnParams = LearnParams()) -> Spn:
    """Learn a valid, locally normalized SPN over all columns of ``data``."""
    return learn_structure_with_counts(data, params).spn


def select_alpha(
    valid,
    alpha_grid: Sequence[float],
    fit_leaves: Callable[[float], Spn],
) -> float:
    """Pick the smoothing value with the best mean validation log-likelihood.

    ``fit_leaves(alpha)`` must return the fixed structure with its leaves
    refit at ``alpha``. Ties go to the smaller value.
    """
    if len(alpha_grid) == 0:
        raise ValueError("empty alpha grid")
    best_alpha, best_ll = None, -np.inf
    for alpha in sorted(alpha_grid):
        ll = float(np.mean(evaluate_batch(fit_leaves(alpha), valid)))
        if best_alpha is None or ll > best_ll:
            best_alpha, best_ll = alpha, ll
    return best_alpha


class LearnSPN(DensityMixin, BaseEstimator):
    """Sum-product network density estimator learned with LearnSPN-b.

    Parameters
    ----------
    rho : float, default=20.0
        G-test threshold; column pairs with a larger G are dependent.
    m_min : int, default=500
        Slices with fewer rows are fully factorized.
    alpha : float, default=0.1
        Laplace smoothing of the leaves. Ignored when ``alpha_grid`` is
        given and validation data is passed to :meth:`fit`.
    alpha_grid : sequence of float, optional
        Candidate smoothing values searched on validation data.
    em_restarts, em_iters, em_tol
        Settings of the two-cluster EM used for row splits.
    random_state : int, default=0
        Seed for the row clustering.

    Attributes
    ----------
    spn_ : Spn
        The fitted network.
    alpha_ : float
        Smoothing value used for the leaves.
    """

    def __init__(
        self,
        rho=20.0,
        m_min=500,
        alpha=0.1,
        alpha_grid=None,
        em_restarts=3,
        em_iters=100,
        em_tol=1e-4,
        random_state=0,
    ):
        self.rho = rho
        self.m_min = m_min
        self.alpha = alpha
        self.alpha_grid = alpha_grid
        self.em_restarts = em_restarts
        self.em_iters = em_iters
        self.em_tol = em_tol
        self.random_state = random_state

    def _params(self) -> LearnParams:
        return LearnParams(
            rho=self.rho,
            m_min=self.m_min,
            alpha=self.alpha,
            em_restarts=self.em_restarts,
            em_iters=self.em_iters,
            em_tol=self.em_tol,
            seed=self.random_state,
        )

    def fit(self, X, y=None, X_valid=None):
        X = check_binary_matrix(X)
        structure = learn_structure_with_counts(X, self._params())
        alpha = self.alpha
        if self.alpha_grid is not None and X_valid is not None:
            X_valid = check_binary_matrix(X_valid, X.shape[1], name="X_valid")
            alpha = select_alpha(X_valid, self.alpha_grid, structure.with_alpha)
        self.alpha_ = alpha
        self.spn_ = structure.spn if alpha == self.alpha else structure.with_alpha(alpha)
        self.n_features_in_ = X.shape[1]
        return self

    def score_samples(self, X):
        check_is_fitted(self, "spn_")
        return evaluate_batch(self.spn_, X)

    def score(self, X, y=None):
        return float(np.mean(self.score_samples(X)))
