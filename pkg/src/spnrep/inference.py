"""Query answering on SPNs: evidence, marginals, conditionals, the partition
function, approximate MPE through the max-product network, ancestral
sampling and per-node activations.

Every routine works on batches internally. Evidence rows use 0/1 for
observed states and ``MARG`` (-1) for marginalized variables.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import LOG_ZERO, Spn
from .exceptions import ZeroProbabilityError
from .validation import MARG, check_binary_matrix, check_evidence, check_instance


def _logsumexp_rows(values: np.ndarray) -> np.ndarray:
    """log-sum-exp over axis 0; columns that are all -inf give -inf."""
    m = values.max(axis=0)
    finite = np.isfinite(m)
    shift = np.where(finite, m, 0.0)
    with np.errstate(divide="ignore"):
        out = np.log(np.exp(values - shift).sum(axis=0)) + shift
    out[~finite] = m[~finite]
    return out


def _leaf_tables(spn: Spn):
    cache = spn._cache
    if "leaf_tables" not in cache:
        ids = np.array(spn.ids_of_kind("leaf"), dtype=np.int64)
        vars_ = np.array([spn.nodes[i].var for i in ids], dtype=np.int64)
        log_p = np.array([spn.nodes[i].log_p for i in ids], dtype=float).reshape(-1, 2)
        cache["leaf_tables"] = (ids, vars_, log_p)
    return cache["leaf_tables"]


def node_log_values(spn: Spn, E: np.ndarray, mode: str = "sum") -> np.ndarray:
    """Bottom-up pass returning an (n_nodes, n_rows) array of log outputs.

    ``mode="sum"`` evaluates the SPN with marginalized leaves set to 1.
    ``mode="max"`` evaluates the max-product network: sums become weighted
    maxima and a marginalized leaf outputs its most probable state's
    probability (the max over its two indicator branches).

    On locally normalized networks, a node whose whole scope is
    marginalized in a row outputs exactly log 1 in sum mode.
    """
    n_rows = E.shape[0]
    values = np.empty((len(spn.nodes), n_rows), dtype=float)

    ids, vars_, log_p = _leaf_tables(spn)
    if len(ids):
        states = E[:, vars_].T.astype(np.int64)
        marg = states == MARG
        picked = np.take_along_axis(log_p, np.where(marg, 0, states), axis=1) if n_rows else states.astype(float)
        if mode == "sum":
            fill = np.zeros(len(ids))
        else:
            fill = log_p.max(axis=1)
        values[ids] = np.where(marg, fill[:, None], picked)

    shortcut = None
    if mode == "sum" and spn.normalized and n_rows:
        observed = (E != MARG).astype(np.float64)
        shortcut = (observed @ spn.scope_matrix.T.astype(np.float64)) == 0  # rows x nodes

    for i in spn.order:
        node = spn.nodes[i]
        if node.kind == "leaf":
            continue
        child_vals = values[list(node.children)]
        if node.kind == "product":
            values[i] = child_vals.sum(axis=0)
        else:
            weighted = child_vals + np.asarray(node.log_weights)[:, None]
            if mode == "sum":
                values[i] = _logsumexp_rows(weighted)
            else:
                values[i] = weighted.max(axis=0)
        if shortcut is not None:
            values[i, shortcut[:, i]] = 0.0
    return values


def evaluate_batch(spn: Spn, X) -> np.ndarray:
    """log p(X = x) for every row of a complete binary matrix."""
    X = check_binary_matrix(X, spn.n_vars, allow_empty=True)
    return node_log_values(spn, X)[spn.root]


def evaluate(spn: Spn, x) -> float:
    """log p(X = x) for one complete binary instance."""
    x = check_instance(x, spn.n_vars)
    return float(node_log_values(spn, x[None, :])[spn.root, 0])


def log_marginal_batch(spn: Spn, E) -> np.ndarray:
    E = check_evidence(E, spn.n_vars)
    return node_log_values(spn, E)[spn.root]


def marginal(spn: Spn, evidence) -> float:
    """log p(E = e) with marginalized variables summed out."""
    E = check_evidence(evidence, spn.n_vars)
    if E.shape[0] != 1:
        raise ValueError("marginal expects a single evidence vector")
    return float(node_log_values(spn, E)[spn.root, 0])


def merge_evidence(a, b) -> np.ndarray:
    a = np.asarray(a)
    b = np.asarray(b)
    both = (a != MARG) & (b != MARG)
    if both.any():
        raise ValueError("query and given evidence fix overlapping variables")
    return np.where(a != MARG, a, b).astype(np.int8)


def conditional(spn: Spn, query, given) -> float:
    """log p(Q = q | E = e) as a difference of two marginals."""
    query = check_evidence(query, spn.n_vars)[0]
    given = check_evidence(given, spn.n_vars)[0]
    joint = merge_evidence(query, given)
    values = node_log_values(spn, np.stack([joint, given]))[spn.root]
    if values[1] == LOG_ZERO:
        raise ZeroProbabilityError("conditioning evidence has zero probability")
    return float(values[0] - values[1])


def log_partition(spn: Spn) -> float:
    """log Z, i.e. the network output with every leaf set to 1."""
    E = np.full((1, spn.n_vars), MARG, dtype=np.int8)
    return float(node_log_values(spn, E)[spn.root, 0])


def activations_batch(spn: Spn, E) -> np.ndarray:
    """Per-node log outputs, shape (n_rows, n_nodes)."""
    E = check_evidence(E, spn.n_vars)
    return node_log_values(spn, E).T


def activations(spn: Spn, evidence) -> np.ndarray:
    E = check_evidence(evidence, spn.n_vars)
    if E.shape[0] != 1:
        raise ValueError("activations expects a single evidence vector")
    return node_log_values(spn, E)[:, 0]


@dataclass(frozen=True)
class Mpn:
    """Max-product view of an SPN. It shares node ids, children and
    weights with the source network; sums are evaluated as weighted maxima."""

    spn: Spn

    @property
    def nodes(self):
        return self.spn.nodes

    def evaluate(self, x) -> float:
        x = check_instance(x, self.spn.n_vars)
        return float(node_log_values(self.spn, x[None, :], mode="max")[self.spn.root, 0])

    def node_values(self, evidence) -> np.ndarray:
        E = check_evidence(evidence, self.spn.n_vars)
        return node_log_values(self.spn, E, mode="max")


def build_mpn(spn: Spn) -> Mpn:
    if isinstance(spn, Mpn):
        return spn
    return Mpn(spn)


@dataclass(frozen=True)
class MpeResult:
    assignment: np.ndarray
    log_value: float


def _best_child(node, child_values) -> int:
    """Child id with the largest weighted value; ties go to the lowest id."""
    scores = np.asarray(node.log_weights) + child_values
    best = scores.max()
    return min(c for c, s in zip(node.children, scores) if s == best)


def _leaf_argmax(leaf) -> int:
    return 1 if leaf.log_p[1] > leaf.log_p[0] else 0


def mpe_assign(mpn: Mpn, evidence) -> MpeResult:
    """Approximate MPE completion of the marginalized variables.

    Bottom-up max-product pass, then a Viterbi-style trace from the root
    following the best child of every max node and all children of every
    product node. Evidence variables keep their observed states.
    """
    mpn = build_mpn(mpn)
    spn = mpn.spn
    E = check_evidence(evidence, spn.n_vars)
    if E.shape[0] != 1:
        raise ValueError("mpe_assign expects a single evidence vector")
    values = node_log_values(spn, E, mode="max")[:, 0]
    log_value = float(values[spn.root])
    if log_value == LOG_ZERO:
        raise ZeroProbabilityError("MPE evidence has zero probability")

    assignment = E[0].copy()
    stack = [spn.root]
    while stack:
        i = stack.pop()
        node = spn.nodes[i]
        if node.kind == "leaf":
            if assignment[node.var] == MARG:
                assignment[node.var] = _leaf_argmax(node)
        elif node.kind == "product":
            stack.extend(node.children)
        else:
            stack.append(_best_child(node, values[list(node.children)]))
    return MpeResult(assignment.astype(np.int8), log_value)


def mpe_filters_all_nodes(spn: Spn) -> np.ndarray:
    """Joint approximate MPE assignment for the sub-network of every node.

    One max-product pass with every leaf at its max state, then the trace
    from each node, computed bottom-up by reusing child traces.

    Returns
    -------
    filters : ndarray of shape (n_nodes, n_vars), int8
        Row ``n`` holds the MPE states on the scope of node ``n`` and -1
        elsewhere.
    """
    E = np.full((1, spn.n_vars), MARG, dtype=np.int8)
    values = node_log_values(spn, E, mode="max")[:, 0]
    filters = np.full((len(spn.nodes), spn.n_vars), MARG, dtype=np.int8)
    for i in spn.order:
        node = spn.nodes[i]
        if node.kind == "leaf":
            filters[i, node.var] = _leaf_argmax(node)
        elif node.kind == "product":
            filters[i] = filters[list(node.children)].max(axis=0)
        else:
            filters[i] = filters[_best_child(node, values[list(node.children)])]
    return filters


def sample(spn: Spn, n: int, seed: Optional[int] = None) -> np.ndarray:
    """Draw ``n`` complete instances by top-down ancestral sampling.

    Sum nodes pick a child by inverse CDF over their linear weights,
    product nodes pass the instance to every child and leaves draw a
    Bernoulli state. Deterministic for a fixed ``seed``.
    """
    if not spn.normalized:
        raise ValueError("sampling requires a locally normalized network")
    rng = np.random.default_rng(seed)
    X = np.zeros((n, spn.n_vars), dtype=np.int8)
    reached = {spn.root: [np.arange(n)]}
    for i in reversed(spn.order):
        parts = reached.pop(i, None)
        if not parts:
            continue
        rows = parts[0] if len(parts) == 1 else np.concatenate(parts)
        if rows.size == 0:
            continue
        node = spn.nodes[i]
        if node.kind == "leaf":
            p1 = np.exp(node.log_p[1])
            X[rows, node.var] = rng.random(rows.size) < p1
        elif node.kind == "product":
            for c in node.children:
                reached.setdefault(c, []).append(rows)
        else:
            cdf = np.cumsum(np.exp(node.log_weights))
            picks = np.searchsorted(cdf / cdf[-1], rng.random(rows.size), side="right")
            picks = np.minimum(picks, len(node.children) - 1)
            for pos, c in enumerate(node.children):
                sel = rows[picks == pos]
                if sel.size:
                    reached.setdefault(c, []).append(sel)
    return X
