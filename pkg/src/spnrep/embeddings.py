"""Embedding extraction from fitted models.

Node-activation embeddings (all inner nodes, filtered by node type or by
scope length), scope-aggregated embeddings and random marginal-query
embeddings. Values are log-domain; -inf is kept as is.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import List, Optional, Protocol, Sequence

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .core import ScopeRanges, Spn
from .inference import node_log_values
from .validation import MARG, check_binary_matrix


class MarginalOracle(Protocol):
    n_vars: int

    def log_marginal(self, evidence) -> np.ndarray:
        """Log-probability of each evidence row (-1 marks marginalized)."""


@dataclass(frozen=True)
class QueryTemplate:
    """A rectangular pixel patch; ``variables`` are row-major pixel indices."""

    row: int
    col: int
    height: int
    width: int
    img_width: int

    @property
    def variables(self) -> np.ndarray:
        rows = np.arange(self.row, self.row + self.height)
        cols = np.arange(self.col, self.col + self.width)
        return (rows[:, None] * self.img_width + cols[None, :]).ravel()


@dataclass
class EmbeddingMatrix:
    values: np.ndarray
    feature_meta: List[dict] = field(default_factory=list)

    def __post_init__(self):
        if np.isnan(self.values).any():
            raise ValueError("embedding contains NaN")
        if self.values.shape[1] != len(self.feature_meta):
            raise ValueError("one metadata entry per feature is required")

    @property
    def n_features(self) -> int:
        return self.values.shape[1]

    def select(self, mask) -> "EmbeddingMatrix":
        mask = np.asarray(mask, dtype=bool)
        return EmbeddingMatrix(
            self.values[:, mask], [m for m, keep in zip(self.feature_meta, mask) if keep]
        )

    def metadata_json(self) -> str:
        return json.dumps(self.feature_meta, indent=1)


def _node_meta(spn: Spn, nid: int) -> dict:
    return {
        "node": int(nid),
        "kind": spn.nodes[nid].kind,
        "scope": spn.scope_vars(nid),
    }


def extract_inner(spn: Spn, data) -> EmbeddingMatrix:
    """Activations of every node with scope length > 1, by ascending node id."""
    data = check_binary_matrix(data, spn.n_vars, allow_empty=True)
    ids = np.flatnonzero(spn.scope_lengths > 1)
    values = node_log_values(spn, data)[ids].T
    return EmbeddingMatrix(values, [_node_meta(spn, i) for i in ids])


def filter_by_type(emb: EmbeddingMatrix, spn: Spn, kind: str) -> EmbeddingMatrix:
    if kind not in ("sum", "product"):
        raise ValueError("kind must be 'sum' or 'product'")
    return emb.select([spn.nodes[m["node"]].kind == kind for m in emb.feature_meta])


def filter_by_scope_length(
    emb: EmbeddingMatrix, spn: Spn, ranges: ScopeRanges, which: str
) -> EmbeddingMatrix:
    if which not in ("S", "M", "L"):
        raise ValueError("which must be one of 'S', 'M', 'L'")
    lengths = spn.scope_lengths
    return emb.select([ranges.label(int(lengths[m["node"]])) == which for m in emb.feature_meta])


def _log_mean_exp(values: np.ndarray) -> np.ndarray:
    """Stabilized log of the mean of exp(values) over axis 0."""
    m = values.max(axis=0)
    finite = np.isfinite(m)
    shift = np.where(finite, m, 0.0)
    with np.errstate(divide="ignore"):
        out = np.log(np.exp(values - shift).mean(axis=0)) + shift
    return np.where(finite, out, m)


def aggregate_by_scope(spn: Spn, data, include_leaves: bool = False) -> EmbeddingMatrix:
    """One feature per distinct scope among sum nodes (and leaves if asked).

    Each feature is the log of the mean linear output of the nodes sharing
    that scope, i.e. the output of a uniform sum node placed over them.
    Features are ordered by the lowest node id in each group.
    """
    data = check_binary_matrix(data, spn.n_vars, allow_empty=True)
    kinds = ("sum", "leaf") if include_leaves else ("sum",)
    groups = {}
    for i, node in enumerate(spn.nodes):
        if node.kind in kinds:
            groups.setdefault(spn.scopes[i], []).append(i)
    values = node_log_values(spn, data)
    ordered = sorted(groups.values(), key=min)
    cols = [_log_mean_exp(values[g]) for g in ordered]
    out = np.column_stack(cols) if cols else np.empty((data.shape[0], 0))
    meta = [{"nodes": [int(i) for i in g], "scope": spn.scope_vars(g[0])} for g in ordered]
    return EmbeddingMatrix(out, meta)


def generate_patch_queries(
    seed, d: int, img_h: int, img_w: int, min_side: int = 2, max_side: int = 10
) -> List[QueryTemplate]:
    """``d`` random rectangles with sides uniform in [min_side, max_side]
    and a top-left corner uniform over the positions that fit."""
    if not 2 <= min_side <= max_side <= min(img_h, img_w):
        raise ValueError(
            f"need 2 <= min_side <= max_side <= {min(img_h, img_w)}, got {min_side}, {max_side}"
        )
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(d):
        h = int(rng.integers(min_side, max_side + 1))
        w = int(rng.integers(min_side, max_side + 1))
        r = int(rng.integers(0, img_h - h + 1))
        c = int(rng.integers(0, img_w - w + 1))
        out.append(QueryTemplate(r, c, h, w, img_w))
    return out


def _template_vars(t) -> np.ndarray:
    if isinstance(t, QueryTemplate):
        return t.variables
    return np.asarray(sorted(set(int(v) for v in t)), dtype=np.int64)


def _template_meta(t) -> dict:
    if isinstance(t, QueryTemplate):
        return {"rect": [t.row, t.col, t.height, t.width]}
    return {"variables": [int(v) for v in _template_vars(t)]}


def query_embeddings(model: MarginalOracle, templates: Sequence, data) -> EmbeddingMatrix:
    """Column j holds log p(Q_j = x|Q_j) for every instance x.

    Each template is answered once per distinct configuration of its
    variables in the data.
    """
    n_vars = model.n_vars
    data = check_binary_matrix(data, n_vars, allow_empty=True)
    values = np.empty((data.shape[0], len(templates)))
    for j, t in enumerate(templates):
        qv = _template_vars(t)
        if qv.size == 0 or qv.max() >= n_vars:
            raise ValueError(f"template {j} lies outside the model's variables")
        configs, inverse = np.unique(data[:, qv], axis=0, return_inverse=True)
        E = np.full((configs.shape[0], n_vars), MARG, dtype=np.int8)
        E[:, qv] = configs
        values[:, j] = model.log_marginal(E)[inverse.ravel()]
    return EmbeddingMatrix(values, [_template_meta(t) for t in templates])


SCHEMES = ("full", "sum", "prod", "S", "M", "L", "scope-aggr", "scope-aggr-leaves")


def spn_embedding(spn: Spn, data, scheme: str, ranges: ScopeRanges = ScopeRanges()) -> EmbeddingMatrix:
    """Dispatch a node-based embedding scheme by name."""
    if scheme == "scope-aggr":
        return aggregate_by_scope(spn, data, include_leaves=False)
    if scheme == "scope-aggr-leaves":
        return aggregate_by_scope(spn, data, include_leaves=True)
    full = extract_inner(spn, data)
    if scheme == "full":
        return full
    if scheme == "sum":
        return filter_by_type(full, spn, "sum")
    if scheme == "prod":
        return filter_by_type(full, spn, "product")
    if scheme in ("S", "M", "L"):
        return filter_by_scope_length(full, spn, ranges, scheme)
    raise ValueError(f"unknown embedding scheme {scheme!r}; expected one of {SCHEMES}")


class NodeEmbedding(TransformerMixin, BaseEstimator):
    """Transformer mapping binary instances to SPN node activations.

    Parameters
    ----------
    spn : Spn
        A fitted network.
    scheme : str, default="full"
        One of "full", "sum", "prod", "S", "M", "L", "scope-aggr",
        "scope-aggr-leaves".
    medium_max : int, default=100
        Upper scope length of the medium range.
    """

    def __init__(self, spn=None, scheme="full", medium_max=100):
        self.spn = spn
        self.scheme = scheme
        self.medium_max = medium_max

    def fit(self, X=None, y=None):
        if self.spn is None:
            raise ValueError("NodeEmbedding needs a fitted spn")
        probe = spn_embedding(self.spn, np.zeros((0, self.spn.n_vars), dtype=np.int8),
                              self.scheme, ScopeRanges(self.medium_max))
        self.feature_meta_ = probe.feature_meta
        self.n_features_in_ = self.spn.n_vars
        return self

    def transform(self, X):
        check_is_fitted(self, "feature_meta_")
        return spn_embedding(self.spn, X, self.scheme, ScopeRanges(self.medium_max)).values


class RandomQueryEmbedding(TransformerMixin, BaseEstimator):
    """Transformer answering random rectangular marginal queries.

    ``model`` is any object with ``n_vars`` and ``log_marginal`` (an
    :class:`Spn` or a tree mixture).
    """

    def __init__(self, model=None, image_shape=None, n_queries=1000, min_side=2,
                 max_side=10, random_state=0):
        self.model = model
        self.image_shape = image_shape
        self.n_queries = n_queries
        self.min_side = min_side
        self.max_side = max_side
        self.random_state = random_state

    def fit(self, X=None, y=None):
        h, w = self.image_shape
        self.templates_ = generate_patch_queries(
            self.random_state, self.n_queries, h, w, self.min_side, self.max_side
        )
        return self

    def transform(self, X):
        check_is_fitted(self, "templates_")
        return query_embeddings(self.model, self.templates_, X).values
