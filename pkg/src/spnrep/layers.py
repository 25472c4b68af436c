"""Layered (sparse MLP) form of an SPN and batch evaluation over it.

Nodes are grouped by (height above the leaves, kind). Sum layers hold a
sparse matrix of linear weights, product layers a 0/1 connection matrix.
Rows are output nodes, columns the input nodes feeding the layer.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List

import numpy as np
import scipy.sparse as sp

from .core import Spn, node_heights
from .validation import check_binary_matrix


@dataclass(frozen=True)
class Layer:
    kind: str
    matrix: sp.csr_matrix
    inputs: np.ndarray
    outputs: np.ndarray


@dataclass(frozen=True)
class LayeredSpn:
    n_vars: int
    n_nodes: int
    root: int
    leaf_ids: np.ndarray
    leaf_vars: np.ndarray
    leaf_log_p: np.ndarray
    layers: List[Layer]


def compile_layers(spn: Spn) -> LayeredSpn:
    heights = node_heights(spn)
    groups = {}
    for i, node in enumerate(spn.nodes):
        if node.kind != "leaf":
            groups.setdefault((int(heights[i]), node.kind), []).append(i)

    layers = []
    for key in sorted(groups, key=lambda k: (k[0], k[1] != "product")):
        kind = key[1]
        outputs = np.array(sorted(groups[key]), dtype=np.int64)
        inputs = np.array(
            sorted({c for i in outputs for c in spn.nodes[i].children}), dtype=np.int64
        )
        col = {nid: j for j, nid in enumerate(inputs)}
        rows, cols, data = [], [], []
        for r, i in enumerate(outputs):
            node = spn.nodes[i]
            weights = np.exp(node.log_weights) if kind == "sum" else np.ones(len(node.children))
            for c, w in zip(node.children, weights):
                rows.append(r)
                cols.append(col[c])
                data.append(w)
        matrix = sp.csr_matrix(
            (np.asarray(data, dtype=float), (rows, cols)), shape=(len(outputs), len(inputs))
        )
        matrix.sort_indices()
        layers.append(Layer(kind, matrix, inputs, outputs))

    leaf_ids = np.array(spn.ids_of_kind("leaf"), dtype=np.int64)
    return LayeredSpn(
        n_vars=spn.n_vars,
        n_nodes=len(spn.nodes),
        root=spn.root,
        leaf_ids=leaf_ids,
        leaf_vars=np.array([spn.nodes[i].var for i in leaf_ids], dtype=np.int64),
        leaf_log_p=np.array([spn.nodes[i].log_p for i in leaf_ids], dtype=float).reshape(-1, 2),
        layers=layers,
    )


def _sum_layer(matrix: sp.csr_matrix, x: np.ndarray) -> np.ndarray:
    """Row-wise stabilized log(W exp(x)) for log-domain inputs ``x``."""
    indptr, indices = matrix.indptr, matrix.indices
    with np.errstate(divide="ignore"):
        terms = np.log(matrix.data)[:, None] + x[indices]
    starts = indptr[:-1]
    row_max = np.maximum.reduceat(terms, starts, axis=0)
    finite = np.isfinite(row_max)
    shift = np.where(finite, row_max, 0.0)
    row_of = np.repeat(np.arange(matrix.shape[0]), np.diff(indptr))
    scaled = np.exp(terms - shift[row_of])
    with np.errstate(divide="ignore"):
        out = np.log(np.add.reduceat(scaled, starts, axis=0)) + shift
    return np.where(finite, out, row_max)


def evaluate_layered(layered: LayeredSpn, X) -> np.ndarray:
    """Root log-probability for every row of a complete binary batch."""
    X = np.asarray(X)
    if X.ndim != 2 or X.shape[1] != layered.n_vars:
        raise ValueError(f"batch must have shape (n, {layered.n_vars}), got {X.shape}")
    if X.shape[0] == 0:
        return np.empty(0)
    X = check_binary_matrix(X, layered.n_vars)

    values = np.empty((layered.n_nodes, X.shape[0]))
    states = X[:, layered.leaf_vars].T.astype(np.int64)
    values[layered.leaf_ids] = np.take_along_axis(layered.leaf_log_p, states, axis=1)
    for layer in layered.layers:
        x = values[layer.inputs]
        if layer.kind == "product":
            values[layer.outputs] = layer.matrix @ x
        else:
            values[layer.outputs] = _sum_layer(layer.matrix, x)
    return values[layered.root]
