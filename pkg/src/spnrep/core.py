"""SPN graph representation: node types, construction, validity checks,
normalization, structural statistics and the text model format."""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np

from .exceptions import SpnFormatError, SpnStructureError

MAX_VARS = 4096
NORMALIZATION_TOL = 1e-9
LOG_ZERO = -np.inf

MODEL_HEADER = "spn-model"
MODEL_VERSION = "v1"


def _log(p: float) -> float:
    return math.log(p) if p > 0.0 else LOG_ZERO


@dataclass(frozen=True)
class SumNode:
    children: Tuple[int, ...]
    log_weights: Tuple[float, ...]

    kind = "sum"


@dataclass(frozen=True)
class ProductNode:
    children: Tuple[int, ...]

    kind = "product"


@dataclass(frozen=True)
class LeafNode:
    """Bernoulli leaf; ``log_p`` holds (log p(X=0), log p(X=1))."""

    var: int
    log_p: Tuple[float, float]

    kind = "leaf"
    children: Tuple[int, ...] = field(default=(), init=False, repr=False)


Node = Union[SumNode, ProductNode, LeafNode]


def sum_node(children: Sequence[int], weights: Sequence[float]) -> SumNode:
    """Build a sum node from linear-domain weights."""
    if len(children) != len(weights):
        raise SpnStructureError("sum node needs one weight per child")
    if any(w < 0 for w in weights):
        raise SpnStructureError("sum weights must be nonnegative")
    return SumNode(tuple(int(c) for c in children), tuple(_log(float(w)) for w in weights))


def product_node(children: Sequence[int]) -> ProductNode:
    return ProductNode(tuple(int(c) for c in children))


def leaf_node(var: int, p1: float) -> LeafNode:
    """Build a Bernoulli leaf with p(X=1) = ``p1``."""
    if not 0.0 <= p1 <= 1.0:
        raise SpnStructureError(f"leaf probability {p1} outside [0, 1]")
    return LeafNode(int(var), (_log(1.0 - p1), _log(p1)))


def _popcount(mask: int) -> int:
    return bin(mask).count("1")


def _mask_vars(mask: int) -> List[int]:
    out = []
    i = 0
    while mask:
        if mask & 1:
            out.append(i)
        mask >>= 1
        i += 1
    return out


class Spn:
    """Immutable rooted DAG of sum, product and Bernoulli leaf nodes.

    Node ids are list positions in ``nodes``. ``order`` is a topological
    order with children before parents and the root last. Scopes are stored
    as integer bitmasks.

    Use :func:`build_spn` to construct instances; the constructor assumes
    its arguments were already validated.
    """

    __slots__ = ("nodes", "root", "n_vars", "scopes", "order", "normalized", "_cache")

    def __init__(self, nodes, root, n_vars, scopes, order, normalized):
        self.nodes: Tuple[Node, ...] = tuple(nodes)
        self.root: int = root
        self.n_vars: int = n_vars
        self.scopes: Tuple[int, ...] = tuple(scopes)
        self.order: Tuple[int, ...] = tuple(order)
        self.normalized: bool = normalized
        self._cache: dict = {}

    def __len__(self) -> int:
        return len(self.nodes)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Spn):
            return NotImplemented
        return (
            self.nodes == other.nodes
            and self.root == other.root
            and self.n_vars == other.n_vars
        )

    def __hash__(self):
        return hash((self.nodes, self.root, self.n_vars))

    def __repr__(self) -> str:
        return (
            f"Spn(n_vars={self.n_vars}, n_nodes={len(self.nodes)}, "
            f"root={self.root}, normalized={self.normalized})"
        )

    def scope_vars(self, node_id: int) -> List[int]:
        return _mask_vars(self.scopes[node_id])

    def ids_of_kind(self, kind: str) -> List[int]:
        return [i for i, n in enumerate(self.nodes) if n.kind == kind]

    @property
    def scope_lengths(self) -> np.ndarray:
        if "scope_lengths" not in self._cache:
            self._cache["scope_lengths"] = np.array(
                [_popcount(s) for s in self.scopes], dtype=np.int64
            )
        return self._cache["scope_lengths"]

    @property
    def scope_matrix(self) -> np.ndarray:
        """Boolean (n_nodes, n_vars) matrix; row i flags the scope of node i."""
        if "scope_matrix" not in self._cache:
            mat = np.zeros((len(self.nodes), self.n_vars), dtype=bool)
            for i, s in enumerate(self.scopes):
                mat[i, _mask_vars(s)] = True
            self._cache["scope_matrix"] = mat
        return self._cache["scope_matrix"]

    def log_marginal(self, evidence) -> np.ndarray:
        """Batch marginal log-probabilities; see :func:`spnrep.inference.marginal`."""
        from .inference import log_marginal_batch

        return log_marginal_batch(self, evidence)


def _topological_order(nodes: Sequence[Node], root: int) -> List[int]:
    """Post-order DFS from the root. Raises on cycles."""
    n = len(nodes)
    state = [0] * n  # 0 new, 1 on stack, 2 done
    order: List[int] = []
    stack = [(root, 0)]
    state[root] = 1
    while stack:
        node_id, pos = stack[-1]
        children = nodes[node_id].children
        if pos < len(children):
            stack[-1] = (node_id, pos + 1)
            c = children[pos]
            if state[c] == 1:
                raise SpnStructureError(f"cycle detected through node {c}")
            if state[c] == 0:
                state[c] = 1
                stack.append((c, 0))
        else:
            state[node_id] = 2
            order.append(node_id)
            stack.pop()
    unreachable = [i for i in range(n) if state[i] == 0]
    if unreachable:
        raise SpnStructureError(f"nodes unreachable from root: {unreachable[:10]}")
    return order


def _compute_scopes(nodes: Sequence[Node], order: Sequence[int]) -> List[int]:
    scopes = [0] * len(nodes)
    for i in order:
        node = nodes[i]
        if node.kind == "leaf":
            scopes[i] = 1 << node.var
        else:
            s = 0
            for c in node.children:
                s |= scopes[c]
            scopes[i] = s
    return scopes


def _check_node_shapes(nodes: Sequence[Node], n_vars: int, normalized: bool) -> None:
    n = len(nodes)
    for i, node in enumerate(nodes):
        if isinstance(node, SumNode):
            if len(node.children) < 1:
                raise SpnStructureError(f"sum node {i} has no children")
            if len(node.log_weights) != len(node.children):
                raise SpnStructureError(f"sum node {i}: weight/child count mismatch")
            if any(math.isnan(w) or w == math.inf for w in node.log_weights):
                raise SpnStructureError(f"sum node {i}: invalid log weight")
        elif isinstance(node, ProductNode):
            if len(node.children) < 2:
                raise SpnStructureError(f"product node {i} needs at least 2 children")
        elif isinstance(node, LeafNode):
            if not 0 <= node.var < n_vars:
                raise SpnStructureError(f"leaf {i}: variable {node.var} out of range")
            if len(node.log_p) != 2 or any(math.isnan(v) or v > 0 for v in node.log_p):
                raise SpnStructureError(f"leaf {i}: malformed probability table")
        else:
            raise SpnStructureError(f"node {i}: unknown node type {type(node).__name__}")
        for c in node.children:
            if not 0 <= c < n:
                raise SpnStructureError(f"node {i}: dangling child id {c}")


def build_spn(
    nodes: Iterable[Node],
    root: int,
    n_vars: int,
    normalized: bool = True,
) -> Spn:
    """Validate a node list and return an immutable :class:`Spn`.

    Parameters
    ----------
    nodes : iterable of SumNode, ProductNode, LeafNode
        Node ``i`` of the list gets id ``i``. Any order is accepted as long
        as the graph is acyclic.
    root : int
        Id of the root node.
    n_vars : int
        Number of variables; the root scope must cover all of them.
    normalized : bool, default=True
        Require local normalization (tolerance 1e-9). Pass False to build
        unnormalized networks, e.g. before :func:`normalize_weights`.

    Raises
    ------
    SpnStructureError
        On cycles, dangling or unreachable nodes, empty inner nodes,
        incomplete sums, non-decomposable products or, when ``normalized``
        is set, unnormalized weights.
    """
    nodes = list(nodes)
    if not nodes:
        raise SpnStructureError("empty node list")
    if not 1 <= n_vars <= MAX_VARS:
        raise SpnStructureError(f"n_vars must be in [1, {MAX_VARS}], got {n_vars}")
    if not 0 <= root < len(nodes):
        raise SpnStructureError(f"root {root} out of range")
    _check_node_shapes(nodes, n_vars, normalized)
    order = _topological_order(nodes, root)
    scopes = _compute_scopes(nodes, order)
    if scopes[root] != (1 << n_vars) - 1:
        raise SpnStructureError("root scope does not cover all variables")

    spn = Spn(nodes, root, n_vars, scopes, order, normalized)
    problems = check_complete(spn) + check_decomposable(spn)
    if normalized:
        problems += check_locally_normalized(spn, NORMALIZATION_TOL)
    if problems:
        raise SpnStructureError("; ".join(problems[:5]))
    return spn


def check_complete(spn: Spn) -> List[str]:
    """Return one message per sum node whose children disagree on scope."""
    report = []
    for i, node in enumerate(spn.nodes):
        if node.kind == "sum":
            first = spn.scopes[node.children[0]]
            if any(spn.scopes[c] != first for c in node.children[1:]):
                report.append(f"completeness violated at sum node {i}")
    return report


def check_decomposable(spn: Spn) -> List[str]:
    """Return one message per product node with overlapping child scopes."""
    report = []
    for i, node in enumerate(spn.nodes):
        if node.kind == "product":
            seen = 0
            for c in node.children:
                if seen & spn.scopes[c]:
                    report.append(f"decomposability violated at product node {i}")
                    break
                seen |= spn.scopes[c]
    return report


def check_locally_normalized(spn: Spn, tol: float = NORMALIZATION_TOL) -> List[str]:
    report = []
    for i, node in enumerate(spn.nodes):
        if node.kind == "sum":
            total = math.fsum(math.exp(w) for w in node.log_weights)
        elif node.kind == "leaf":
            total = math.fsum(math.exp(v) for v in node.log_p)
        else:
            continue
        dev = abs(total - 1.0)
        if dev > tol:
            report.append(f"node {i} ({node.kind}) weights sum to {total!r} (deviation {dev:.3g})")
    return report


def normalize_weights(spn: Spn) -> Spn:
    """Rescale every sum node's weights (and leaf tables) to sum to one."""
    nodes: List[Node] = []
    for i, node in enumerate(spn.nodes):
        if node.kind == "sum":
            lw = np.asarray(node.log_weights, dtype=float)
            if np.all(lw == LOG_ZERO):
                raise SpnStructureError(f"sum node {i} has zero total weight")
            m = lw.max()
            log_total = m + math.log(math.fsum(np.exp(lw - m)))
            nodes.append(SumNode(node.children, tuple(float(w - log_total) for w in lw)))
        elif node.kind == "leaf":
            lp = np.asarray(node.log_p, dtype=float)
            if np.all(lp == LOG_ZERO):
                raise SpnStructureError(f"leaf {i} has zero total mass")
            m = lp.max()
            log_total = m + math.log(math.fsum(np.exp(lp - m)))
            nodes.append(LeafNode(node.var, tuple(float(v - log_total) for v in lp)))
        else:
            nodes.append(node)
    return build_spn(nodes, spn.root, spn.n_vars, normalized=True)


def scope_length(spn: Spn, node_id: int) -> int:
    if not 0 <= node_id < len(spn.nodes):
        raise IndexError(f"node id {node_id} out of range")
    return _popcount(spn.scopes[node_id])


@dataclass(frozen=True)
class ScopeRanges:
    """Scope-length groups: small [2, 3], medium [4, medium_max], large above."""

    medium_max: int = 100

    def __post_init__(self):
        if self.medium_max < 4:
            raise ValueError("medium_max must be at least 4")

    def label(self, length: int) -> Optional[str]:
        if length <= 1:
            return None
        if length <= 3:
            return "S"
        if length <= self.medium_max:
            return "M"
        return "L"


@dataclass(frozen=True)
class StructStats:
    depth: int
    n_edges: int
    n_sum: int
    n_product: int
    n_leaves: int
    n_unique_scopes: int
    n_unique_inner_scopes: int
    n_small: int
    n_medium: int
    n_large: int

    def as_row(self) -> dict:
        return {
            "depth": self.depth,
            "edges": self.n_edges,
            "sum": self.n_sum,
            "prod": self.n_product,
            "leaves": self.n_leaves,
            "unique_scopes": self.n_unique_scopes,
            "S": self.n_small,
            "M": self.n_medium,
            "L": self.n_large,
        }


def node_heights(spn: Spn) -> np.ndarray:
    """Longest distance in edges from each node down to a leaf."""
    h = np.zeros(len(spn.nodes), dtype=np.int64)
    for i in spn.order:
        ch = spn.nodes[i].children
        if ch:
            h[i] = 1 + max(h[c] for c in ch)
    return h


def node_depths(spn: Spn) -> np.ndarray:
    """Shortest distance in edges from the root to each node."""
    depth = np.full(len(spn.nodes), -1, dtype=np.int64)
    depth[spn.root] = 0
    frontier = [spn.root]
    while frontier:
        nxt = []
        for i in frontier:
            for c in spn.nodes[i].children:
                if depth[c] < 0:
                    depth[c] = depth[i] + 1
                    nxt.append(c)
        frontier = nxt
    return depth


def structural_stats(spn: Spn, ranges: ScopeRanges = ScopeRanges()) -> StructStats:
    kinds = Counter(n.kind for n in spn.nodes)
    lengths = spn.scope_lengths
    groups = Counter()
    for i, node in enumerate(spn.nodes):
        if node.kind != "leaf":
            label = ranges.label(int(lengths[i]))
            if label is not None:
                groups[label] += 1
    inner_scopes = {spn.scopes[i] for i, n in enumerate(spn.nodes) if n.kind != "leaf"}
    return StructStats(
        depth=int(node_heights(spn)[spn.root]),
        n_edges=sum(len(n.children) for n in spn.nodes),
        n_sum=kinds["sum"],
        n_product=kinds["product"],
        n_leaves=kinds["leaf"],
        n_unique_scopes=len(set(spn.scopes)),
        n_unique_inner_scopes=len(inner_scopes),
        n_small=groups["S"],
        n_medium=groups["M"],
        n_large=groups["L"],
    )


def _fmt(x: float) -> str:
    return "%.17g" % x


def serialize(spn: Spn) -> str:
    lines = [f"{MODEL_HEADER} {MODEL_VERSION} {spn.n_vars} {len(spn.nodes)} {spn.root}"]
    for i in spn.order:
        node = spn.nodes[i]
        if node.kind == "sum":
            parts = [f"{c} {_fmt(w)}" for c, w in zip(node.children, node.log_weights)]
            lines.append(f"S {i} {len(node.children)} " + " ".join(parts))
        elif node.kind == "product":
            lines.append(f"P {i} {len(node.children)} " + " ".join(map(str, node.children)))
        else:
            lines.append(f"L {i} {node.var} {_fmt(node.log_p[0])} {_fmt(node.log_p[1])}")
    return "\n".join(lines) + "\n"


def deserialize(text: str, normalized: bool = True) -> Spn:
    records = []
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if line:
            records.append(line.split())
    if not records:
        raise SpnFormatError("empty model document")
    header = records[0]
    if len(header) != 5 or header[0] != MODEL_HEADER:
        raise SpnFormatError("missing 'spn-model' header")
    if header[1] != MODEL_VERSION:
        raise SpnFormatError(f"unsupported model version {header[1]!r}")
    try:
        n_vars, n_nodes, root = (int(v) for v in header[2:])
    except ValueError as exc:
        raise SpnFormatError(f"malformed header: {' '.join(header)}") from exc

    nodes: List[Optional[Node]] = [None] * n_nodes
    for rec in records[1:]:
        try:
            tag, node_id = rec[0], int(rec[1])
            if tag == "S":
                k = int(rec[2])
                if len(rec) != 3 + 2 * k:
                    raise ValueError("wrong field count")
                children = tuple(int(v) for v in rec[3::2])
                log_w = tuple(float(v) for v in rec[4::2])
                node: Node = SumNode(children, log_w)
            elif tag == "P":
                k = int(rec[2])
                if len(rec) != 3 + k:
                    raise ValueError("wrong field count")
                node = ProductNode(tuple(int(v) for v in rec[3:]))
            elif tag == "L":
                if len(rec) != 5:
                    raise ValueError("wrong field count")
                node = LeafNode(int(rec[2]), (float(rec[3]), float(rec[4])))
            else:
                raise ValueError(f"unknown record tag {tag!r}")
            if not 0 <= node_id < n_nodes or nodes[node_id] is not None:
                raise ValueError(f"bad or duplicate node id {node_id}")
        except (ValueError, IndexError) as exc:
            raise SpnFormatError(f"malformed record {' '.join(rec)!r}: {exc}") from exc
        nodes[node_id] = node
    missing = [i for i, n in enumerate(nodes) if n is None]
    if missing:
        raise SpnFormatError(f"missing node records: {missing[:10]}")
    try:
        return build_spn(nodes, root, n_vars, normalized=normalized)
    except SpnStructureError as exc:
        raise SpnFormatError(f"model failed validation: {exc}") from exc
