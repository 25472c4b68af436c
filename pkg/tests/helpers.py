"""Shared fixtures: hand-built networks, a random valid-SPN generator and
brute-force enumeration oracles working in the linear domain.

The oracles walk the node list recursively with plain products and sums of
probabilities; they share no code with the log-domain evaluators they check.
"""

import itertools
import math

import numpy as np

from spnrep.core import build_spn, leaf_node, product_node, sum_node

X, Y, Z, W = range(4)


def xyzw_spn():
    """Four-variable network over X, Y, Z, W with three sum nodes.

    root(sum) -> P1(prod) -> {Sa over XY, Sb over ZW}, P2(prod over 4 leaves)
    Sa -> P3(X,Y), P4(X,Y);  Sb -> P5(Z,W), P6(Z,W)
    """
    nodes = [
        leaf_node(X, 0.2),   # 0
        leaf_node(Y, 0.7),   # 1
        leaf_node(X, 0.9),   # 2
        leaf_node(Y, 0.4),   # 3
        leaf_node(Z, 0.3),   # 4
        leaf_node(W, 0.8),   # 5
        leaf_node(Z, 0.6),   # 6
        leaf_node(W, 0.1),   # 7
        leaf_node(X, 0.5),   # 8
        leaf_node(Y, 0.5),   # 9
        leaf_node(Z, 0.5),   # 10
        leaf_node(W, 0.5),   # 11
        product_node([0, 1]),  # 12 P3
        product_node([2, 3]),  # 13 P4
        sum_node([12, 13], [0.3, 0.7]),  # 14 Sa
        product_node([4, 5]),  # 15 P5
        product_node([6, 7]),  # 16 P6
        sum_node([15, 16], [0.6, 0.4]),  # 17 Sb
        product_node([14, 17]),  # 18 P1
        product_node([8, 9, 10, 11]),  # 19 P2
        sum_node([18, 19], [0.75, 0.25]),  # 20 root
    ]
    return build_spn(nodes, 20, 4)


def minimal_spn(p0=0.3, p1=0.5):
    """sum(weight 1) -> product -> two leaves over X0, X1."""
    nodes = [leaf_node(0, p0), leaf_node(1, p1), product_node([0, 1]), sum_node([2], [1.0])]
    return build_spn(nodes, 3, 2)


def factorized_spn(probs):
    nodes = [leaf_node(v, p) for v, p in enumerate(probs)]
    if len(probs) == 1:
        return build_spn(nodes, 0, 1)
    nodes.append(product_node(range(len(probs))))
    return build_spn(nodes, len(probs), len(probs))


def random_spn(rng, n_vars, max_depth=6, reuse=0.2, zero_leaves=0.0, normalized=True, sharp=False):
    """Random complete, decomposable network with alternating inner types.

    Nodes over an already seen scope may be reused, giving a DAG. With
    ``normalized=False`` sum weights are drawn unnormalized; ``sharp``
    draws leaf probabilities close to 0 or 1 (low-entropy distributions).
    """
    nodes = []
    done = {}

    def add(node):
        nodes.append(node)
        return len(nodes) - 1

    def leaf(v):
        if rng.random() < zero_leaves:
            p = float(rng.integers(0, 2))
        elif sharp:
            p = float(rng.uniform(0.0005, 0.005))
            p = 1.0 - p if rng.random() < 0.5 else p
        else:
            p = float(rng.uniform(0.05, 0.95))
        return add(leaf_node(v, p))

    def weights(k):
        w = rng.dirichlet(np.ones(k))
        if not normalized:
            w = w * rng.uniform(0.3, 2.0)
        return w

    def build(scope, depth, want):
        key = tuple(scope)
        if key in done and rng.random() < reuse:
            return done[key][int(rng.integers(len(done[key])))]
        if len(scope) == 1:
            if want == "sum" and depth + 1 <= max_depth and rng.random() < 0.3:
                kids = [leaf(scope[0]) for _ in range(2)]
                nid = add(sum_node(kids, weights(2)))
            else:
                nid = leaf(scope[0])
        elif depth + 1 >= max_depth:
            nid = add(product_node([leaf(v) for v in scope]))
        elif want == "sum":
            k = int(rng.integers(2, 4)) if depth + 2 <= max_depth else 2
            kids = [build(scope, depth + 1, "product") for _ in range(k)]
            nid = add(sum_node(kids, weights(k)))
        else:
            perm = list(rng.permutation(scope))
            n_parts = int(rng.integers(2, min(3, len(scope)) + 1))
            cuts = sorted(rng.choice(np.arange(1, len(scope)), n_parts - 1, replace=False))
            parts = [sorted(int(v) for v in p) for p in np.split(perm, cuts)]
            kids = [build(p, depth + 1, "sum") for p in parts]
            nid = add(product_node(kids))
        done.setdefault(key, []).append(nid)
        return nid

    root = build(list(range(n_vars)), 0, "sum")
    return build_spn(nodes, root, n_vars, normalized=normalized)


def state_index(X):
    """Row index of each complete instance in :func:`all_instances` order."""
    X = np.asarray(X, dtype=np.int64)
    return X @ (1 << np.arange(X.shape[1] - 1, -1, -1))


def l1_noise_floor(p, n):
    """Expected L1 distance between an n-sample histogram and p (normal approx.)."""
    p = np.asarray(p)
    return float(np.sum(np.sqrt(2 * p * (1 - p) / (np.pi * n))))


def all_instances(n_vars):
    return np.array(list(itertools.product((0, 1), repeat=n_vars)), dtype=np.int8)


def linear_values(spn, X, use_max=False, marg_value=None):
    """Linear-domain node outputs for every row of X, by direct recursion.

    Entries of X equal to -1 are marginalized: the leaf outputs 1, or its
    larger state probability when ``use_max`` (max-product evaluation).
    """
    X = np.asarray(X)
    memo = {}

    def val(i):
        if i in memo:
            return memo[i]
        node = spn.nodes[i]
        if node.kind == "leaf":
            p0, p1 = math.exp(node.log_p[0]), math.exp(node.log_p[1])
            col = X[:, node.var]
            unobserved = max(p0, p1) if use_max else 1.0
            out = np.where(col == 1, p1, np.where(col == 0, p0, unobserved))
        elif node.kind == "product":
            out = np.ones(len(X))
            for c in node.children:
                out = out * val(c)
        else:
            terms = [math.exp(w) * val(c) for c, w in zip(node.children, node.log_weights)]
            out = np.max(terms, axis=0) if use_max else np.sum(terms, axis=0)
        memo[i] = out
        return out

    return val(spn.root)


def joint_table(spn):
    """Linear probabilities S(x) for every complete x, in itertools order."""
    return linear_values(spn, all_instances(spn.n_vars))


def brute_marginal(spn, evidence):
    """Sum of S(x) over all completions consistent with the evidence."""
    evidence = np.asarray(evidence)
    table = joint_table(spn)
    inst = all_instances(spn.n_vars)
    mask = np.all((evidence < 0) | (inst == evidence), axis=1)
    return table[mask].sum()


def random_evidence(rng, n_vars, p_marg=0.5):
    e = rng.integers(0, 2, n_vars).astype(np.int8)
    e[rng.random(n_vars) < p_marg] = -1
    return e


# acceptance lines collected by tests and echoed by the conftest summary hook
ACCEPTANCE = []


def report(number, ok, detail):
    line = f"{'PASS' if ok else 'FAIL'} criterion {number:2d}: {detail}"
    ACCEPTANCE.append((number, line))
    print(line)
    return ok
