import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import helpers
from spnrep.core import (
    LeafNode,
    ProductNode,
    ScopeRanges,
    SumNode,
    build_spn,
    check_complete,
    check_decomposable,
    check_locally_normalized,
    deserialize,
    leaf_node,
    node_depths,
    normalize_weights,
    product_node,
    scope_length,
    serialize,
    structural_stats,
    sum_node,
)
from spnrep.exceptions import SpnFormatError, SpnStructureError


def _unchecked(nodes, root, n_vars):
    """Build without raising so the check functions can be inspected."""
    from spnrep.core import Spn, _compute_scopes, _topological_order

    order = _topological_order(nodes, root)
    return Spn(nodes, root, n_vars, _compute_scopes(nodes, order), order, False)


class TestBuild:
    def test_minimal_network(self):
        spn = helpers.minimal_spn()
        assert len(spn) == 4
        assert spn.scope_vars(spn.root) == [0, 1]

    def test_xyzw_network(self):
        spn = helpers.xyzw_spn()
        assert structural_stats(spn).depth == 4
        assert spn.scope_vars(spn.root) == [0, 1, 2, 3]

    def test_incomplete_sum_rejected(self):
        nodes = [leaf_node(0, 0.5), leaf_node(0, 0.4), leaf_node(1, 0.5),
                 product_node([1, 2]), sum_node([0, 3], [0.5, 0.5])]
        with pytest.raises(SpnStructureError, match="completeness"):
            build_spn(nodes, 4, 2)

    def test_cycle_rejected(self):
        nodes = [leaf_node(0, 0.5), SumNode((0, 2), (math.log(0.5),) * 2), SumNode((1,), (0.0,))]
        with pytest.raises(SpnStructureError, match="cycle"):
            build_spn(nodes, 2, 1)

    def test_dangling_child(self):
        with pytest.raises(SpnStructureError, match="dangling"):
            build_spn([leaf_node(0, 0.5), sum_node([0, 5], [0.5, 0.5])], 1, 1)

    def test_empty_inner_nodes(self):
        with pytest.raises(SpnStructureError):
            build_spn([leaf_node(0, 0.5), SumNode((), ())], 1, 1)
        with pytest.raises(SpnStructureError):
            build_spn([leaf_node(0, 0.5), ProductNode((0,))], 1, 1)

    def test_root_out_of_range(self):
        with pytest.raises(SpnStructureError, match="root"):
            build_spn([leaf_node(0, 0.5)], 3, 1)

    def test_empty_node_list(self):
        with pytest.raises(SpnStructureError):
            build_spn([], 0, 1)

    def test_root_must_cover_all_variables(self):
        with pytest.raises(SpnStructureError):
            build_spn([leaf_node(0, 0.5)], 0, 2)

    def test_unnormalized_needs_flag(self):
        nodes = [leaf_node(0, 0.5), leaf_node(0, 0.2), sum_node([0, 1], [0.6, 0.6])]
        with pytest.raises(SpnStructureError, match="deviation"):
            build_spn(nodes, 2, 1)
        spn = build_spn(nodes, 2, 1, normalized=False)
        assert not spn.normalized

    def test_nodes_are_immutable(self):
        leaf = leaf_node(0, 0.3)
        with pytest.raises(AttributeError):
            leaf.var = 1


class TestChecks:
    def test_valid_network_reports_nothing(self):
        for spn in (helpers.minimal_spn(), helpers.xyzw_spn()):
            assert check_complete(spn) == []
            assert check_decomposable(spn) == []
            assert check_locally_normalized(spn) == []

    def test_sum_over_different_scopes(self):
        nodes = [leaf_node(0, 0.5), leaf_node(1, 0.5), sum_node([0, 1], [0.5, 0.5])]
        report = check_complete(_unchecked(nodes, 2, 2))
        assert len(report) == 1 and "sum node 2" in report[0]

    def test_overlapping_product(self):
        nodes = [leaf_node(0, 0.5), leaf_node(1, 0.5), leaf_node(1, 0.3),
                 product_node([0, 1]), product_node([3, 2])]
        report = check_decomposable(_unchecked(nodes, 4, 2))
        assert len(report) == 1 and "product node 4" in report[0]

    def test_disjoint_product(self):
        assert check_decomposable(helpers.factorized_spn([0.2, 0.4, 0.6])) == []

    @pytest.mark.parametrize("w, ok", [((0.6, 0.4), True), ((0.6, 0.6), False)])
    def test_normalization(self, w, ok):
        nodes = [leaf_node(0, 0.5), leaf_node(0, 0.2), sum_node([0, 1], w)]
        report = check_locally_normalized(_unchecked(nodes, 2, 1))
        assert (report == []) is ok
        if not ok:
            assert "deviation 0.2" in report[0]

    def test_single_child_unit_weight_sums(self):
        nodes = [leaf_node(0, 0.5), sum_node([0], [1.0]), sum_node([1], [1.0])]
        assert check_locally_normalized(_unchecked(nodes, 2, 1)) == []


class TestNormalize:
    @pytest.mark.parametrize("w, expect", [((2, 2), (0.5, 0.5)), ((1, 0), (1, 0)), ((3, 1), (0.75, 0.25))])
    def test_rescale(self, w, expect):
        nodes = [leaf_node(0, 0.5), leaf_node(0, 0.2), sum_node([0, 1], w)]
        spn = normalize_weights(build_spn(nodes, 2, 1, normalized=False))
        np.testing.assert_allclose(np.exp(spn.nodes[2].log_weights), expect, atol=1e-15)
        assert check_locally_normalized(spn) == []

    def test_zero_total(self):
        nodes = [leaf_node(0, 0.5), leaf_node(0, 0.2), sum_node([0, 1], [0, 0])]
        with pytest.raises(SpnStructureError, match="zero"):
            normalize_weights(build_spn(nodes, 2, 1, normalized=False))


class TestScopes:
    def test_scope_length(self):
        spn = helpers.xyzw_spn()
        assert scope_length(spn, 0) == 1
        assert scope_length(spn, spn.root) == 4
        assert scope_length(helpers.minimal_spn(), 2) == 2
        with pytest.raises(IndexError):
            scope_length(spn, 99)

    def test_ranges(self):
        r = ScopeRanges(100)
        assert [r.label(k) for k in (1, 2, 3, 4, 100, 101)] == [None, "S", "S", "M", "M", "L"]
        with pytest.raises(ValueError):
            ScopeRanges(3)

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 2**31 - 1), st.integers(1, 10))
    def test_random_dag_invariants(self, seed, n_vars):
        spn = helpers.random_spn(np.random.default_rng(seed), n_vars)
        assert check_complete(spn) == check_decomposable(spn) == check_locally_normalized(spn) == []
        assert scope_length(spn, spn.root) == n_vars
        pos = {nid: k for k, nid in enumerate(spn.order)}
        for i, node in enumerate(spn.nodes):
            expected = 1 << node.var if node.kind == "leaf" else 0
            for c in node.children:
                assert pos[c] < pos[i]
                expected |= spn.scopes[c]
            assert spn.scopes[i] == expected


class TestStats:
    def test_single_leaf_under_sum(self):
        spn = build_spn([leaf_node(0, 0.4), sum_node([0], [1.0])], 1, 1)
        s = structural_stats(spn)
        assert (s.depth, s.n_edges, s.n_sum, s.n_product, s.n_leaves) == (1, 1, 1, 0, 1)

    def test_xyzw_counts(self):
        # hand count: 12 leaves, products P1..P6, sums root/Sa/Sb
        s = structural_stats(helpers.xyzw_spn())
        assert (s.depth, s.n_edges, s.n_sum, s.n_product, s.n_leaves) == (4, 20, 3, 6, 12)
        # scopes: {X} {Y} {Z} {W} {X,Y} {Z,W} {X,Y,Z,W}
        assert (s.n_unique_scopes, s.n_unique_inner_scopes) == (7, 3)
        assert (s.n_small, s.n_medium, s.n_large) == (6, 3, 0)

    def test_minimal_one_inner_scope(self):
        assert structural_stats(helpers.minimal_spn()).n_unique_inner_scopes == 1

    def test_depths(self):
        d = node_depths(helpers.xyzw_spn())
        assert d[20] == 0 and d[19] == 1 and d[8] == 2 and d[0] == 4


class TestSerialize:
    def test_round_trip(self):
        spn = helpers.xyzw_spn()
        back = deserialize(serialize(spn))
        assert back == spn
        for a, b in zip(spn.nodes, back.nodes):
            assert a == b  # exact floats

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 2**31 - 1))
    def test_round_trip_random(self, seed):
        spn = helpers.random_spn(np.random.default_rng(seed), 6, zero_leaves=0.2)
        assert deserialize(serialize(spn)) == spn

    def test_empty_document(self):
        with pytest.raises(SpnFormatError):
            deserialize("")

    def test_version_mismatch(self):
        text = serialize(helpers.minimal_spn()).replace("v1", "v9", 1)
        with pytest.raises(SpnFormatError):
            deserialize(text)

    def test_malformed_record(self):
        text = serialize(helpers.minimal_spn()) + "Q 7 1\n"
        with pytest.raises(SpnFormatError):
            deserialize(text)

    def test_broken_weight(self):
        lines = serialize(helpers.xyzw_spn()).splitlines()
        k = next(i for i, l in enumerate(lines) if l.startswith("S 20"))
        parts = lines[k].split()
        parts[4] = repr(math.log(0.9))
        lines[k] = " ".join(parts)
        with pytest.raises(SpnFormatError, match="validation"):
            deserialize("\n".join(lines))

    def test_comments_ignored(self):
        spn = helpers.minimal_spn()
        assert deserialize("# a model\n" + serialize(spn)) == spn
