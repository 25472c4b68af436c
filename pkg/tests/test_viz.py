import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import helpers
from spnrep.core import build_spn, leaf_node
from spnrep.inference import activations_batch, evaluate
from spnrep.viz import (
    RED,
    ImageShape,
    activation_map,
    grid_csv,
    layer_scope_matrix,
    mpe_filter_images,
    nearest_rows,
    node_count_map,
    patch_marginal_map,
    read_pgm,
    read_ppm,
    samples_with_nn,
    scale_to_gray,
    scope_length_histogram,
    write_binary_pgm,
    write_pgm,
    write_ppm,
)

M = -1
SQ = ImageShape(2, 2)
WHITE = (255, 255, 255)


def single_leaf(p=0.9):
    return build_spn([leaf_node(0, p)], 0, 1)


class TestStructurePlots:
    def test_histogram_single_leaf(self):
        assert scope_length_histogram(single_leaf()) == [(1, 1)]

    def test_histogram_xyzw(self):
        assert scope_length_histogram(helpers.xyzw_spn()) == [(1, 12), (2, 6), (4, 3)]

    def test_layer_matrix_xyzw(self):
        mat, cols = layer_scope_matrix(helpers.xyzw_spn())
        assert cols == [1, 2, 4]
        # root; P1 P2; Sa Sb plus the four 0.5 leaves under P2; P3..P6; leaves under P3..P6
        np.testing.assert_array_equal(mat, [[0, 0, 1], [0, 0, 1], [1, 1, 0], [0, 1, 0], [1, 0, 0]])

    @settings(max_examples=20, deadline=None)
    @given(st.integers(0, 2**31 - 1))
    def test_histogram_totals(self, seed):
        spn = helpers.random_spn(np.random.default_rng(seed), 6)
        hist = scope_length_histogram(spn)
        assert sum(c for _, c in hist) == len(spn)
        mat, cols = layer_scope_matrix(spn)
        assert cols == [l for l, _ in hist]
        assert (mat.sum(axis=0) >= 1).all()


class TestFilters:
    def test_leaf_filter(self):
        spn = helpers.factorized_spn([0.5, 0.5, 0.9, 0.5])
        assert spn.nodes[2].var == 2
        img = mpe_filter_images(spn, [2], SQ)[0]
        assert tuple(img[1, 0]) == WHITE
        for r, c in [(0, 0), (0, 1), (1, 1)]:
            assert tuple(img[r, c]) == RED

    def test_root_has_full_scope(self):
        spn = helpers.xyzw_spn()
        img = mpe_filter_images(spn, [spn.root], SQ)[0]
        assert not np.all(img == RED, axis=2).any()

    def test_product_is_union_of_children(self):
        spn = helpers.xyzw_spn()
        imgs = mpe_filter_images(spn, [12, 0, 1], SQ)  # P3 = leaf X * leaf Y
        red = lambda im: np.all(im == RED, axis=2)
        np.testing.assert_array_equal(~red(imgs[0]), ~red(imgs[1]) | ~red(imgs[2]))
        for child in imgs[1:]:
            np.testing.assert_array_equal(imgs[0][~red(child)], child[~red(child)])

    def test_errors(self):
        with pytest.raises(ValueError):
            mpe_filter_images(helpers.xyzw_spn(), [99], SQ)
        with pytest.raises(ValueError):
            mpe_filter_images(helpers.xyzw_spn(), [0], ImageShape(3, 3))


class TestActivations:
    def test_all_marginalized_normalized_net(self):
        grid = activation_map(helpers.xyzw_spn(), [M] * 4, SQ, "normalized")
        np.testing.assert_allclose(grid, 1.0, rtol=0, atol=1e-15)

    def test_all_marginalized_counts(self):
        spn = helpers.xyzw_spn()
        np.testing.assert_allclose(activation_map(spn, [M] * 4, SQ, "all"), node_count_map(spn, SQ), atol=1e-13)

    def test_single_leaf(self):
        assert activation_map(single_leaf(0.9), [1], ImageShape(1, 1))[0, 0] == pytest.approx(0.9)
        assert activation_map(single_leaf(0.9), [0], ImageShape(1, 1))[0, 0] == pytest.approx(0.1)

    def test_matches_node_sums(self):
        spn = helpers.xyzw_spn()
        x = np.array([1, 0, 1, 1])
        acts = np.exp(activations_batch(spn, x[None, :])[0])
        grid = activation_map(spn, x, SQ).ravel()
        for v in range(4):
            want = sum(acts[i] for i in range(len(spn)) if spn.scope_matrix[i, v])
            assert grid[v] == pytest.approx(want, abs=1e-13)

    def test_mode_partition(self):
        spn = helpers.xyzw_spn()
        x = [1, 1, 0, M]
        s = activation_map(spn, x, SQ, "sum_only")
        p = activation_map(spn, x, SQ, "product_only")
        leaves = activation_map(spn, x, SQ, "all") - s - p
        assert (leaves > 0).all()

    def test_bad_mode(self):
        with pytest.raises(ValueError):
            activation_map(helpers.xyzw_spn(), [0] * 4, SQ, "leaves")


class TestCounts:
    def test_count_identities(self):
        spn = helpers.xyzw_spn()
        grid = node_count_map(spn, SQ)
        assert grid.sum() == spn.scope_lengths.sum()
        assert (grid >= 1).all()
        np.testing.assert_array_equal(grid, 9)

    def test_patch_additive_on_factorized(self):
        probs = np.random.default_rng(0).uniform(0.1, 0.9, 12)
        spn = helpers.factorized_spn(probs)
        x = np.random.default_rng(1).integers(0, 2, 12)
        shape = ImageShape(3, 4)
        grid = patch_marginal_map(spn, x, shape, 2)
        tiles = [grid[r, c] for r in (0, 2) for c in (0, 2)]
        assert math.fsum(tiles) == pytest.approx(evaluate(spn, x), abs=1e-12)

    def test_patch_whole_image(self):
        spn = helpers.xyzw_spn()
        x = np.array([1, 0, 0, 1])
        np.testing.assert_allclose(patch_marginal_map(spn, x, SQ, 5), evaluate(spn, x), atol=1e-14)
        with pytest.raises(ValueError):
            patch_marginal_map(spn, x, SQ, 0)


class TestNearestNeighbours:
    def test_copy_of_training_row(self):
        train = np.random.default_rng(0).integers(0, 2, (30, 9))
        idx, dist = nearest_rows(train[[4, 17]], train)
        assert dist.tolist() == [0, 0]
        assert (train[idx] == train[[4, 17]]).all()

    @settings(max_examples=20, deadline=None)
    @given(st.integers(0, 2**31 - 1))
    def test_minimal(self, seed):
        rng = np.random.default_rng(seed)
        S = rng.integers(0, 2, (5, 7))
        T = rng.integers(0, 2, (12, 7))
        idx, dist = nearest_rows(S, T)
        ham = (S[:, None, :] != T[None, :, :]).sum(2)
        np.testing.assert_array_equal(dist, ham.min(1))
        np.testing.assert_array_equal(idx, ham.argmin(1))

    def test_deterministic(self):
        spn = helpers.xyzw_spn()
        train = helpers.all_instances(4)
        a = samples_with_nn(spn, train, 10, 3, SQ)
        b = samples_with_nn(spn, train, 10, 3, SQ)
        for u, v in zip(a, b):
            np.testing.assert_array_equal(u, v)
        assert (a[2] == 0).all()  # every state is in the training set


class TestImageFiles:
    def test_binary_pgm_single_pixel(self, tmp_path):
        path = tmp_path / "a.pgm"
        write_binary_pgm(path, [[0]])
        assert path.read_text() == "P2\n1 1\n255\n0\n"

    def test_constant_grid_mid_gray(self):
        np.testing.assert_array_equal(scale_to_gray(np.full((2, 3), -4.2)), 128)
        np.testing.assert_array_equal(scale_to_gray([[0.0]]), [[128]])

    def test_scaling(self):
        assert scale_to_gray([[-np.inf, 0.0, 1.0, 0.5]]).tolist() == [[0, 0, 255, 128]]

    def test_pgm_round_trip(self, tmp_path):
        grid = np.random.default_rng(0).normal(size=(4, 5))
        gray = write_pgm(tmp_path / "g.pgm", grid)
        np.testing.assert_array_equal(read_pgm(tmp_path / "g.pgm"), gray)
        with pytest.raises(ValueError):
            write_pgm(tmp_path / "bad.pgm", [[300]], scale=False)

    def test_ppm_round_trip(self, tmp_path):
        img = np.random.default_rng(1).integers(0, 256, (3, 2, 3)).astype(np.uint8)
        write_ppm(tmp_path / "c.ppm", img)
        np.testing.assert_array_equal(read_ppm(tmp_path / "c.ppm"), img)

    def test_csv(self):
        text = grid_csv(np.array([[0.1, 1.0], [2.0, -np.inf]]))
        assert text == "0.10000000000000001,1\n2,-inf\n"
        assert float(text.split(",")[0]) == 0.1
