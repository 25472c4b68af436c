"""Visual inspection of SPNs mapped back to the input (pixel) space.

Everything is returned as numeric grids or images; writers for CSV,
ASCII PGM (P2) and binary PPM (P6) live at the bottom of this module.
"""

from __future__ import annotations

import math
import os
from collections import Counter
from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np

from .core import Spn, node_depths
from .inference import mpe_filters_all_nodes, node_log_values, sample
from .validation import MARG, check_binary_matrix, check_evidence

RED = (255, 0, 0)


@dataclass(frozen=True)
class ImageShape:
    height: int
    width: int

    def __post_init__(self):
        if self.height < 1 or self.width < 1:
            raise ValueError("image dimensions must be positive")

    @property
    def size(self) -> int:
        return self.height * self.width

    def check(self, n_vars: int) -> None:
        if self.size != n_vars:
            raise ValueError(f"image shape {self.height}x{self.width} does not match {n_vars} variables")


def scope_length_histogram(spn: Spn) -> List[Tuple[int, int]]:
    """(scope length, node count) pairs over all nodes, by length."""
    counts = Counter(int(v) for v in spn.scope_lengths)
    return sorted(counts.items())


def layer_scope_matrix(spn: Spn) -> Tuple[np.ndarray, List[int]]:
    """Presence flags of scope lengths per depth level.

    Depth is the shortest root-to-node distance. Returns the
    (n_depths, n_lengths) 0/1 matrix and the scope lengths labelling its
    columns (those occurring in the network).
    """
    depths = node_depths(spn)
    lengths = spn.scope_lengths
    cols = sorted(set(int(v) for v in lengths))
    col_of = {v: j for j, v in enumerate(cols)}
    mat = np.zeros((int(depths.max()) + 1, len(cols)), dtype=np.int64)
    for d, length in zip(depths, lengths):
        mat[d, col_of[int(length)]] = 1
    return mat, cols


def mpe_filter_images(spn: Spn, node_ids: Sequence[int], shape: ImageShape) -> List[np.ndarray]:
    """RGB images of each node's MPE filter.

    Pixels outside the node scope are red; in-scope pixels are white when
    the MPE state is 1 and black when it is 0.
    """
    shape.check(spn.n_vars)
    filters = mpe_filters_all_nodes(spn)
    images = []
    for nid in node_ids:
        if not 0 <= nid < len(spn.nodes):
            raise ValueError(f"unknown node id {nid}")
        f = filters[nid].reshape(shape.height, shape.width)
        img = np.zeros((shape.height, shape.width, 3), dtype=np.uint8)
        img[f == MARG] = RED
        img[f == 1] = (255, 255, 255)
        images.append(img)
    return images


def _node_set(spn: Spn, mode: str) -> np.ndarray:
    kinds = {"all": None, "normalized": None, "sum_only": "sum", "product_only": "product"}
    if mode not in kinds:
        raise ValueError(f"unknown activation mode {mode!r}")
    kind = kinds[mode]
    return np.array([kind is None or n.kind == kind for n in spn.nodes])


def activation_map(spn: Spn, evidence, shape: ImageShape, mode: str = "all") -> np.ndarray:
    """Per-pixel sum of the linear outputs of nodes whose scope has that pixel.

    ``mode="normalized"`` divides each pixel by the number of such nodes;
    ``sum_only`` and ``product_only`` restrict the node set (leaves are
    part of the set for ``all`` and ``normalized``).
    """
    shape.check(spn.n_vars)
    E = check_evidence(evidence, spn.n_vars)
    if E.shape[0] != 1:
        raise ValueError("activation_map expects a single evidence vector")
    out = np.exp(node_log_values(spn, E)[:, 0])
    keep = _node_set(spn, mode)
    member = spn.scope_matrix[keep]
    vals = out[keep]
    grid = np.array([math.fsum(vals[member[:, i]]) for i in range(spn.n_vars)])
    if mode == "normalized":
        grid = grid / member.sum(axis=0)
    return grid.reshape(shape.height, shape.width)


def node_count_map(spn: Spn, shape: ImageShape) -> np.ndarray:
    """Number of nodes whose scope contains each pixel."""
    shape.check(spn.n_vars)
    return spn.scope_matrix.sum(axis=0).reshape(shape.height, shape.width)


def patch_marginal_map(model, instance, shape: ImageShape, patch: int) -> np.ndarray:
    """Log marginal of the instance restricted to each disjoint k x k tile.

    Tiles at the right and bottom edges may be smaller. ``model`` needs
    ``n_vars`` and ``log_marginal``.
    """
    if patch < 1:
        raise ValueError("patch size must be positive")
    shape.check(model.n_vars)
    x = check_binary_matrix(np.asarray(instance)[None, :], model.n_vars)[0].reshape(shape.height, shape.width)
    tiles = []
    for r in range(0, shape.height, patch):
        for c in range(0, shape.width, patch):
            e = np.full((shape.height, shape.width), MARG, dtype=np.int8)
            e[r:r + patch, c:c + patch] = x[r:r + patch, c:c + patch]
            tiles.append((r, c, e.ravel()))
    answers = model.log_marginal(np.stack([t[2] for t in tiles]))
    grid = np.empty((shape.height, shape.width))
    for (r, c, _), v in zip(tiles, answers):
        grid[r:r + patch, c:c + patch] = v
    return grid


def nearest_rows(samples: np.ndarray, train: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Index of and Hamming distance to the closest training row per sample.

    Ties go to the lowest row index.
    """
    S = samples.astype(np.int64)
    T = train.astype(np.int64)
    dist = S.sum(1)[:, None] + T.sum(1)[None, :] - 2 * S @ T.T
    idx = np.argmin(dist, axis=1)
    return idx, dist[np.arange(len(S)), idx]


def samples_with_nn(spn: Spn, train, n: int, seed, shape: ImageShape):
    """Draw samples and pair each with its nearest training instance.

    Returns (samples, nn_index, nn_distance); reshape rows with ``shape``
    to get images.
    """
    shape.check(spn.n_vars)
    train = check_binary_matrix(train, spn.n_vars, name="train")
    S = sample(spn, n, seed)
    idx, dist = nearest_rows(S, train)
    return S, idx, dist


def scale_to_gray(grid: np.ndarray) -> np.ndarray:
    """Min-max scale finite values to 0..255; -inf maps to 0, a constant
    grid to 128."""
    grid = np.asarray(grid, dtype=float)
    finite = np.isfinite(grid)
    out = np.zeros(grid.shape, dtype=np.int64)
    if not finite.any():
        return out
    lo, hi = grid[finite].min(), grid[finite].max()
    if hi == lo:
        out[finite] = 128
    else:
        out[finite] = np.rint((grid[finite] - lo) / (hi - lo) * 255).astype(np.int64)
    out[grid == np.inf] = 255
    return out


def _atomic_write(path, data: bytes) -> None:
    tmp = f"{path}.tmp{os.getpid()}"
    with open(tmp, "wb") as fh:
        fh.write(data)
    os.replace(tmp, path)


def pgm_bytes(gray: np.ndarray) -> bytes:
    gray = np.asarray(gray)
    if gray.ndim != 2 or gray.min(initial=0) < 0 or gray.max(initial=0) > 255:
        raise ValueError("PGM data must be a 2-D array of integers in 0..255")
    h, w = gray.shape
    rows = "\n".join(" ".join(str(int(v)) for v in row) for row in gray)
    return f"P2\n{w} {h}\n255\n{rows}\n".encode("ascii")


def write_pgm(path, grid, scale: bool = True) -> np.ndarray:
    """Write an ASCII PGM. Real grids are min-max scaled unless
    ``scale=False``, in which case values must already be 0..255.
    Returns the written integers."""
    gray = scale_to_gray(grid) if scale else np.asarray(grid, dtype=np.int64)
    _atomic_write(path, pgm_bytes(gray))
    return gray


def write_binary_pgm(path, image) -> np.ndarray:
    """Write a 0/1 image as black/white PGM."""
    return write_pgm(path, np.asarray(image, dtype=np.int64) * 255, scale=False)


def ppm_bytes(rgb: np.ndarray) -> bytes:
    rgb = np.asarray(rgb)
    if rgb.ndim != 3 or rgb.shape[2] != 3:
        raise ValueError("PPM data must have shape (height, width, 3)")
    h, w, _ = rgb.shape
    return f"P6\n{w} {h}\n255\n".encode("ascii") + rgb.astype(np.uint8).tobytes()


def write_ppm(path, rgb) -> None:
    _atomic_write(path, ppm_bytes(rgb))


def _header_tokens(data: bytes, count: int):
    tokens, pos = [], 0
    while len(tokens) < count:
        while data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            while data[pos:pos + 1] not in (b"\n", b""):
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        tokens.append(data[start:pos].decode("ascii"))
    return tokens, pos + 1


def read_pgm(path) -> np.ndarray:
    with open(path, "rb") as fh:
        data = fh.read()
    (magic, w, h, maxval), pos = _header_tokens(data, 4)
    if magic != "P2":
        raise ValueError("not an ASCII PGM file")
    vals = np.array(data[pos:].split(), dtype=np.int64)
    return vals.reshape(int(h), int(w))


def read_ppm(path) -> np.ndarray:
    with open(path, "rb") as fh:
        data = fh.read()
    (magic, w, h, maxval), pos = _header_tokens(data, 4)
    if magic != "P6":
        raise ValueError("not a binary PPM file")
    w, h = int(w), int(h)
    return np.frombuffer(data[pos:pos + w * h * 3], dtype=np.uint8).reshape(h, w, 3)


def grid_csv(grid: np.ndarray) -> str:
    """Row-major CSV of a grid with 17 significant digits."""
    grid = np.atleast_2d(grid)
    return "".join(",".join("%.17g" % v for v in row) + "\n" for row in grid)
