"""Labelled synthetic binary image generators used by tests and the CLI."""

import numpy as np


def two_block_images(n, height=8, width=8, n_prototypes=4, noise=0.1, seed=0):
    """Images split into a left and a right block of pixels.

    For class 0 the left block copies one of ``n_prototypes`` random
    patterns (each flipped pixel-wise with probability ``noise``) and the
    right block is uniform noise; class 1 swaps the roles. Prototypes come
    in complementary pairs, so every pixel has marginal 0.5 in both classes
    and the label lives only in the correlation pattern.

    Returns
    -------
    X : ndarray of shape (n, height * width), int8
    y : ndarray of shape (n,), int64
    """
    if width < 2 or n_prototypes < 2 or n_prototypes % 2:
        raise ValueError("need width >= 2 and an even n_prototypes >= 2")
    rng = np.random.default_rng(seed)
    half = width // 2
    left = np.zeros((height, width), dtype=bool)
    left[:, :half] = True
    blocks = [np.flatnonzero(left.ravel()), np.flatnonzero(~left.ravel())]

    protos = []
    for idx in blocks:
        base = rng.integers(0, 2, size=(n_prototypes // 2, idx.size))
        protos.append(np.concatenate([base, 1 - base]))

    y = rng.integers(0, 2, size=n)
    X = rng.integers(0, 2, size=(n, height * width)).astype(np.int8)
    for cls in (0, 1):
        rows = np.flatnonzero(y == cls)
        idx = blocks[cls]
        pick = rng.integers(0, n_prototypes, size=rows.size)
        pattern = protos[cls][pick]
        flips = rng.random(pattern.shape) < noise
        X[np.ix_(rows, idx)] = np.where(flips, 1 - pattern, pattern)
    return X, y.astype(np.int64)


def rectangle_images(n, height=16, width=16, min_side=3, seed=0):
    """Rectangle outlines on a blank canvas; label 1 when taller than wide.

    Squares are never drawn, so both classes are well defined.
    """
    if min_side < 2 or min_side >= min(height, width):
        raise ValueError("min_side must be in [2, min(height, width))")
    rng = np.random.default_rng(seed)
    X = np.zeros((n, height, width), dtype=np.int8)
    y = np.zeros(n, dtype=np.int64)
    for i in range(n):
        while True:
            h = int(rng.integers(min_side, height + 1))
            w = int(rng.integers(min_side, width + 1))
            if h != w:
                break
        top = int(rng.integers(0, height - h + 1))
        lft = int(rng.integers(0, width - w + 1))
        X[i, top, lft:lft + w] = 1
        X[i, top + h - 1, lft:lft + w] = 1
        X[i, top:top + h, lft] = 1
        X[i, top:top + h, lft + w - 1] = 1
        y[i] = int(h > w)
    return X.reshape(n, -1), y
