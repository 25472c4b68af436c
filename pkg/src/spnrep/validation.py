"""Input validation helpers shared by the estimators and inference routines."""

import numpy as np
from sklearn.utils.validation import check_array

MARG = -1
"""Evidence code for a marginalized (unobserved) variable."""


def check_binary_matrix(X, n_vars=None, name="X", allow_empty=False):
    """Return ``X`` as a 2-D int8 array of 0/1 values.

    Raises ValueError on non-binary entries or a column count different from
    ``n_vars``.
    """
    X = check_array(
        X,
        dtype=None,
        ensure_2d=True,
        ensure_min_samples=0 if allow_empty else 1,
        ensure_min_features=1,
    )
    if X.size and not np.isin(X, (0, 1)).all():
        raise ValueError(f"{name} must contain only 0/1 values")
    if n_vars is not None and X.shape[1] != n_vars:
        raise ValueError(f"{name} has {X.shape[1]} columns, expected {n_vars}")
    return X.astype(np.int8, copy=False)


def check_instance(x, n_vars):
    x = np.asarray(x)
    if x.ndim != 1 or x.shape[0] != n_vars:
        raise ValueError(f"instance must be a vector of length {n_vars}")
    if not np.isin(x, (0, 1)).all():
        raise ValueError("instance values must be 0 or 1")
    return x.astype(np.int8)


def check_evidence(E, n_vars):
    """Normalise evidence to a 2-D int8 array with ``MARG`` for unobserved.

    Accepts one vector or a matrix; NaN entries also mean marginalized.
    """
    E = np.asarray(E)
    if E.ndim == 1:
        E = E[None, :]
    if E.ndim != 2 or E.shape[1] != n_vars:
        raise ValueError(f"evidence must have {n_vars} columns, got shape {E.shape}")
    if E.dtype.kind == "f":
        nan = np.isnan(E)
        E = np.where(nan, MARG, E)
    if E.size and not np.isin(E, (0, 1, MARG)).all():
        raise ValueError("evidence values must be 0, 1 or marginalized (-1/NaN)")
    return E.astype(np.int8)


def clamp_log_features(X, floor=-700.0):
    """Replace -inf (and anything below ``floor``) by ``floor``."""
    X = np.asarray(X, dtype=float)
    X = np.where(X < floor, floor, X)
    if not np.isfinite(X).all():
        raise ValueError("features contain NaN or +inf after clamping")
    return X
