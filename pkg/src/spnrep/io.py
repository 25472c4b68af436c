"""File formats: binary dataset CSVs, embedding CSVs with a JSON sidecar,
accuracy reports and model files. All writes are atomic (temp + rename)."""

from __future__ import annotations

import csv
import io
import json
import os
from pathlib import Path
from typing import Optional, Tuple

import numpy as np

from .core import Spn, deserialize, serialize
from .exceptions import SpnFormatError
from .mixtrees import TreeMixture, deserialize_mixture, serialize_mixture

REPORT_FIELDS = ("scheme", "embedding_size", "C", "valid_acc", "test_acc")


def atomic_write_text(path, text: str) -> None:
    path = Path(path)
    tmp = path.with_name(f".{path.name}.tmp{os.getpid()}")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


def _is_number(token: str) -> bool:
    try:
        float(token)
    except ValueError:
        return False
    return True


def read_dataset(path) -> Tuple[np.ndarray, Optional[np.ndarray]]:
    """Read a 0/1 CSV. A header row is optional; a final column named
    ``label`` is returned separately."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = [r for r in csv.reader(fh) if r]
    if not rows:
        raise SpnFormatError(f"{path}: empty dataset")
    header = None
    if not all(_is_number(t) for t in rows[0]):
        header, rows = [t.strip() for t in rows[0]], rows[1:]
    if not rows:
        raise SpnFormatError(f"{path}: no data rows")
    try:
        data = np.array(rows, dtype=np.float64)
    except ValueError as exc:
        raise SpnFormatError(f"{path}: ragged or non-numeric rows") from exc
    labels = None
    if header is not None and header[-1] == "label":
        labels = data[:, -1].astype(np.int64)
        data = data[:, :-1]
    if not np.isin(data, (0, 1)).all():
        raise SpnFormatError(f"{path}: data values must be 0 or 1")
    return data.astype(np.int8), labels


def write_dataset(path, X, y=None) -> None:
    X = np.asarray(X)
    out = io.StringIO()
    header = [f"x{i}" for i in range(X.shape[1])] + (["label"] if y is not None else [])
    out.write(",".join(header) + "\n")
    for i, row in enumerate(X):
        vals = [str(int(v)) for v in row]
        if y is not None:
            vals.append(str(int(y[i])))
        out.write(",".join(vals) + "\n")
    atomic_write_text(path, out.getvalue())


def write_embedding(path, values, meta, y=None) -> None:
    """CSV with header feature_0..feature_{d-1}[,label] plus ``<path>.meta.json``."""
    values = np.asarray(values)
    out = io.StringIO()
    header = [f"feature_{j}" for j in range(values.shape[1])] + (["label"] if y is not None else [])
    out.write(",".join(header) + "\n")
    for i, row in enumerate(values):
        vals = ["%.17g" % v for v in row]
        if y is not None:
            vals.append(str(int(y[i])))
        out.write(",".join(vals) + "\n")
    atomic_write_text(path, out.getvalue())
    atomic_write_text(f"{path}.meta.json", json.dumps(meta, indent=1) + "\n")


def read_embedding(path) -> Tuple[np.ndarray, Optional[np.ndarray]]:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = [r for r in csv.reader(fh) if r]
    if not rows or not all(h.startswith("feature_") or h == "label" for h in rows[0]):
        raise SpnFormatError(f"{path}: missing embedding header")
    header, rows = rows[0], rows[1:]
    data = np.array(rows, dtype=np.float64) if rows else np.empty((0, len(header)))
    if header[-1] == "label":
        return data[:, :-1], data[:, -1].astype(np.int64)
    return data, None


def write_report(path, rows) -> None:
    out = io.StringIO()
    writer = csv.DictWriter(out, fieldnames=REPORT_FIELDS, lineterminator="\n")
    writer.writeheader()
    for r in rows:
        writer.writerow(r)
    atomic_write_text(path, out.getvalue())


def save_spn(path, spn: Spn) -> None:
    atomic_write_text(path, serialize(spn))


def load_spn(path) -> Spn:
    return deserialize(Path(path).read_text(encoding="utf-8"))


def save_mixture(path, mix: TreeMixture) -> None:
    atomic_write_text(path, serialize_mixture(mix))


def load_model(path):
    """Load an SPN or a tree mixture, dispatching on the header line."""
    text = Path(path).read_text(encoding="utf-8")
    first = text.lstrip().split(None, 1)[0] if text.strip() else ""
    if first == "mt-model":
        return deserialize_mixture(text)
    return deserialize(text)
