"""Command line interface: ``spnrep <command> ...``.

Exit codes: 0 on success, 1 on domain errors (invalid models or data,
zero-probability evidence), 2 on usage or I/O errors.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from . import io as fio
from .classify import C_GRID, accuracy, grid_select
from .core import ScopeRanges, Spn, structural_stats
from .embeddings import generate_patch_queries, query_embeddings, spn_embedding
from .exceptions import SpnError
from .inference import build_mpn, evaluate_batch, mpe_assign, sample
from .learnspn import ALPHA_GRID, LearnParams, learn_structure_with_counts, select_alpha
from .mixtrees import learn_mixture
from .synthetic import rectangle_images, two_block_images
from .validation import MARG
from .viz import (
    ImageShape,
    activation_map,
    grid_csv,
    layer_scope_matrix,
    mpe_filter_images,
    node_count_map,
    patch_marginal_map,
    samples_with_nn,
    scope_length_histogram,
    write_binary_pgm,
    write_pgm,
    write_ppm,
)

log = logging.getLogger("spnrep")


class UsageError(Exception):
    pass


def _shape(text: str) -> ImageShape:
    try:
        h, w = (int(v) for v in text.lower().split("x"))
        return ImageShape(h, w)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected HxW, got {text!r}") from exc


def _floats(text: str):
    try:
        return [float(v) for v in text.split(",") if v]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from exc


def _require_file(path) -> Path:
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"no such file: {path}")
    return p


def _require_dir(path) -> Path:
    p = Path(path)
    p.mkdir(parents=True, exist_ok=True)
    return p


def _load_spn(path) -> Spn:
    return fio.load_spn(_require_file(path))


def _stats_row(spn: Spn, ranges: ScopeRanges, name: str) -> dict:
    row = {"model": name, "m": ""}
    row.update(structural_stats(spn, ranges).as_row())
    return row


def _write_rows(path, rows) -> None:
    import io as _io

    out = _io.StringIO()
    writer = csv.DictWriter(out, fieldnames=list(rows[0]), lineterminator="\n")
    writer.writeheader()
    writer.writerows(rows)
    fio.atomic_write_text(path, out.getvalue())


def cmd_learn(args) -> int:
    X, _ = fio.read_dataset(_require_file(args.train))
    params = LearnParams(
        rho=args.rho, m_min=args.m_min, alpha=args.alpha, em_restarts=args.em_restarts,
        em_iters=args.em_iters, em_tol=args.em_tol, seed=args.seed,
    )
    structure = learn_structure_with_counts(X, params)
    spn, alpha = structure.spn, args.alpha
    if args.valid:
        V, _ = fio.read_dataset(_require_file(args.valid))
        alpha = select_alpha(V, args.alpha_grid, structure.with_alpha)
        spn = structure.with_alpha(alpha)
    fio.save_spn(args.out, spn)
    row = _stats_row(spn, ScopeRanges(args.medium_max), Path(args.out).stem)
    row["m"] = args.m_min
    row["alpha"] = alpha
    if args.stats:
        _write_rows(args.stats, [row])
    print(f"learned {len(spn)} nodes, alpha={alpha}, train LL={np.mean(evaluate_batch(spn, X)):.6f}")
    return 0


def cmd_stats(args) -> int:
    spn = _load_spn(args.model)
    row = _stats_row(spn, ScopeRanges(args.medium_max), Path(args.model).stem)
    writer = csv.DictWriter(sys.stdout, fieldnames=list(row), lineterminator="\n")
    writer.writeheader()
    writer.writerow(row)
    return 0


def cmd_eval_ll(args) -> int:
    model = fio.load_model(_require_file(args.model))
    X, _ = fio.read_dataset(_require_file(args.data))
    ll = model.log_marginal(X)
    print(f"{float(np.mean(ll)):.6f}")
    return 0


def _parse_scheme(text: str):
    parts = text.split(",")
    name = parts[0]
    if name == "scope-aggr":
        if parts[1:] not in ([], ["leaves"]):
            raise UsageError(f"bad scheme {text!r}")
        return ("scope-aggr-leaves" if parts[1:] else "scope-aggr"), {}
    if name == "rand-query":
        keys = ("d", "min", "max", "seed")
        if len(parts) - 1 > len(keys):
            raise UsageError(f"bad scheme {text!r}")
        opts = {"d": 1000, "min": 2, "max": None, "seed": None}
        try:
            for k, v in zip(keys, parts[1:]):
                opts[k] = int(v)
        except ValueError as exc:
            raise UsageError(f"bad scheme {text!r}") from exc
        return name, opts
    if name in ("full", "sum", "prod", "S", "M", "L") and len(parts) == 1:
        return name, {}
    raise UsageError(f"unknown embedding scheme {text!r}")


def cmd_embed(args) -> int:
    scheme, opts = _parse_scheme(args.scheme)
    model = fio.load_model(_require_file(args.model))
    X, y = fio.read_dataset(_require_file(args.data))
    if scheme == "rand-query":
        seed = opts["seed"] if opts["seed"] is not None else args.seed
        if seed is None:
            raise UsageError("rand-query needs a seed (scheme field or --seed)")
        if args.shape is None:
            raise UsageError("rand-query needs --shape")
        args.shape.check(model.n_vars)
        h, w = args.shape.height, args.shape.width
        max_side = opts["max"] if opts["max"] is not None else min(10, h, w)
        templates = generate_patch_queries(seed, opts["d"], h, w, opts["min"], max_side)
        emb = query_embeddings(model, templates, X)
    else:
        if not isinstance(model, Spn):
            raise UsageError(f"scheme {scheme!r} needs an SPN model")
        emb = spn_embedding(model, X, scheme, ScopeRanges(args.medium_max))
    fio.write_embedding(args.out, emb.values, emb.feature_meta, y)
    print(f"wrote {emb.values.shape[0]} x {emb.n_features} embedding")
    return 0


def _read_split(path, raw: bool):
    if raw:
        X, y = fio.read_dataset(_require_file(path))
    else:
        X, y = fio.read_embedding(_require_file(path))
    if y is None:
        raise SpnError(f"{path}: a label column is required")
    return X, y


def cmd_classify(args) -> int:
    train = _read_split(args.train, args.raw)
    valid = _read_split(args.valid, args.raw)
    test = _read_split(args.test, args.raw)
    model, C = grid_select(train, valid, args.C_grid)
    row = {
        "scheme": args.scheme or ("raw" if args.raw else Path(args.train).stem),
        "embedding_size": train[0].shape[1],
        "C": C,
        "valid_acc": "%.6f" % accuracy(model, *valid),
        "test_acc": "%.6f" % accuracy(model, *test),
    }
    fio.write_report(args.out, [row])
    print(",".join(str(row[k]) for k in fio.REPORT_FIELDS))
    return 0


def cmd_sample(args) -> int:
    spn = _load_spn(args.model)
    fio.write_dataset(args.out, sample(spn, args.n, args.seed))
    return 0


def _read_evidence(path, n_vars):
    rows = []
    with open(_require_file(path), newline="", encoding="utf-8") as fh:
        for r in csv.reader(fh):
            if not r:
                continue
            if not all(t.strip() in ("", "0", "1", "-1", "?") for t in r):
                continue  # header
            rows.append([MARG if t.strip() in ("", "-1", "?") else int(t) for t in r])
    E = np.array(rows, dtype=np.int8)
    if E.ndim != 2 or E.shape[1] != n_vars:
        raise SpnError(f"{path}: evidence rows must have {n_vars} entries")
    return E


def cmd_mpe(args) -> int:
    spn = _load_spn(args.model)
    E = _read_evidence(args.evidence, spn.n_vars)
    mpn = build_mpn(spn)
    results = [mpe_assign(mpn, e) for e in E]
    fio.write_dataset(args.out, np.stack([r.assignment for r in results]))
    for r in results:
        print("%.17g" % r.log_value)
    return 0


def _viz_name(kind, model_path, ident, ext):
    return f"{kind}_{Path(model_path).stem}_{ident}.{ext}"


def cmd_viz_histogram(args) -> int:
    spn = _load_spn(args.model)
    rows = [{"scope_length": k, "count": v} for k, v in scope_length_histogram(spn)]
    _write_rows(args.out, rows)
    return 0


def cmd_viz_layers(args) -> int:
    spn = _load_spn(args.model)
    mat, cols = layer_scope_matrix(spn)
    rows = [{"depth": d, **{str(c): int(v) for c, v in zip(cols, row)}} for d, row in enumerate(mat)]
    _write_rows(args.out, rows)
    return 0


def cmd_viz_filters(args) -> int:
    spn = _load_spn(args.model)
    args.shape.check(spn.n_vars)
    out = _require_dir(args.out_dir)
    ids = args.nodes if args.nodes else list(range(len(spn)))
    for nid, img in zip(ids, mpe_filter_images(spn, ids, args.shape)):
        write_ppm(out / _viz_name("filter", args.model, nid, "ppm"), img)
    return 0


def _pick_evidence(args, n_vars):
    if args.data is None:
        return np.full(n_vars, MARG, dtype=np.int8), "Z"
    X, _ = fio.read_dataset(_require_file(args.data))
    if not 0 <= args.row < len(X):
        raise UsageError(f"row {args.row} out of range")
    e = X[args.row].astype(np.int8).copy()
    if args.marginalize:
        r, c, h, w = args.marginalize
        img = e.reshape(args.shape.height, args.shape.width)
        if args.keep_patch:
            keep = np.full_like(img, MARG)
            keep[r:r + h, c:c + w] = img[r:r + h, c:c + w]
            img = keep
        else:
            img[r:r + h, c:c + w] = MARG
        e = img.ravel()
    return e, f"row{args.row}"


def cmd_viz_activations(args) -> int:
    spn = _load_spn(args.model)
    args.shape.check(spn.n_vars)
    out = _require_dir(args.out_dir)
    e, tag = _pick_evidence(args, spn.n_vars)
    grid = activation_map(spn, e, args.shape, args.mode)
    ident = f"{tag}_{args.mode}"
    fio.atomic_write_text(out / _viz_name("activations", args.model, ident, "csv"), grid_csv(grid))
    write_pgm(out / _viz_name("activations", args.model, ident, "pgm"), grid)
    return 0


def cmd_viz_counts(args) -> int:
    spn = _load_spn(args.model)
    args.shape.check(spn.n_vars)
    out = _require_dir(args.out_dir)
    grid = node_count_map(spn, args.shape)
    fio.atomic_write_text(out / _viz_name("counts", args.model, "all", "csv"), grid_csv(grid))
    write_pgm(out / _viz_name("counts", args.model, "all", "pgm"), grid)
    return 0


def cmd_viz_patches(args) -> int:
    model = fio.load_model(_require_file(args.model))
    args.shape.check(model.n_vars)
    out = _require_dir(args.out_dir)
    X, _ = fio.read_dataset(_require_file(args.data))
    if not 0 <= args.row < len(X):
        raise UsageError(f"row {args.row} out of range")
    grid = patch_marginal_map(model, X[args.row], args.shape, args.patch)
    ident = f"row{args.row}_k{args.patch}"
    fio.atomic_write_text(out / _viz_name("patches", args.model, ident, "csv"), grid_csv(grid))
    write_pgm(out / _viz_name("patches", args.model, ident, "pgm"), grid)
    return 0


def cmd_viz_samples_nn(args) -> int:
    spn = _load_spn(args.model)
    args.shape.check(spn.n_vars)
    out = _require_dir(args.out_dir)
    train, _ = fio.read_dataset(_require_file(args.train))
    S, idx, dist = samples_with_nn(spn, train, args.n, args.seed, args.shape)
    rows = []
    for i, (s, j, d) in enumerate(zip(S, idx, dist)):
        write_binary_pgm(out / _viz_name("sample", args.model, i, "pgm"), s.reshape(args.shape.height, args.shape.width))
        write_binary_pgm(out / _viz_name("nn", args.model, i, "pgm"), train[j].reshape(args.shape.height, args.shape.width))
        rows.append({"sample": i, "nn_row": int(j), "distance": int(d)})
    if rows:
        _write_rows(out / _viz_name("samples-nn", args.model, "pairs", "csv"), rows)
    return 0


def cmd_learn_mt(args) -> int:
    X, _ = fio.read_dataset(_require_file(args.train))
    mix, history = learn_mixture(X, args.k, args.alpha, args.max_iter, args.tol, args.restarts, args.seed)
    fio.save_mixture(args.out, mix)
    print(f"learned {args.k}-tree mixture, train LL={history[-1] / len(X):.6f}")
    return 0


def cmd_gen_synthetic(args) -> int:
    sizes = args.sizes
    n = sum(sizes)
    if args.kind == "two-block":
        X, y = two_block_images(n, args.shape.height, args.shape.width, seed=args.seed)
    else:
        X, y = rectangle_images(n, args.shape.height, args.shape.width, seed=args.seed)
    start = 0
    for name, size in zip(("train", "valid", "test"), sizes):
        fio.write_dataset(f"{args.out_prefix}{name}.csv", X[start:start + size], y[start:start + size])
        start += size
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="spnrep", description="Sum-product networks: learning, inference, embeddings and visualization.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("learn", help="learn an SPN with LearnSPN-b")
    s.add_argument("train")
    s.add_argument("--valid", help="validation CSV; enables the alpha grid search")
    s.add_argument("--out", required=True)
    s.add_argument("--stats", help="write a structural statistics CSV row here")
    s.add_argument("--rho", type=float, default=20.0)
    s.add_argument("--m-min", type=int, default=500)
    s.add_argument("--alpha", type=float, default=0.1)
    s.add_argument("--alpha-grid", type=_floats, default=list(ALPHA_GRID))
    s.add_argument("--em-restarts", type=int, default=3)
    s.add_argument("--em-iters", type=int, default=100)
    s.add_argument("--em-tol", type=float, default=1e-4)
    s.add_argument("--medium-max", type=int, default=100)
    s.add_argument("--seed", type=int, required=True)
    s.set_defaults(func=cmd_learn)

    s = sub.add_parser("stats", help="print structural statistics of a model")
    s.add_argument("model")
    s.add_argument("--medium-max", type=int, default=100)
    s.set_defaults(func=cmd_stats)

    s = sub.add_parser("eval-ll", help="mean log-likelihood of a dataset")
    s.add_argument("model")
    s.add_argument("data")
    s.set_defaults(func=cmd_eval_ll)

    s = sub.add_parser("embed", help="extract embeddings")
    s.add_argument("model")
    s.add_argument("data")
    s.add_argument("--scheme", required=True,
                   help="full|sum|prod|S|M|L|scope-aggr[,leaves]|rand-query[,d,min,max,seed]")
    s.add_argument("--out", required=True)
    s.add_argument("--shape", type=_shape, help="image shape HxW (rand-query)")
    s.add_argument("--seed", type=int)
    s.add_argument("--medium-max", type=int, default=100)
    s.set_defaults(func=cmd_embed)

    s = sub.add_parser("classify", help="logistic regression probe with C grid search")
    s.add_argument("--train", required=True)
    s.add_argument("--valid", required=True)
    s.add_argument("--test", required=True)
    s.add_argument("--raw", action="store_true", help="inputs are binary dataset CSVs")
    s.add_argument("--scheme", help="scheme name for the report")
    s.add_argument("--C-grid", type=_floats, default=list(C_GRID))
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_classify)

    s = sub.add_parser("sample", help="draw samples from an SPN")
    s.add_argument("model")
    s.add_argument("-n", type=int, required=True)
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_sample)

    s = sub.add_parser("mpe", help="approximate MPE completion of evidence rows (-1 or ? = query)")
    s.add_argument("model")
    s.add_argument("evidence")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_mpe)

    s = sub.add_parser("viz-histogram", help="scope length histogram CSV")
    s.add_argument("model")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_viz_histogram)

    s = sub.add_parser("viz-layers", help="scope lengths present at each depth, CSV")
    s.add_argument("model")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_viz_layers)

    s = sub.add_parser("viz-filters", help="MPE filter images (PPM)")
    s.add_argument("model")
    s.add_argument("--shape", type=_shape, required=True)
    s.add_argument("--nodes", type=int, nargs="*")
    s.add_argument("--out-dir", required=True)
    s.set_defaults(func=cmd_viz_filters)

    s = sub.add_parser("viz-activations", help="activation maps (CSV + PGM)")
    s.add_argument("model")
    s.add_argument("data", nargs="?", help="dataset CSV; omit for the all-marginalized query")
    s.add_argument("--row", type=int, default=0)
    s.add_argument("--shape", type=_shape, required=True)
    s.add_argument("--mode", choices=("all", "normalized", "sum_only", "product_only"), default="all")
    s.add_argument("--marginalize", type=int, nargs=4, metavar=("ROW", "COL", "H", "W"),
                   help="marginalize this rectangle of the instance")
    s.add_argument("--keep-patch", action="store_true",
                   help="marginalize everything outside the rectangle instead")
    s.add_argument("--out-dir", required=True)
    s.set_defaults(func=cmd_viz_activations)

    s = sub.add_parser("viz-counts", help="per-pixel node count map")
    s.add_argument("model")
    s.add_argument("--shape", type=_shape, required=True)
    s.add_argument("--out-dir", required=True)
    s.set_defaults(func=cmd_viz_counts)

    s = sub.add_parser("viz-patches", help="patch marginal map of one instance")
    s.add_argument("model")
    s.add_argument("data")
    s.add_argument("--row", type=int, default=0)
    s.add_argument("--shape", type=_shape, required=True)
    s.add_argument("--patch", type=int, required=True)
    s.add_argument("--out-dir", required=True)
    s.set_defaults(func=cmd_viz_patches)

    s = sub.add_parser("viz-samples-nn", help="samples paired with nearest training images")
    s.add_argument("model")
    s.add_argument("train")
    s.add_argument("-n", type=int, required=True)
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--shape", type=_shape, required=True)
    s.add_argument("--out-dir", required=True)
    s.set_defaults(func=cmd_viz_samples_nn)

    s = sub.add_parser("learn-mt", help="learn a mixture of Chow-Liu trees")
    s.add_argument("train")
    s.add_argument("-k", type=int, default=3, help="number of trees (3, 15 or 30 are typical)")
    s.add_argument("--alpha", type=float, default=0.1)
    s.add_argument("--max-iter", type=int, default=100)
    s.add_argument("--tol", type=float, default=1e-4)
    s.add_argument("--restarts", type=int, default=3)
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_learn_mt)

    s = sub.add_parser("gen-synthetic", help="write labelled synthetic train/valid/test CSVs")
    s.add_argument("--kind", choices=("two-block", "rectangles"), default="two-block")
    s.add_argument("--shape", type=_shape, default=ImageShape(8, 8))
    s.add_argument("--sizes", type=int, nargs=3, default=[2000, 500, 5000], metavar=("TRAIN", "VALID", "TEST"))
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--out-prefix", required=True)
    s.set_defaults(func=cmd_gen_synthetic)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"spnrep: error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"spnrep: I/O error: {exc}", file=sys.stderr)
        return 2
    except (SpnError, ValueError) as exc:
        print(f"spnrep: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
