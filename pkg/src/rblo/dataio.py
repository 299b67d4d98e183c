"""Dataset loading, synthetic problem generators, and run artifacts.

The 3sources corpus ships as one MatrixMarket term-document matrix per news
source plus ``.docs``/``.terms`` id lists and a disjoint cluster list.  The
loader restricts every view to the documents present in all three sources so
the views describe a common set of vertices.  A 12-document miniature in the
same layout is bundled with the package for tests and offline runs.

Run artifacts are a CSV trace (one row per inner step) and a JSON summary;
floats in the CSV are written with 17 significant digits so a read-back is
bit-exact.
"""

import json
import math
import os
from dataclasses import dataclass, field

import numpy as np

from .bilevel import BilevelProblem, RunTrace
from .clustering import LabelVector
from .manifold import Rng
from .mvhsc import HypergraphOperator, MvhscInstance, bilevel_problem, build_theta

VIEW_NAMES = ("bbc", "guardian", "reuters")
MTX_HEADER = "%%MatrixMarket matrix coordinate real general"
TRACE_COLUMNS = ("outer_idx", "inner_idx", "phase", "s_u_k", "s_l_k",
                 "ll_value", "ul_value")
SUMMARY_SCHEMA = "rblo-run-summary"

_INT_COLUMNS = {"outer_idx", "inner_idx", "view"}
_STR_COLUMNS = {"phase"}


def fixture_dir():
    """Directory of the bundled 12-document miniature corpus."""
    return os.path.join(os.path.dirname(__file__), "data", "3sources_mini")


# ---------------------------------------------------------------------------
# 3sources corpus
# ---------------------------------------------------------------------------

@dataclass
class MultiViewDataset:
    views: list          # [(name, docs x terms ndarray)] in VIEW_NAMES order
    labels: LabelVector  # class per shared document
    doc_ids: list        # shared document ids, ascending
    load_report: dict = field(default_factory=dict)

    @property
    def n(self):
        return len(self.doc_ids)

    @property
    def c(self):
        return self.labels.c


def _read_id_list(path, cast):
    try:
        with open(path) as fh:
            return [cast(line.strip()) for line in fh if line.strip()]
    except FileNotFoundError:
        raise IOError(f"missing dataset file: {path}")


def _read_mtx(path):
    """Parse a coordinate MatrixMarket file, returning a dense array."""
    try:
        fh = open(path)
    except FileNotFoundError:
        raise IOError(f"missing dataset file: {path}")
    with fh:
        lines = fh.read().splitlines()
    if not lines or lines[0].strip() != MTX_HEADER:
        raise ValueError(f"{path}: line 1: expected header '{MTX_HEADER}'")
    idx = 1
    while idx < len(lines) and lines[idx].lstrip().startswith("%"):
        idx += 1
    if idx >= len(lines):
        raise ValueError(f"{path}: line {idx + 1}: missing size line")
    parts = lines[idx].split()
    if len(parts) != 3:
        raise ValueError(f"{path}: line {idx + 1}: size line needs "
                         f"'rows cols entries', got {lines[idx]!r}")
    try:
        n_rows, n_cols, nnz = (int(p) for p in parts)
    except ValueError:
        raise ValueError(f"{path}: line {idx + 1}: size line needs three "
                         f"integers, got {lines[idx]!r}")
    mat = np.zeros((n_rows, n_cols))
    count = 0
    for off, line in enumerate(lines[idx + 1:], start=idx + 2):
        if not line.strip():
            continue
        fields = line.split()
        if len(fields) != 3:
            raise ValueError(f"{path}: line {off}: expected 'row col value', "
                             f"got {line!r}")
        try:
            r, c, v = int(fields[0]), int(fields[1]), float(fields[2])
        except ValueError:
            raise ValueError(f"{path}: line {off}: malformed entry {line!r}")
        if not (1 <= r <= n_rows and 1 <= c <= n_cols):
            raise ValueError(f"{path}: line {off}: index ({r}, {c}) outside "
                             f"declared {n_rows} x {n_cols} shape")
        mat[r - 1, c - 1] = v
        count += 1
    if count != nnz:
        raise ValueError(f"{path}: declared {nnz} entries, found {count}")
    return mat


def _read_clist(path):
    """Parse 'label_idx: id,id,...' lines into {doc_id: label_idx}."""
    try:
        fh = open(path)
    except FileNotFoundError:
        raise IOError(f"missing dataset file: {path}")
    with fh:
        lines = fh.read().splitlines()
    assignment = {}
    label_indices = []
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        if ":" not in line:
            raise ValueError(f"{path}: line {lineno}: expected "
                             f"'label: id,id,...', got {line!r}")
        head, _, tail = line.partition(":")
        try:
            label = int(head.strip())
            ids = [int(tok) for tok in tail.split(",") if tok.strip()]
        except ValueError:
            raise ValueError(f"{path}: line {lineno}: malformed entry {line!r}")
        label_indices.append(label)
        for doc in ids:
            if doc in assignment:
                raise ValueError(f"{path}: document {doc} assigned twice")
            assignment[doc] = label
    order = {lab: rank for rank, lab in enumerate(sorted(set(label_indices)))}
    return {doc: order[lab] for doc, lab in assignment.items()}, len(order)


def tfidf(counts):
    """Smoothed log idf weighting followed by L2 row normalization.

    Rows with no terms at all are left as zero vectors; callers decide
    whether that is an error.
    """
    counts = np.asarray(counts, dtype=float)
    n = counts.shape[0]
    df = (counts > 0).sum(axis=0)
    idf = np.log((1.0 + n) / (1.0 + df)) + 1.0
    weighted = counts * idf
    norms = np.linalg.norm(weighted, axis=1, keepdims=True)
    safe = np.where(norms > 0, norms, 1.0)
    return weighted / safe


def load_3sources(directory, raw_counts=False):
    """Load a 3sources-layout corpus restricted to documents in all views."""
    per_view = {}
    for name in VIEW_NAMES:
        base = os.path.join(str(directory), f"3sources_{name}")
        docs = _read_id_list(base + ".docs", int)
        terms = _read_id_list(base + ".terms", str)
        mat = _read_mtx(base + ".mtx")
        if mat.shape != (len(terms), len(docs)):
            raise ValueError(
                f"{base}.mtx: matrix is {mat.shape[0]} x {mat.shape[1]} but "
                f"{len(terms)} terms and {len(docs)} docs are listed")
        per_view[name] = (docs, mat.T)  # docs x terms

    shared = set(per_view[VIEW_NAMES[0]][0])
    union = set()
    for docs, _ in per_view.values():
        shared &= set(docs)
        union |= set(docs)
    if not shared:
        raise ValueError("document intersection across views is empty")
    doc_ids = sorted(shared)

    label_of, n_classes = _read_clist(
        os.path.join(str(directory), "3sources.disjoint.clist"))
    unknown = sorted(set(label_of) - union)
    if unknown:
        raise ValueError(f"cluster list names unknown document {unknown[0]}")
    missing = [d for d in doc_ids if d not in label_of]
    if missing:
        raise ValueError(f"shared document {missing[0]} has no cluster label")
    labels = LabelVector(np.array([label_of[d] for d in doc_ids]), n_classes)

    views = []
    zero_rows = []
    for name in VIEW_NAMES:
        docs, mat = per_view[name]
        pos = {d: i for i, d in enumerate(docs)}
        counts = mat[[pos[d] for d in doc_ids]]
        if raw_counts:
            views.append((name, counts))
            continue
        weighted = tfidf(counts)
        for i in np.flatnonzero(np.linalg.norm(weighted, axis=1) == 0):
            zero_rows.append((name, doc_ids[i]))
        views.append((name, weighted))

    report = {
        "zero_rows": zero_rows,
        "n_shared": len(doc_ids),
        "n_docs_per_view": {name: len(per_view[name][0]) for name in VIEW_NAMES},
        "raw_counts": bool(raw_counts),
    }
    return MultiViewDataset(views, labels, doc_ids, report)


def instance_from_dataset(dataset, k, lambda_coupling, knn, consensus=0):
    """Build the coupled clustering instance from a loaded corpus."""
    thetas = [build_theta(mat, knn) for _, mat in dataset.views]
    construction = {
        "knn": knn,
        "n": dataset.n,
        "views": [name for name, _ in dataset.views],
        "raw_counts": dataset.load_report.get("raw_counts", False),
    }
    return MvhscInstance(thetas, k, lambda_coupling, consensus=consensus,
                         view_names=[name for name, _ in dataset.views],
                         construction=construction)


# ---------------------------------------------------------------------------
# synthetic problems
# ---------------------------------------------------------------------------

@dataclass
class SynthInstance:
    mode: str
    problem: BilevelProblem
    oracle: dict


def _orthonormal(rng, n, m):
    q, _ = np.linalg.qr(rng.standard_normal((n, m)))
    return q


def _euclidean_quadratic(n_x, n_y, seed, conditioning=2.25, scale=0.9,
                         a_mode="random", b_mode="random"):
    if n_x < 1 or n_y < 1:
        raise ValueError("n_x and n_y must be positive")
    if conditioning < 1.0 or scale <= 0.0:
        raise ValueError("need conditioning >= 1 and scale > 0")
    if a_mode not in ("random", "identity") or b_mode not in ("random", "zero"):
        raise ValueError(f"unknown a_mode/b_mode: {a_mode!r}/{b_mode!r}")
    if a_mode == "identity" and n_x != n_y:
        raise ValueError("identity coupling needs n_x == n_y")
    rng = Rng(seed)

    u = _orthonormal(rng, n_y, n_y)
    evals = np.linspace(scale / conditioning, scale, n_y)
    q = u @ np.diag(evals) @ u.T
    q = 0.5 * (q + q.T)

    if a_mode == "identity":
        a = np.eye(n_y)
    else:
        m = min(n_x, n_y)
        ua = _orthonormal(rng, n_y, m)
        va = _orthonormal(rng, n_x, m)
        a = ua @ np.diag(np.linspace(0.8, 1.2, m)) @ va.T
    b = (np.zeros((n_y, 1)) if b_mode == "zero"
         else rng.standard_normal((n_y, 1)))

    def resid(x, y):
        return y - a @ x

    problem = BilevelProblem(
        ul_value=lambda x, y: 0.5 * float(np.sum((y - b) ** 2)),
        ll_value=lambda x, y: 0.5 * float(np.sum(resid(x, y) * (q @ resid(x, y)))),
        egrad_y_ul=lambda x, y: y - b,
        egrad_y_ll=lambda x, y: q @ resid(x, y),
        egrad_x_ul=lambda x, y: np.zeros_like(x),
        hvp_yy_ul=lambda x, y, v: v,
        hvp_yy_ll=lambda x, y, v: q @ v,
        hvp_xy_ul=lambda x, y, v: np.zeros((x.shape[0], 1)),
        hvp_xy_ll=lambda x, y, v: -a.T @ (q @ v),
        manifold_mode="euclidean",
        name="euclidean_quadratic",
    )

    x_star, *_ = np.linalg.lstsq(a, b, rcond=None)
    oracle = {
        "a": a,
        "q": q,
        "b": b,
        "ll_solution": lambda x: a @ x,
        "phi": lambda x: 0.5 * float(np.sum((a @ x - b) ** 2)),
        "x_star": x_star,
        "phi_min": 0.5 * float(np.sum((a @ x_star - b) ** 2)),
    }
    return SynthInstance("euclidean_quadratic", problem, oracle)


def _grassmann_trace(n, k, seed, lam=1.0, n_views=2, consensus=0):
    if n_views < 2:
        raise ValueError("need at least two views (consensus plus auxiliary)")
    rng = Rng(seed)
    thetas = []
    for _ in range(n_views):
        u = _orthonormal(rng, n, n)
        evals = np.sort(rng.random(n))[::-1]
        theta = u @ np.diag(evals) @ u.T
        thetas.append(HypergraphOperator(0.5 * (theta + theta.T)))
    instance = MvhscInstance(thetas, k, lam, consensus=consensus,
                             construction={"kind": "synthetic-spectrum",
                                           "seed": seed})
    problem = bilevel_problem(instance)
    oracle = {
        "instance": instance,
        "ul_bound": lam * k,
        "thetas": thetas,
    }
    return SynthInstance("grassmann_trace", problem, oracle)


def synth_bilevel(mode, seed, **kwargs):
    """Construct a seeded synthetic bilevel problem with exact oracles."""
    if mode == "euclidean_quadratic":
        return _euclidean_quadratic(seed=seed, **kwargs)
    if mode == "grassmann_trace":
        return _grassmann_trace(seed=seed, **kwargs)
    raise ValueError(f"unknown synthetic mode: {mode!r}")


# ---------------------------------------------------------------------------
# run artifacts
# ---------------------------------------------------------------------------

def _format_cell(key, value):
    if key in _STR_COLUMNS:
        return str(value)
    if key in _INT_COLUMNS:
        return str(int(value))
    return format(float(value), ".17g")


def write_trace(trace: RunTrace, path):
    """Write the inner-step trace as CSV, one row per inner step."""
    columns = TRACE_COLUMNS + (("view",) if trace.n_views > 1 else ())
    with open(path, "w") as fh:
        fh.write(",".join(columns) + "\n")
        for row in trace.inner:
            fh.write(",".join(_format_cell(c, row[c]) for c in columns) + "\n")


def read_trace(path):
    """Read a trace CSV back into the list-of-dicts form produced by solve."""
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise ValueError(f"{path}: empty trace file")
    columns = lines[0].split(",")
    base = list(TRACE_COLUMNS)
    if columns != base and columns != base + ["view"]:
        raise ValueError(f"{path}: unexpected trace columns {columns!r}; "
                         f"expected {base} with optional trailing 'view'")
    rows = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line:
            continue
        cells = line.split(",")
        if len(cells) != len(columns):
            raise ValueError(f"{path}: line {lineno}: expected "
                             f"{len(columns)} cells, got {len(cells)}")
        row = {}
        for key, cell in zip(columns, cells):
            if key in _STR_COLUMNS:
                row[key] = cell
            elif key in _INT_COLUMNS:
                row[key] = int(cell)
            else:
                row[key] = float(cell)
        rows.append(row)
    return rows


def build_summary(trace: RunTrace, metrics=None):
    """Condense a run into the JSON-ready summary mapping."""
    return {
        "schema": SUMMARY_SCHEMA,
        "version": 1,
        "variant": trace.variant,
        "seed": trace.seed,
        "n_views": trace.n_views,
        "ul_bound": trace.ul_bound,
        "wall_time_s": trace.wall_time_s,
        "config": dict(trace.config),
        "final": dict(trace.outer[-1]) if trace.outer else None,
        "metrics": dict(metrics) if metrics else {},
        "outer": [dict(row) for row in trace.outer],
    }


def write_summary(summary, path):
    if summary.get("schema") != SUMMARY_SCHEMA:
        raise ValueError(f"summary schema must be {SUMMARY_SCHEMA!r}")
    with open(path, "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_summary(path):
    with open(path) as fh:
        summary = json.load(fh)
    if summary.get("schema") != SUMMARY_SCHEMA:
        raise ValueError(f"{path}: not a {SUMMARY_SCHEMA} file")
    return summary
