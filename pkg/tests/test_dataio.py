import json
import math
import os

import numpy as np
import pytest

from rblo.bilevel import SolverConfig, solve, solve_multiview
from rblo.clustering import LabelVector
from rblo.dataio import (
    MultiViewDataset,
    build_summary,
    fixture_dir,
    instance_from_dataset,
    load_3sources,
    read_summary,
    read_trace,
    synth_bilevel,
    write_summary,
    write_trace,
)
from rblo.manifold import Rng, random_point
from rblo.mvhsc import MvhscInstance

# Restricted count matrices (shared docs 1..12, ascending) frozen from the
# bundled miniature fixture. The consensus view (bbc) bleeds one doc per
# class toward the next class; the auxiliary views cycle the class-block
# vocabulary and each adds a private three-doc noise cluster in two extra
# term columns, so the auxiliaries agree on the classes but disagree in
# their leading eigenspaces.
BBC_COUNTS = np.array([
    [3, 2, 0, 0, 0, 0, 1, 1],
    [4, 2, 0, 0, 0, 0, 2, 1],
    [3, 2, 2, 1, 0, 0, 3, 1],
    [4, 2, 0, 0, 0, 0, 1, 1],
    [0, 0, 3, 2, 0, 0, 1, 1],
    [0, 0, 4, 2, 2, 1, 2, 1],
    [0, 0, 3, 2, 0, 0, 3, 1],
    [0, 0, 4, 2, 0, 0, 1, 1],
    [0, 0, 0, 0, 3, 2, 1, 1],
    [0, 0, 0, 0, 4, 2, 2, 1],
    [2, 1, 0, 0, 3, 2, 3, 1],
    [0, 0, 0, 0, 4, 2, 1, 1],
], dtype=float)
GUARDIAN_COUNTS = np.array([
    [0, 0, 3, 2, 0, 0, 1, 1, 0, 0],
    [0, 0, 4, 2, 0, 0, 2, 1, 4, 2],
    [0, 0, 3, 2, 0, 0, 3, 1, 0, 0],
    [0, 0, 4, 2, 0, 0, 1, 1, 0, 0],
    [0, 0, 0, 0, 3, 2, 1, 1, 0, 0],
    [0, 0, 0, 0, 4, 2, 2, 1, 0, 0],
    [0, 0, 0, 0, 3, 2, 3, 1, 4, 2],
    [0, 0, 0, 0, 4, 2, 1, 1, 0, 0],
    [3, 2, 0, 0, 0, 0, 1, 1, 0, 0],
    [4, 2, 0, 0, 0, 0, 2, 1, 0, 0],
    [3, 2, 0, 0, 0, 0, 3, 1, 0, 0],
    [4, 2, 0, 0, 0, 0, 1, 1, 4, 2],
], dtype=float)
REUTERS_COUNTS = np.array([
    [0, 0, 0, 0, 3, 2, 1, 1, 0, 0],
    [0, 0, 0, 0, 4, 2, 2, 1, 0, 0],
    [0, 0, 0, 0, 3, 2, 3, 1, 0, 0],
    [0, 0, 0, 0, 4, 2, 1, 1, 4, 2],
    [3, 2, 0, 0, 0, 0, 1, 1, 0, 0],
    [4, 2, 0, 0, 0, 0, 2, 1, 4, 2],
    [3, 2, 0, 0, 0, 0, 3, 1, 0, 0],
    [4, 2, 0, 0, 0, 0, 1, 1, 0, 0],
    [0, 0, 3, 2, 0, 0, 1, 1, 4, 2],
    [0, 0, 4, 2, 0, 0, 2, 1, 0, 0],
    [0, 0, 3, 2, 0, 0, 3, 1, 0, 0],
    [0, 0, 4, 2, 0, 0, 1, 1, 0, 0],
], dtype=float)
MINI_LABELS = np.array([0, 0, 0, 0, 1, 1, 1, 1, 2, 2, 2, 2])


# --------------------------------------------------------------- fixtures ---

def write_source(dirpath, name, docs, terms, counts, header=None, nnz_override=None):
    """Write one source in the 3sources layout; counts is docs x terms."""
    with open(os.path.join(dirpath, f"3sources_{name}.docs"), "w") as fh:
        fh.write("\n".join(str(d) for d in docs) + "\n")
    with open(os.path.join(dirpath, f"3sources_{name}.terms"), "w") as fh:
        fh.write("\n".join(terms) + "\n")
    entries = [(t + 1, d + 1, counts[d][t])
               for d in range(len(docs)) for t in range(len(terms))
               if counts[d][t]]
    with open(os.path.join(dirpath, f"3sources_{name}.mtx"), "w") as fh:
        fh.write((header or "%%MatrixMarket matrix coordinate real general") + "\n")
        fh.write(f"{len(terms)} {len(docs)} {nnz_override or len(entries)}\n")
        for t, d, v in entries:
            fh.write(f"{t} {d} {v}\n")


def write_clist(dirpath, assignments):
    with open(os.path.join(dirpath, "3sources.disjoint.clist"), "w") as fh:
        for label, ids in assignments:
            fh.write(f"{label}: {','.join(str(i) for i in ids)}\n")


def tiny_dataset(dirpath, **kw):
    docs = [1, 2]
    terms = ["alpha", "beta"]
    counts = [[2, 0], [0, 3]]
    for name in ("bbc", "guardian", "reuters"):
        write_source(dirpath, name, docs, terms, counts, **kw)
    write_clist(dirpath, [(1, [1]), (2, [2])])


# ------------------------------------------------------------ load_3sources ---

def test_fixture_loads_exact_counts():
    ds = load_3sources(fixture_dir(), raw_counts=True)
    assert isinstance(ds, MultiViewDataset)
    assert ds.n == 12 and ds.c == 3
    assert [name for name, _ in ds.views] == ["bbc", "guardian", "reuters"]
    assert ds.doc_ids == list(range(1, 13))
    by_name = dict(ds.views)
    assert np.array_equal(by_name["bbc"], BBC_COUNTS)
    assert np.array_equal(by_name["guardian"], GUARDIAN_COUNTS)
    assert np.array_equal(by_name["reuters"], REUTERS_COUNTS)
    assert np.array_equal(ds.labels.labels, MINI_LABELS)


def test_fixture_tfidf_rows_unit_norm():
    ds = load_3sources(fixture_dir())
    for _, mat in ds.views:
        norms = np.linalg.norm(mat, axis=1)
        assert np.allclose(norms, 1.0, atol=1e-12)


def test_fixture_tfidf_matches_hand_formula():
    ds = load_3sources(fixture_dir())
    bbc = dict(ds.views)["bbc"]
    counts = BBC_COUNTS
    n = 12
    df = (counts > 0).sum(axis=0)
    idf = np.log((1.0 + n) / (1.0 + df)) + 1.0
    expected = counts * idf
    expected /= np.linalg.norm(expected, axis=1, keepdims=True)
    assert np.allclose(bbc, expected, atol=1e-12)


def test_load_deterministic():
    a = load_3sources(fixture_dir())
    b = load_3sources(fixture_dir())
    for (n1, m1), (n2, m2) in zip(a.views, b.views):
        assert n1 == n2 and np.array_equal(m1, m2)
    assert np.array_equal(a.labels.labels, b.labels.labels)


def test_missing_file_is_named(tmp_path):
    tiny_dataset(tmp_path)
    os.remove(tmp_path / "3sources_guardian.mtx")
    with pytest.raises(IOError, match="guardian"):
        load_3sources(tmp_path)


def test_malformed_header_names_line(tmp_path):
    tiny_dataset(tmp_path, header="%%MatrixMarket matrix array real general")
    with pytest.raises(ValueError, match="line 1"):
        load_3sources(tmp_path)


def test_truncated_entries_detected(tmp_path):
    tiny_dataset(tmp_path, nnz_override=9)
    with pytest.raises(ValueError, match="entries"):
        load_3sources(tmp_path)


def test_out_of_range_entry_names_line(tmp_path):
    tiny_dataset(tmp_path)
    with open(tmp_path / "3sources_bbc.mtx", "a") as fh:
        fh.write("7 1 2\n")  # only 2 terms declared
    with open(tmp_path / "3sources_bbc.mtx") as fh:
        lines = fh.readlines()
    lines[1] = "2 2 3\n"
    with open(tmp_path / "3sources_bbc.mtx", "w") as fh:
        fh.writelines(lines)
    with pytest.raises(ValueError, match="line 5"):
        load_3sources(tmp_path)


def test_clist_unknown_doc_rejected(tmp_path):
    tiny_dataset(tmp_path)
    write_clist(tmp_path, [(1, [1]), (2, [2, 99])])
    with pytest.raises(ValueError, match="99"):
        load_3sources(tmp_path)


def test_unlabeled_shared_doc_rejected(tmp_path):
    tiny_dataset(tmp_path)
    write_clist(tmp_path, [(1, [1])])  # doc 2 has no label
    with pytest.raises(ValueError, match="2"):
        load_3sources(tmp_path)


def test_empty_intersection_rejected(tmp_path):
    docs_by_view = {"bbc": [1, 2], "guardian": [3, 4], "reuters": [5, 6]}
    terms = ["alpha", "beta"]
    counts = [[2, 0], [0, 3]]
    for name, docs in docs_by_view.items():
        write_source(tmp_path, name, docs, terms, counts)
    write_clist(tmp_path, [(1, [1, 3, 5]), (2, [2, 4, 6])])
    with pytest.raises(ValueError, match="intersection"):
        load_3sources(tmp_path)


def test_zero_row_flagged_in_report(tmp_path):
    docs = [1, 2, 3]
    terms = ["alpha", "beta"]
    full = [[2, 0], [0, 3], [1, 1]]
    hollow = [[2, 0], [0, 0], [1, 1]]  # doc 2 empty in guardian
    write_source(tmp_path, "bbc", docs, terms, full)
    write_source(tmp_path, "guardian", docs, terms, hollow)
    write_source(tmp_path, "reuters", docs, terms, full)
    write_clist(tmp_path, [(1, [1, 2]), (2, [3])])
    ds = load_3sources(tmp_path)
    assert ("guardian", 2) in ds.load_report["zero_rows"]
    gm = dict(ds.views)["guardian"]
    assert np.array_equal(gm[1], np.zeros(2))


def test_instance_from_dataset():
    ds = load_3sources(fixture_dir())
    inst = instance_from_dataset(ds, k=3, lambda_coupling=1.0, knn=4)
    assert isinstance(inst, MvhscInstance)
    assert inst.n == 12 and inst.n_views == 3 and inst.k == 3
    assert inst.consensus == 0
    assert inst.view_names == ["bbc", "guardian", "reuters"]
    assert inst.construction["knn"] == 4


# ------------------------------------------------------------ synth_bilevel ---

def test_synth_quadratic_conditioning_and_oracles():
    synth = synth_bilevel(mode="euclidean_quadratic", n_x=4, n_y=6,
                          conditioning=10.0, seed=0)
    q = synth.oracle["q"]
    evals = np.linalg.eigvalsh(q)
    assert evals.min() > 0
    cond = evals.max() / evals.min()
    assert abs(cond - 10.0) <= 0.1 * 10.0
    a, b = synth.oracle["a"], synth.oracle["b"]
    rng = Rng(1)
    for _ in range(5):
        x = rng.standard_normal((4, 1))
        y_star = synth.oracle["ll_solution"](x)
        assert np.allclose(y_star, a @ x, atol=1e-12)
        assert synth.oracle["phi"](x) == pytest.approx(
            synth.problem.ul_value(x, y_star), rel=1e-12)
        assert synth.problem.ll_value(x, y_star) == pytest.approx(0.0, abs=1e-12)
    x_star = synth.oracle["x_star"]
    assert np.allclose(a.T @ (a @ x_star - b), 0.0, atol=1e-10)


def test_synth_quadratic_degenerate_identity():
    synth = synth_bilevel(mode="euclidean_quadratic", n_x=3, n_y=3,
                          a_mode="identity", b_mode="zero", seed=2)
    assert np.allclose(synth.oracle["x_star"], 0.0, atol=1e-12)
    assert synth.oracle["phi"](np.zeros((3, 1))) == pytest.approx(0.0)
    assert np.allclose(synth.oracle["ll_solution"](np.ones((3, 1))), 1.0)


def test_synth_quadratic_solvable():
    synth = synth_bilevel(mode="euclidean_quadratic", n_x=3, n_y=3,
                          conditioning=2.0, seed=3)
    cfg = SolverConfig(variant="b3da", mu=0.5, k1=10, k2=10, s_u=1.0, s_l=1.0,
                       lambda_outer=0.4, outer_iters=150, seed=0)
    rng = Rng(4)
    x, y, trace = solve(synth.problem, cfg, rng.standard_normal((3, 1)),
                        rng.standard_normal((3, 1)))
    assert np.linalg.norm(x - synth.oracle["x_star"]) <= 1e-2


def test_synth_grassmann_trace():
    synth = synth_bilevel(mode="grassmann_trace", n=8, k=2, seed=5, lam=1.0)
    inst = synth.oracle["instance"]
    assert isinstance(inst, MvhscInstance)
    assert synth.problem.maximize and synth.problem.riemannian
    assert synth.oracle["ul_bound"] == pytest.approx(2.0)
    rng = Rng(6)
    cfg = SolverConfig(variant="fbda", mu=0.5, k1=3, k2=2, s_u=0.3, s_l=0.3,
                       lambda_outer=0.1, outer_iters=3, seed=0)
    x, y, trace = solve(synth.problem, cfg, random_point(8, 2, rng),
                        random_point(8, 2, rng))
    assert len(trace.outer) == 3


def test_synth_determinism_and_errors():
    s1 = synth_bilevel(mode="euclidean_quadratic", n_x=3, n_y=4, seed=7)
    s2 = synth_bilevel(mode="euclidean_quadratic", n_x=3, n_y=4, seed=7)
    assert np.array_equal(s1.oracle["a"], s2.oracle["a"])
    with pytest.raises(ValueError):
        synth_bilevel(mode="euclidean_quadratic", n_x=0, n_y=3, seed=0)
    with pytest.raises(ValueError):
        synth_bilevel(mode="nope", n_x=3, n_y=3, seed=0)
    with pytest.raises(ValueError):
        synth_bilevel(mode="euclidean_quadratic", n_x=3, n_y=4,
                      a_mode="identity", seed=0)
    with pytest.raises(ValueError):
        synth_bilevel(mode="grassmann_trace", n=4, k=5, seed=0)


# ------------------------------------------------------------ trace persist ---

def _small_riemannian_trace(outer_iters=3, n_views=1):
    synths = [synth_bilevel(mode="grassmann_trace", n=6, k=2, seed=10 + i)
              for i in range(max(n_views, 1))]
    cfg = SolverConfig(variant="fbda", mu=0.5, k1=2, k2=2, s_u=0.3, s_l=0.3,
                       lambda_outer=0.1, outer_iters=outer_iters, seed=0)
    rng = Rng(11)
    x0 = random_point(6, 2, rng)
    if n_views > 1:
        probs = [s.problem for s in synths]
        y0s = [random_point(6, 2, rng) for _ in probs]
        _, _, trace = solve_multiview(probs, cfg, x0, y0s)
    else:
        _, _, trace = solve(synths[0].problem, cfg, x0, random_point(6, 2, rng))
    return trace


def test_trace_round_trip(tmp_path):
    trace = _small_riemannian_trace()
    path = tmp_path / "trace.csv"
    write_trace(trace, path)
    rows = read_trace(path)
    assert rows == trace.inner  # exact float round trip via 17 digits


def test_trace_header_only_when_empty(tmp_path):
    synth = synth_bilevel(mode="grassmann_trace", n=6, k=2, seed=12)
    cfg = SolverConfig(variant="fbda", outer_iters=0, seed=0)
    rng = Rng(13)
    _, _, trace = solve(synth.problem, cfg, random_point(6, 2, rng),
                        random_point(6, 2, rng))
    path = tmp_path / "trace.csv"
    write_trace(trace, path)
    content = path.read_text()
    assert content == "outer_idx,inner_idx,phase,s_u_k,s_l_k,ll_value,ul_value\n"
    assert read_trace(path) == []


def test_trace_multiview_has_view_column(tmp_path):
    trace = _small_riemannian_trace(n_views=2)
    path = tmp_path / "trace.csv"
    write_trace(trace, path)
    header = path.read_text().splitlines()[0]
    assert header == "outer_idx,inner_idx,phase,s_u_k,s_l_k,ll_value,ul_value,view"
    rows = read_trace(path)
    assert rows == trace.inner
    assert {r["view"] for r in rows} == {0, 1}


def test_summary_round_trip(tmp_path):
    trace = _small_riemannian_trace()
    metrics = {"acc": 0.75, "nmi": 1 / 3}
    summary = build_summary(trace, metrics=metrics)
    assert summary["schema"] == "rblo-run-summary"
    assert summary["variant"] == "fbda"
    assert summary["seed"] == 0
    assert summary["config"]["k1"] == 2
    assert summary["metrics"]["nmi"] == pytest.approx(1 / 3)
    assert summary["final"]["ul_dval"] == trace.outer[-1]["ul_dval"]
    assert len(summary["outer"]) == len(trace.outer)
    path = tmp_path / "summary.json"
    write_summary(summary, path)
    back = read_summary(path)
    assert back == summary
    with open(path) as fh:
        assert json.load(fh)["schema"] == "rblo-run-summary"


def test_write_errors_on_bad_path(tmp_path):
    trace = _small_riemannian_trace()
    with pytest.raises(OSError):
        write_trace(trace, tmp_path / "no" / "such" / "dir" / "t.csv")
