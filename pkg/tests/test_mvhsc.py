import json

import numpy as np
import pytest

from rblo.bilevel import SolverConfig, solve, solve_multiview
from rblo.manifold import ManifoldPoint, Rng, TangentVector, project, qr_factor, random_point
from rblo.mvhsc import (
    HypergraphOperator,
    MvhscInstance,
    bilevel_problem,
    bilevel_problems,
    build_theta,
    hvp_xy_ll,
    hvp_xy_ul,
    hvp_yy_ll,
    hvp_yy_ul,
    ll_egrad_y,
    ll_grad_y,
    ll_value,
    load_instance,
    save_instance,
    spectral_init,
    ul_bound,
    ul_egrad_x,
    ul_egrad_y,
    ul_grad_x,
    ul_value,
)


# ------------------------------------------------------------------ helpers ---

def normalized_features(rng, n, d):
    f = rng.standard_normal((n, d))
    return f / np.linalg.norm(f, axis=1, keepdims=True)


def random_instance(seed, n=6, k=2, n_views=2, lam=1.0, knn=3, d=8):
    rng = Rng(seed)
    thetas = [build_theta(normalized_features(rng, n, d), knn=knn)
              for _ in range(n_views)]
    return MvhscInstance(thetas=thetas, k=k, lambda_coupling=lam)


def dense_trace(a, b):
    """tr(a @ b) by explicit loops, independent of np.trace/np.sum idioms."""
    total = 0.0
    for i in range(a.shape[0]):
        for j in range(a.shape[1]):
            total += a[i, j] * b[j, i]
    return total


def zero_theta_instance(n=5, k=2, lam=1.5):
    z = HypergraphOperator(np.zeros((n, n)))
    return MvhscInstance(thetas=[z, z], k=k, lambda_coupling=lam)


# -------------------------------------------------------------- build_theta ---

def test_build_theta_two_identical_documents():
    feats = np.array([[1.0, 0.0], [1.0, 0.0]])
    op = build_theta(feats, knn=1)
    expected = np.full((2, 2), 0.5)
    assert np.allclose(op.theta, expected, atol=1e-12)
    evals = np.sort(np.linalg.eigvalsh(op.theta))
    assert np.allclose(evals, [0.0, 1.0], atol=1e-12)


def test_build_theta_invariants_random():
    rng = Rng(0)
    for n, d, knn in ((6, 4, 2), (15, 7, 5), (30, 10, 10)):
        op = build_theta(normalized_features(rng, n, d), knn=knn)
        assert op.n == n
        assert np.linalg.norm(op.theta - op.theta.T) <= 1e-12
        evals = np.linalg.eigvalsh(op.theta)
        assert evals.min() >= -1e-10
        assert evals.max() <= 1.0 + 1e-10


def test_build_theta_complete_hypergraph_constant_eigenvector():
    rng = Rng(1)
    n = 8
    op = build_theta(normalized_features(rng, n, 5), knn=n - 1)
    evals, evecs = np.linalg.eigh(op.theta)
    top = evecs[:, -1]
    const = np.full(n, 1.0 / np.sqrt(n))
    assert min(np.linalg.norm(top - const), np.linalg.norm(top + const)) <= 1e-10
    assert evals[-1] == pytest.approx(1.0)


def test_build_theta_isolated_vertex_is_named():
    feats = np.array([[1.0, 0.0], [0.0, 0.0], [0.0, 1.0]])
    with pytest.raises(ValueError, match="vertex 1"):
        build_theta(feats, knn=1)


def test_build_theta_knn_bounds():
    feats = np.eye(3)
    with pytest.raises(ValueError):
        build_theta(feats, knn=0)
    with pytest.raises(ValueError):
        build_theta(feats, knn=3)  # needs knn <= n-1


def test_build_theta_deterministic():
    rng = Rng(2)
    feats = normalized_features(rng, 12, 6)
    a = build_theta(feats, knn=4)
    b = build_theta(feats, knn=4)
    assert np.array_equal(a.theta, b.theta)


def test_operator_rejects_asymmetric_and_indefinite():
    bad = np.array([[0.0, 1.0], [0.0, 0.0]])
    with pytest.raises(ValueError):
        HypergraphOperator(bad)
    indef = np.array([[0.0, 0.5], [0.5, 0.0]])  # eigenvalues +-0.5
    with pytest.raises(ValueError):
        HypergraphOperator(indef)
    with pytest.raises(ValueError):
        HypergraphOperator(np.eye(2) * 1.5)  # spectral norm > 1


def test_instance_validation():
    z5 = HypergraphOperator(np.zeros((5, 5)))
    z4 = HypergraphOperator(np.zeros((4, 4)))
    with pytest.raises(ValueError):
        MvhscInstance(thetas=[z5, z4], k=2, lambda_coupling=1.0)
    with pytest.raises(ValueError):
        MvhscInstance(thetas=[z5], k=6, lambda_coupling=1.0)
    with pytest.raises(ValueError):
        MvhscInstance(thetas=[z5, z5], k=2, lambda_coupling=0.0)
    with pytest.raises(ValueError):
        MvhscInstance(thetas=[z5, z5], k=2, lambda_coupling=1.0, consensus=2)


# ------------------------------------------------------------------- values ---

def test_ll_value_against_dense_oracle():
    inst = random_instance(3, n=6, k=2)
    rng = Rng(4)
    x = random_point(6, 2, rng)
    y = random_point(6, 2, rng)
    got = ll_value(inst, x, y)
    th = inst.thetas[1].theta  # first auxiliary view when consensus = 0
    expected = dense_trace(y.data.T @ th, y.data) + inst.lambda_coupling * dense_trace(
        y.data @ y.data.T, x.data @ x.data.T)
    assert got == pytest.approx(expected, rel=1e-12)


def test_ll_value_aligned_with_zero_theta():
    inst = zero_theta_instance(n=5, k=2, lam=1.5)
    rng = Rng(5)
    x = random_point(5, 2, rng)
    assert ll_value(inst, x, x) == pytest.approx(1.5 * 2)


def test_ul_value_extremes_and_range():
    inst = random_instance(6, n=6, k=2, lam=2.0)
    rng = Rng(7)
    x = random_point(6, 2, rng)
    assert ul_value(inst, x, x) == pytest.approx(2.0 * 2)
    # orthogonal complement columns: coupling vanishes
    full, _ = qr_factor(rng.standard_normal((6, 6)))
    xo = ManifoldPoint(full[:, :2])
    yo = ManifoldPoint(full[:, 2:4])
    assert ul_value(inst, xo, yo) == pytest.approx(0.0, abs=1e-12)
    for _ in range(20):
        x = random_point(6, 2, rng)
        y = random_point(6, 2, rng)
        v = ul_value(inst, x, y)
        assert -1e-12 <= v <= 2.0 * 2 + 1e-12


def test_ul_value_rotation_invariance():
    inst = random_instance(8, n=7, k=3)
    rng = Rng(9)
    x = random_point(7, 3, rng)
    y = random_point(7, 3, rng)
    base = ul_value(inst, x, y)
    for _ in range(5):
        o, _ = qr_factor(rng.standard_normal((3, 3)))
        q, _ = qr_factor(rng.standard_normal((3, 3)))
        rotated = ul_value(inst, ManifoldPoint(x.data @ o), ManifoldPoint(y.data @ q))
        assert rotated == pytest.approx(base, abs=1e-10)


def test_ul_bound_and_attainment():
    inst = random_instance(10, n=6, k=3, lam=0.7)
    assert ul_bound(inst) == pytest.approx(0.7 * 3)
    rng = Rng(11)
    x = random_point(6, 3, rng)
    assert ul_value(inst, x, x) == pytest.approx(ul_bound(inst))


# ---------------------------------------------------------------- gradients ---

def _fd_tangent(value_fn, point, xi, t=1e-5):
    """Central difference of value_fn along the retracted curve through point."""
    vals = []
    for s in (+t, -t):
        q, _ = qr_factor(point.data + s * xi)
        vals.append(value_fn(ManifoldPoint(q)))
    return (vals[0] - vals[1]) / (2.0 * t)


def test_ll_grad_y_matches_finite_differences():
    inst = random_instance(12, n=8, k=3)
    rng = Rng(13)
    x = random_point(8, 3, rng)
    y = random_point(8, 3, rng)
    g = ll_grad_y(inst, x, y)
    assert isinstance(g, TangentVector)
    for _ in range(5):
        xi = project(y.data, rng.standard_normal((8, 3)))
        xi /= np.linalg.norm(xi)
        fd = _fd_tangent(lambda p: ll_value(inst, x, p), y, xi)
        dd = float(np.sum(g.data * xi))
        assert abs(dd - fd) <= 1e-6 * max(1.0, abs(fd))


def test_ul_grad_x_matches_finite_differences():
    inst = random_instance(14, n=8, k=3, lam=1.3)
    rng = Rng(15)
    x = random_point(8, 3, rng)
    y = random_point(8, 3, rng)
    g = ul_grad_x(inst, x, y)
    for _ in range(5):
        xi = project(x.data, rng.standard_normal((8, 3)))
        xi /= np.linalg.norm(xi)
        fd = _fd_tangent(lambda p: ul_value(inst, p, y), x, xi)
        dd = float(np.sum(g.data * xi))
        assert abs(dd - fd) <= 1e-6 * max(1.0, abs(fd))


def test_ul_grad_x_vanishes_at_alignment():
    inst = random_instance(16, n=6, k=2)
    rng = Rng(17)
    x = random_point(6, 2, rng)
    g = ul_grad_x(inst, x, x)
    assert np.linalg.norm(g.data) <= 1e-12


def test_ll_grad_y_zero_on_invariant_subspace():
    # y spanning an eigenspace of (Theta + lam xx^T) is a critical point
    rng = Rng(18)
    x = random_point(6, 2, rng)
    g = rng.standard_normal((6, 6))
    base = g @ g.T
    base = base / (np.linalg.norm(base, 2) * 1.2)
    lam = 0.8
    m = base + lam * (x.data @ x.data.T)
    m = 0.5 * (m + m.T)
    _, vecs = np.linalg.eigh(m)
    y = ManifoldPoint(vecs[:, -2:])
    op = HypergraphOperator(base)
    inst = MvhscInstance(thetas=[op, op], k=2, lambda_coupling=lam)
    gv = ll_grad_y(inst, x, y)
    assert np.linalg.norm(gv.data) <= 1e-10


def test_gradients_zero_for_constant_objective():
    inst = zero_theta_instance(n=5, k=2, lam=1.0)
    # lam is fixed positive, so build a zero-coupling check via orthogonal x,y
    rng = Rng(19)
    full, _ = qr_factor(rng.standard_normal((5, 5)))
    x = ManifoldPoint(full[:, :2])
    y = ManifoldPoint(full[:, 2:4])
    g = ul_grad_x(inst, x, y)
    # yy^T x = 0 when spans are orthogonal
    assert np.linalg.norm(g.data) <= 1e-12


# --------------------------------------------------------------------- hvps ---

def _fd_gradient_map(grad_fn, base_arr, v, t=1e-6):
    """Central difference of an ambient gradient map along straight line."""
    return (grad_fn(base_arr + t * v) - grad_fn(base_arr - t * v)) / (2.0 * t)


def test_hvps_match_gradient_differences():
    inst = random_instance(20, n=7, k=2, lam=1.1)
    rng = Rng(21)
    x = random_point(7, 2, rng).data
    y = random_point(7, 2, rng).data
    for _ in range(3):
        v = rng.standard_normal((7, 2))
        got = hvp_yy_ll(inst, x, y, v)
        fd = _fd_gradient_map(lambda yy: ll_egrad_y(inst, x, yy), y, v)
        assert np.linalg.norm(got - fd) <= 1e-4 * max(1.0, np.linalg.norm(fd))

        got = hvp_yy_ul(inst, x, y, v)
        fd = _fd_gradient_map(lambda yy: ul_egrad_y(inst, x, yy), y, v)
        assert np.linalg.norm(got - fd) <= 1e-4 * max(1.0, np.linalg.norm(fd))

        got = hvp_xy_ul(inst, x, y, v)
        fd = _fd_gradient_map(lambda yy: ul_egrad_x(inst, x, yy), y, v)
        assert np.linalg.norm(got - fd) <= 1e-4 * max(1.0, np.linalg.norm(fd))

        got = hvp_xy_ll(inst, x, y, v)
        assert np.array_equal(got, hvp_xy_ul(inst, x, y, v))


def test_hvps_linear_in_direction():
    inst = random_instance(22, n=6, k=2)
    rng = Rng(23)
    x = random_point(6, 2, rng).data
    y = random_point(6, 2, rng).data
    v = rng.standard_normal((6, 2))
    w = rng.standard_normal((6, 2))
    for hvp in (hvp_yy_ll, hvp_yy_ul, hvp_xy_ll, hvp_xy_ul):
        left = hvp(inst, x, y, 2.0 * v - 0.5 * w)
        right = 2.0 * hvp(inst, x, y, v) - 0.5 * hvp(inst, x, y, w)
        assert np.allclose(left, right, atol=1e-12)
        assert np.allclose(hvp(inst, x, y, np.zeros_like(v)), 0.0, atol=1e-15)


def test_hvp_yy_ll_hand_case_zero_theta():
    inst = zero_theta_instance(n=4, k=2, lam=1.0)
    rng = Rng(24)
    x = random_point(4, 2, rng).data
    v = rng.standard_normal((4, 2))
    got = hvp_yy_ll(inst, x, np.zeros((4, 2)), v)
    assert np.allclose(got, 2.0 * (x @ (x.T @ v)), atol=1e-14)


# ----------------------------------------------------------- problem factory ---

def test_bilevel_problem_riemannian_runs_and_improves():
    inst = random_instance(25, n=10, k=2, lam=1.0, knn=3)
    problem = bilevel_problem(inst, view=1, manifold_mode="riemannian")
    assert problem.maximize and problem.ul_bound == pytest.approx(ul_bound(inst))
    rng = Rng(26)
    x0 = random_point(10, 2, rng)
    y0 = random_point(10, 2, rng)
    cfg = SolverConfig(variant="fbda", mu=0.5, k1=5, k2=5, s_u=0.3, s_l=0.3,
                       lambda_outer=0.2, outer_iters=15, seed=0)
    _, _, trace = solve(problem, cfg, x0, y0)
    dvals = [o["ul_dval"] for o in trace.outer]
    assert all(d >= -1e-12 for d in dvals)
    assert dvals[-1] < dvals[0]


def test_bilevel_problem_euclidean_trace_map_normalizes():
    inst = random_instance(27, n=8, k=2)
    problem = bilevel_problem(inst, view=1, manifold_mode="euclidean")
    rng = Rng(28)
    x = random_point(8, 2, rng)
    y = random_point(8, 2, rng)
    xs, ys = problem.trace_map(3.0 * x.data, -2.0 * y.data)
    assert np.linalg.norm(xs.T @ xs - np.eye(2)) <= 1e-12
    assert np.linalg.norm(ys.T @ ys - np.eye(2)) <= 1e-12
    # mapped values agree with the orthonormal originals up to column signs
    assert problem.ul_value(xs, ys) == pytest.approx(
        ul_value(inst, x, y), abs=1e-10)


def test_bilevel_problems_cover_auxiliary_views():
    inst = random_instance(29, n=6, k=2, n_views=3)
    probs = bilevel_problems(inst, manifold_mode="riemannian")
    assert len(probs) == 2  # views 1 and 2; consensus 0 excluded
    rng = Rng(30)
    x0 = random_point(6, 2, rng)
    y0s = [random_point(6, 2, rng) for _ in probs]
    cfg = SolverConfig(variant="fbda", mu=0.5, k1=3, k2=2, s_u=0.3, s_l=0.3,
                       lambda_outer=0.1, outer_iters=2, seed=0)
    _, ys, trace = solve_multiview(probs, cfg, x0, y0s)
    assert {r["view"] for r in trace.inner} == {0, 1}
    assert trace.ul_bound == pytest.approx(2 * ul_bound(inst))


def test_problem_callbacks_match_module_functions():
    inst = random_instance(31, n=6, k=2, lam=0.9)
    problem = bilevel_problem(inst, view=1, manifold_mode="riemannian")
    rng = Rng(32)
    x = random_point(6, 2, rng).data
    y = random_point(6, 2, rng).data
    v = rng.standard_normal((6, 2))
    assert problem.ll_value(x, y) == pytest.approx(ll_value(inst, x, y))
    assert problem.ul_value(x, y) == pytest.approx(ul_value(inst, x, y))
    assert np.allclose(problem.egrad_y_ll(x, y), ll_egrad_y(inst, x, y))
    assert np.allclose(problem.egrad_y_ul(x, y), ul_egrad_y(inst, x, y))
    assert np.allclose(problem.egrad_x_ul(x, y), ul_egrad_x(inst, x, y))
    assert np.allclose(problem.hvp_yy_ll(x, y, v), hvp_yy_ll(inst, x, y, v))
    assert np.allclose(problem.hvp_xy_ul(x, y, v), hvp_xy_ul(inst, x, y, v))


# ------------------------------------------------------------- spectral init ---

def test_spectral_init_orthonormal_and_invariant():
    inst = random_instance(33, n=12, k=3, knn=4)
    x = spectral_init(inst, view=0)
    assert isinstance(x, ManifoldPoint)
    th = inst.thetas[0].theta
    # spans an invariant subspace: Theta X = X (X^T Theta X)
    resid = th @ x.data - x.data @ (x.data.T @ th @ x.data)
    assert np.linalg.norm(resid) <= 1e-10


def test_spectral_init_deterministic():
    inst = random_instance(34, n=10, k=2)
    a = spectral_init(inst, view=1)
    b = spectral_init(inst, view=1)
    assert np.array_equal(a.data, b.data)


# ------------------------------------------------------------- serialization ---

def test_instance_round_trip(tmp_path):
    inst = random_instance(35, n=9, k=3, n_views=3, lam=0.6, knn=3)
    path = tmp_path / "instance.mvhsc"
    save_instance(inst, path)
    back = load_instance(path)
    assert back.n == inst.n and back.k == inst.k
    assert back.lambda_coupling == pytest.approx(inst.lambda_coupling)
    assert back.consensus == inst.consensus
    assert len(back.thetas) == len(inst.thetas)
    for a, b in zip(inst.thetas, back.thetas):
        assert np.array_equal(a.theta, b.theta)  # bit-exact round trip


def test_instance_header_is_json_line(tmp_path):
    inst = random_instance(36, n=5, k=2)
    path = tmp_path / "instance.mvhsc"
    save_instance(inst, path)
    with open(path, "rb") as fh:
        header = json.loads(fh.readline().decode("utf-8"))
    assert header["n"] == 5 and header["k"] == 2
    assert header["dtype"] == "<f8"
    assert len(header["views"]) == 2


def test_load_rejects_wrong_format(tmp_path):
    path = tmp_path / "bad.mvhsc"
    path.write_bytes(b'{"format": "something-else", "version": 1}\n')
    with pytest.raises(ValueError, match="format"):
        load_instance(path)


def test_load_rejects_truncated_payload(tmp_path):
    inst = random_instance(37, n=6, k=2)
    path = tmp_path / "instance.mvhsc"
    save_instance(inst, path)
    raw = path.read_bytes()
    path.write_bytes(raw[:-17])
    with pytest.raises(ValueError, match="truncated"):
        load_instance(path)
