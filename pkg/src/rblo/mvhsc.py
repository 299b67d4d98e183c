"""Multi-view hypergraph spectral clustering as a bilevel problem on Gr(k, n).

One consensus view holds the upper-level frame x; every other (auxiliary)
view carries a lower-level frame y_v. The lower level maximizes
tr(y'(Theta_v)y) + lam * tr(y y' x x') over the auxiliary view's operator,
and the upper level maximizes the coupling term alone, so the consensus
frame is pulled toward the auxiliary embeddings.

The hypergraph operator Theta is the normalized incidence product
D_v^{-1/2} H W D_e^{-1} H' D_v^{-1/2} built from one kNN hyperedge per
vertex; it is symmetric, positive semidefinite, with spectral norm <= 1.
"""

from __future__ import annotations

import json

import numpy as np

from .bilevel import BilevelProblem
from .manifold import ManifoldPoint, TangentVector, project, qr_factor

SYMMETRY_TOL = 1e-12
PSD_TOL = 1e-10

_FORMAT = "rblo-mvhsc"


class HypergraphOperator:
    """Validated normalized hypergraph operator (symmetric, PSD, norm <= 1)."""

    def __init__(self, theta):
        theta = np.array(theta, dtype=float)
        if theta.ndim != 2 or theta.shape[0] != theta.shape[1]:
            raise ValueError(f"operator must be square, got shape {theta.shape}")
        if np.linalg.norm(theta - theta.T) > SYMMETRY_TOL:
            raise ValueError("operator is not symmetric")
        evals = np.linalg.eigvalsh(theta)
        if evals.min() < -PSD_TOL:
            raise ValueError(f"operator is not positive semidefinite "
                             f"(smallest eigenvalue {evals.min():.3e})")
        if evals.max() > 1.0 + PSD_TOL:
            raise ValueError(f"operator spectral norm {evals.max():.6f} exceeds 1")
        theta.setflags(write=False)
        self.theta = theta
        self.n = theta.shape[0]

    def __repr__(self):
        return f"HypergraphOperator(n={self.n})"


def build_theta(features, knn: int) -> HypergraphOperator:
    """Normalized hypergraph operator from one kNN hyperedge per vertex.

    Each vertex spawns a hyperedge containing itself and its knn nearest
    neighbors by cosine similarity (unit edge weights). Ties break by the
    lower vertex index, so construction is deterministic.
    """
    feats = np.asarray(features, dtype=float)
    if feats.ndim != 2:
        raise ValueError(f"features must be 2-d, got shape {feats.shape}")
    n = feats.shape[0]
    if not 1 <= knn <= n - 1:
        raise ValueError(f"knn must lie in [1, n-1] = [1, {n - 1}], got {knn}")
    norms = np.linalg.norm(feats, axis=1)
    for i, nrm in enumerate(norms):
        if nrm == 0.0:
            raise ValueError(f"vertex {i} is isolated: zero feature vector "
                             "has no cosine neighbors")
    unit = feats / norms[:, None]
    sim = unit @ unit.T
    np.fill_diagonal(sim, -np.inf)
    order = np.argsort(-sim, axis=1, kind="stable")
    neighbors = order[:, :knn]

    incidence = np.zeros((n, n))
    for j in range(n):
        incidence[j, j] = 1.0
        incidence[neighbors[j], j] = 1.0
    d_e = incidence.sum(axis=0)
    d_v = incidence.sum(axis=1)
    if np.any(d_v == 0.0):
        i = int(np.argmin(d_v))
        raise ValueError(f"vertex {i} is isolated: belongs to no hyperedge")
    half = incidence / np.sqrt(d_v)[:, None]  # D_v^{-1/2} H
    theta = (half / d_e[None, :]) @ half.T    # ... W D_e^{-1} H' D_v^{-1/2}
    theta = 0.5 * (theta + theta.T)
    return HypergraphOperator(theta)


class MvhscInstance:
    """Per-view operators plus the coupling weight and subspace dimension."""

    def __init__(self, thetas, k: int, lambda_coupling: float, consensus: int = 0,
                 view_names=None, construction=None):
        thetas = tuple(thetas)
        if not thetas:
            raise ValueError("need at least one view")
        for op in thetas:
            if not isinstance(op, HypergraphOperator):
                raise TypeError("thetas must be HypergraphOperator values")
        n = thetas[0].n
        if any(op.n != n for op in thetas):
            raise ValueError("all views must share the document count")
        if not 1 <= k <= n:
            raise ValueError(f"need 1 <= k <= n = {n}, got k = {k}")
        if not lambda_coupling > 0:
            raise ValueError(f"lambda_coupling must be positive, got {lambda_coupling}")
        if not 0 <= consensus < len(thetas):
            raise ValueError(f"consensus view {consensus} out of range "
                             f"for {len(thetas)} views")
        if view_names is None:
            view_names = [f"view{i}" for i in range(len(thetas))]
        view_names = [str(v) for v in view_names]
        if len(view_names) != len(thetas):
            raise ValueError("need one name per view")
        self.thetas = thetas
        self.k = int(k)
        self.lambda_coupling = float(lambda_coupling)
        self.consensus = int(consensus)
        self.view_names = view_names
        self.construction = dict(construction) if construction else None

    @property
    def n(self):
        return self.thetas[0].n

    @property
    def n_views(self):
        return len(self.thetas)

    @property
    def aux_views(self):
        return [i for i in range(self.n_views) if i != self.consensus]

    def theta(self, view: int):
        return self.thetas[view].theta

    def __repr__(self):
        return (f"MvhscInstance(n={self.n}, k={self.k}, views={self.n_views}, "
                f"lambda={self.lambda_coupling})")


# ------------------------------------------------------------------ values ---

def _arr(p) -> np.ndarray:
    return np.asarray(getattr(p, "data", p), dtype=float)


def _resolve_view(instance: MvhscInstance, view):
    if view is None:
        aux = instance.aux_views
        if not aux:
            raise ValueError("instance has no auxiliary view")
        return aux[0]
    if not 0 <= view < instance.n_views:
        raise ValueError(f"view {view} out of range for {instance.n_views} views")
    return view


def ul_value(instance, x, y) -> float:
    """Coupling objective lam * tr(y y' x x') = lam * ||x'y||_F^2, in [0, lam*k]."""
    x, y = _arr(x), _arr(y)
    return instance.lambda_coupling * float(np.sum((x.T @ y) ** 2))


def ll_value(instance, x, y, view=None) -> float:
    """tr(y' Theta_aux y) + lam * tr(y y' x x') for the given auxiliary view."""
    v = _resolve_view(instance, view)
    x, y = _arr(x), _arr(y)
    th = instance.theta(v)
    return float(np.sum(y * (th @ y))) + ul_value(instance, x, y)


def ul_bound(instance) -> float:
    """lam * k: tr(y y' x x') <= k on orthonormal frames, attained at y = x."""
    return instance.lambda_coupling * instance.k


# --------------------------------------------------------------- gradients ---

def ll_egrad_y(instance, x, y, view=None) -> np.ndarray:
    """Ambient y-gradient of ll_value: 2 (Theta_aux + lam x x') y."""
    v = _resolve_view(instance, view)
    x, y = _arr(x), _arr(y)
    return 2.0 * (instance.theta(v) @ y) + 2.0 * instance.lambda_coupling * (x @ (x.T @ y))


def ul_egrad_y(instance, x, y) -> np.ndarray:
    """Ambient y-gradient of ul_value: 2 lam x x' y."""
    x, y = _arr(x), _arr(y)
    return 2.0 * instance.lambda_coupling * (x @ (x.T @ y))


def ul_egrad_x(instance, x, y) -> np.ndarray:
    """Ambient x-gradient of ul_value: 2 lam y y' x."""
    x, y = _arr(x), _arr(y)
    return 2.0 * instance.lambda_coupling * (y @ (y.T @ x))


def ll_grad_y(instance, x, y, view=None) -> TangentVector:
    """Riemannian y-gradient of ll_value (projected ambient gradient)."""
    base = y if isinstance(y, ManifoldPoint) else ManifoldPoint(_arr(y))
    return TangentVector(base, project(base.data, ll_egrad_y(instance, x, base.data, view)))


def ul_grad_x(instance, x, y) -> TangentVector:
    """Riemannian x-gradient of ul_value (projected ambient gradient)."""
    base = x if isinstance(x, ManifoldPoint) else ManifoldPoint(_arr(x))
    return TangentVector(base, project(base.data, ul_egrad_x(instance, base.data, y)))


# -------------------------------------------------- second-order products ---

def hvp_yy_ll(instance, x, y, v, view=None) -> np.ndarray:
    """d/dt ll_egrad_y(x, y + t v) = 2 (Theta_aux + lam x x') v."""
    w = _resolve_view(instance, view)
    x, v = _arr(x), np.asarray(v, dtype=float)
    return 2.0 * (instance.theta(w) @ v) + 2.0 * instance.lambda_coupling * (x @ (x.T @ v))


def hvp_yy_ul(instance, x, y, v) -> np.ndarray:
    """d/dt ul_egrad_y(x, y + t v) = 2 lam x x' v."""
    x, v = _arr(x), np.asarray(v, dtype=float)
    return 2.0 * instance.lambda_coupling * (x @ (x.T @ v))


def hvp_xy_ul(instance, x, y, u) -> np.ndarray:
    """d/dt ul_egrad_x(x, y + t u) = 2 lam (y u' + u y') x."""
    x, y, u = _arr(x), _arr(y), np.asarray(u, dtype=float)
    return 2.0 * instance.lambda_coupling * (y @ (u.T @ x) + u @ (y.T @ x))


def hvp_xy_ll(instance, x, y, u, view=None) -> np.ndarray:
    """Same as hvp_xy_ul: only the coupling term of ll_value depends on x."""
    return hvp_xy_ul(instance, x, y, u)


# ----------------------------------------------------------- problem factory ---

def _orthonormal_pair(x, y):
    return qr_factor(x)[0], qr_factor(y)[0]


def bilevel_problem(instance, view=None, manifold_mode="riemannian") -> BilevelProblem:
    """Bilevel problem for one auxiliary view (maximize orientation).

    The euclidean variants run the same callbacks without projections; their
    trace values are reported at QR-orthonormalized representatives via
    trace_map, which also keeps warm-started iterates at unit scale.
    """
    v = _resolve_view(instance, view)
    return BilevelProblem(
        ul_value=lambda x, y: ul_value(instance, x, y),
        ll_value=lambda x, y: ll_value(instance, x, y, v),
        egrad_y_ul=lambda x, y: ul_egrad_y(instance, x, y),
        egrad_y_ll=lambda x, y: ll_egrad_y(instance, x, y, v),
        egrad_x_ul=lambda x, y: ul_egrad_x(instance, x, y),
        hvp_yy_ul=lambda x, y, u: hvp_yy_ul(instance, x, y, u),
        hvp_yy_ll=lambda x, y, u: hvp_yy_ll(instance, x, y, u, v),
        hvp_xy_ul=lambda x, y, u: hvp_xy_ul(instance, x, y, u),
        hvp_xy_ll=lambda x, y, u: hvp_xy_ll(instance, x, y, u, v),
        manifold_mode=manifold_mode,
        ul_bound=ul_bound(instance),
        maximize=True,
        trace_map=_orthonormal_pair,
        name=instance.view_names[v],
    )


def bilevel_problems(instance, manifold_mode="riemannian"):
    """One problem per auxiliary view, in view order (consensus excluded)."""
    return [bilevel_problem(instance, v, manifold_mode) for v in instance.aux_views]


def spectral_init(instance, view=None) -> ManifoldPoint:
    """Top-k eigenvector frame of one view's operator (consensus by default).

    Column signs are fixed so the largest-magnitude entry of each column is
    positive, making the frame a deterministic function of the operator.
    """
    v = instance.consensus if view is None else _resolve_view(instance, view)
    _, vecs = np.linalg.eigh(instance.theta(v))
    frame = vecs[:, -instance.k:][:, ::-1].copy()
    for j in range(frame.shape[1]):
        lead = int(np.argmax(np.abs(frame[:, j])))
        if frame[lead, j] < 0:
            frame[:, j] = -frame[:, j]
    return ManifoldPoint(frame)


# ------------------------------------------------------------- serialization ---

def save_instance(instance: MvhscInstance, path):
    """Write a JSON header line, then each view's dense operator as raw
    row-major little-endian float64."""
    header = {
        "format": _FORMAT,
        "version": 1,
        "n": instance.n,
        "k": instance.k,
        "lambda": instance.lambda_coupling,
        "consensus": instance.consensus,
        "views": list(instance.view_names),
        "construction": instance.construction,
        "dtype": "<f8",
        "order": "C",
    }
    with open(path, "wb") as fh:
        fh.write(json.dumps(header).encode("utf-8"))
        fh.write(b"\n")
        for op in instance.thetas:
            fh.write(np.ascontiguousarray(op.theta, dtype="<f8").tobytes())


def load_instance(path) -> MvhscInstance:
    """Inverse of save_instance; validates the header and every operator."""
    with open(path, "rb") as fh:
        line = fh.readline()
        try:
            header = json.loads(line.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as err:
            raise ValueError(f"malformed instance header: {err}") from None
        if header.get("format") != _FORMAT:
            raise ValueError(f"unrecognized format {header.get('format')!r}: "
                             f"expected {_FORMAT!r}")
        if header.get("version") != 1:
            raise ValueError(f"unsupported version {header.get('version')!r}")
        n = int(header["n"])
        need = n * n * 8
        thetas = []
        for i, _name in enumerate(header["views"]):
            raw = fh.read(need)
            if len(raw) != need:
                raise ValueError(f"truncated payload for view {i}: expected "
                                 f"{need} bytes, got {len(raw)}")
            theta = np.frombuffer(raw, dtype="<f8").reshape(n, n).copy()
            thetas.append(HypergraphOperator(theta))
    return MvhscInstance(
        thetas=thetas,
        k=int(header["k"]),
        lambda_coupling=float(header["lambda"]),
        consensus=int(header["consensus"]),
        view_names=header["views"],
        construction=header.get("construction"),
    )
