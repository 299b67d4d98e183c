"""Matrix-manifold geometry for subspaces with orthonormal bases.

Points are n-by-k matrices with orthonormal columns, tangent vectors live in
the horizontal space X^T V = 0, and the retraction is the thin-QR
orthonormal factor. The metric is the embedded trace metric and transport
is projection onto the target horizontal space.
"""

from __future__ import annotations

import numpy as np

ORTHONORMALITY_TOL = 1e-10
HORIZONTALITY_TOL = 1e-8
QR_DEGENERACY_TOL = 1e-12


class DimensionError(ValueError):
    """Array shapes are incompatible with the requested operation."""


class BaseMismatchError(ValueError):
    """Tangent vectors from different base points were combined."""


class DegenerateRetractionError(RuntimeError):
    """QR factor is rank-deficient: some |r_ii| fell below tolerance."""


class Rng:
    """Deterministic random stream backed by numpy's PCG64.

    The same 64-bit seed yields the same stream on every platform, which is
    what makes runs and benchmarks reproducible end to end.
    """

    def __init__(self, seed: int):
        self.seed = int(seed)
        self.generator = np.random.Generator(np.random.PCG64(self.seed))

    def standard_normal(self, shape):
        return self.generator.standard_normal(shape)

    def integers(self, low, high=None):
        return int(self.generator.integers(low, high))

    def random(self, size=None):
        return self.generator.random(size)


class ManifoldPoint:
    """An n-by-k matrix with orthonormal columns (a basis of a subspace)."""

    def __init__(self, data):
        data = np.array(data, dtype=float)
        if data.ndim != 2:
            raise DimensionError(f"point must be a 2-d matrix, got ndim={data.ndim}")
        n, k = data.shape
        if not (n >= k >= 1):
            raise DimensionError(f"need n >= k >= 1, got ({n}, {k})")
        defect = np.linalg.norm(data.T @ data - np.eye(k))
        if defect > ORTHONORMALITY_TOL:
            raise ValueError(
                f"columns not orthonormal: ||X^T X - I||_F = {defect:.3e} "
                f"> {ORTHONORMALITY_TOL:.0e}"
            )
        data.setflags(write=False)
        self.data = data
        self.n = n
        self.k = k

    def __repr__(self):
        return f"ManifoldPoint(n={self.n}, k={self.k})"


class TangentVector:
    """A horizontal direction at a base point: base^T data = 0."""

    def __init__(self, base: ManifoldPoint, data):
        data = np.array(data, dtype=float)
        if data.shape != (base.n, base.k):
            raise DimensionError(
                f"tangent data shape {data.shape} != base shape {(base.n, base.k)}"
            )
        defect = np.linalg.norm(base.data.T @ data)
        if defect > HORIZONTALITY_TOL:
            raise ValueError(
                f"not horizontal: ||X^T V||_F = {defect:.3e} > {HORIZONTALITY_TOL:.0e}"
            )
        data.setflags(write=False)
        self.base = base
        self.data = data

    def norm(self) -> float:
        return float(np.linalg.norm(self.data))

    def __repr__(self):
        return f"TangentVector(n={self.base.n}, k={self.base.k}, norm={self.norm():.3e})"


# ------------------------------------------------------------------------
# array-level helpers (shared by the solver, which carries raw iterates)
# ------------------------------------------------------------------------

def project(x_data: np.ndarray, a: np.ndarray) -> np.ndarray:
    """(I - x x^T) a for an orthonormal-column basis x, without forming I."""
    return a - x_data @ (x_data.T @ a)


def qr_factor(b: np.ndarray):
    """Thin QR with the positive-diagonal sign convention.

    Returns (q, r) with diag(r) > 0 so the factorization is a deterministic
    function of b. Raises DegenerateRetractionError when any |r_ii| is below
    tolerance (b is numerically rank-deficient).
    """
    q, r = np.linalg.qr(b)
    d = np.diag(r)
    if np.any(np.abs(d) < QR_DEGENERACY_TOL) or not np.all(np.isfinite(d)):
        raise DegenerateRetractionError(
            f"rank-deficient factor: min |r_ii| = {np.min(np.abs(d)):.3e}"
        )
    s = np.sign(d)
    return q * s, r * s[:, None]


def projection_distance(x_data: np.ndarray, y_data: np.ndarray) -> float:
    """||X X^T - Y Y^T||_F / sqrt(2) between two orthonormal-column bases."""
    if x_data.shape != y_data.shape:
        raise DimensionError(f"shape mismatch: {x_data.shape} vs {y_data.shape}")
    gap = x_data @ x_data.T - y_data @ y_data.T
    return float(np.linalg.norm(gap) / np.sqrt(2.0))


# ------------------------------------------------------------------------
# typed operations
# ------------------------------------------------------------------------

def project_tangent(x: ManifoldPoint, a: np.ndarray) -> TangentVector:
    """Project an ambient n-by-k matrix onto the horizontal space at x."""
    a = np.asarray(a, dtype=float)
    if a.shape != (x.n, x.k):
        raise DimensionError(f"ambient shape {a.shape} != point shape {(x.n, x.k)}")
    return TangentVector(x, project(x.data, a))


def qr_retract(x: ManifoldPoint, v: TangentVector) -> ManifoldPoint:
    """Retraction: orthonormal factor of x + v, positive-diagonal convention."""
    if v.base is not x and not np.array_equal(v.base.data, x.data):
        raise BaseMismatchError("tangent vector is not based at the given point")
    q, _ = qr_factor(x.data + v.data)
    return ManifoldPoint(q)


def inner(v: TangentVector, w: TangentVector) -> float:
    """Trace metric <V, W> = tr(V^T W)."""
    if v.base is not w.base and not np.array_equal(v.base.data, w.base.data):
        raise BaseMismatchError("inner product needs a shared base point")
    return float(np.sum(v.data * w.data))


def transport(from_point: ManifoldPoint, to_point: ManifoldPoint,
              v: TangentVector) -> TangentVector:
    """Projection transport: re-project v's matrix onto the space at `to_point`."""
    if (from_point.n, from_point.k) != (to_point.n, to_point.k):
        raise DimensionError("transport endpoints must share (n, k)")
    if v.base is not from_point and not np.array_equal(v.base.data, from_point.data):
        raise BaseMismatchError("tangent vector is not based at `from_point`")
    return project_tangent(to_point, v.data)


def subspace_distance(x: ManifoldPoint, y: ManifoldPoint) -> float:
    """Projection distance between the spanned subspaces (basis-independent)."""
    if (x.n, x.k) != (y.n, y.k):
        raise DimensionError("distance needs matching (n, k)")
    return projection_distance(x.data, y.data)


def random_point(n: int, k: int, rng: Rng) -> ManifoldPoint:
    """Draw from the invariant distribution: Q-factor of a Gaussian matrix."""
    if n < k:
        raise DimensionError(f"need n >= k, got ({n}, {k})")
    g = rng.standard_normal((n, k))
    q, _ = qr_factor(g)
    return ManifoldPoint(q)
