"""Bilevel solvers with descent aggregation on matrix manifolds.

Four variants share one code path:

    bda   euclidean geometry, diminishing steps only
    bdag  riemannian geometry, diminishing steps only
    b3da  euclidean geometry, adaptive (curvature-quotient) phase then diminishing
    fbda  riemannian geometry, adaptive phase then diminishing

The inner loop aggregates the two objectives' gradients with weight mu; the
outer loop follows the reverse-sweep hypergradient of the unrolled inner
dynamics. Maximization problems are handled by negating internally and
reporting un-negated values.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, asdict
from typing import Callable, NamedTuple, Optional

import numpy as np

from .manifold import ManifoldPoint, TangentVector, project, qr_factor, qr_retract

BB_CLAMP_DEFAULT = (1e-6, 1e2)
STAGNATION_TOL = 1e-14

# variant -> (riemannian geometry, adaptive first phase)
VARIANTS = {
    "bda": (False, False),
    "bdag": (True, False),
    "b3da": (False, True),
    "fbda": (True, True),
}


class SolverError(RuntimeError):
    """Numerical failure inside a run; carries location and partial trace."""

    def __init__(self, message, outer_idx=-1, inner_idx=-1, trace=None):
        super().__init__(message)
        self.outer_idx = outer_idx
        self.inner_idx = inner_idx
        self.trace = trace


class TrajectoryMismatchError(ValueError):
    """A trajectory was paired with a different point than it was run under."""


class BilevelProblem:
    """Callbacks defining F (upper level) and f (lower level) on ambient matrices.

    All callbacks take raw arrays (x, y) and return arrays/scalars; the
    solver applies tangent projections itself in riemannian mode. hvp_xy_*
    maps a y-shaped direction u to the x-gradient of <egrad_y, u>.
    """

    def __init__(self, ul_value, ll_value, egrad_y_ul, egrad_y_ll, egrad_x_ul,
                 hvp_yy_ul, hvp_yy_ll, hvp_xy_ul, hvp_xy_ll,
                 manifold_mode="riemannian", ul_bound=None, maximize=False,
                 trace_map=None, name=""):
        if manifold_mode not in ("euclidean", "riemannian"):
            raise ValueError(f"unknown manifold_mode: {manifold_mode!r}")
        self.ul_value = ul_value
        self.ll_value = ll_value
        self.egrad_y_ul = egrad_y_ul
        self.egrad_y_ll = egrad_y_ll
        self.egrad_x_ul = egrad_x_ul
        self.hvp_yy_ul = hvp_yy_ul
        self.hvp_yy_ll = hvp_yy_ll
        self.hvp_xy_ul = hvp_xy_ul
        self.hvp_xy_ll = hvp_xy_ll
        self.manifold_mode = manifold_mode
        self.ul_bound = ul_bound
        self.maximize = bool(maximize)
        # optional (x, y) -> (x', y') map applied before values enter traces;
        # used to report objective values at normalized representatives
        self.trace_map = trace_map
        self.name = name

    @property
    def riemannian(self):
        return self.manifold_mode == "riemannian"


@dataclass
class SolverConfig:
    variant: str = "fbda"
    mu: float = 0.5
    k1: int = 20
    k2: int = 10
    s_u: float = 1.0
    s_l: float = 1.0
    lambda_outer: float = 0.1
    outer_iters: int = 100
    beta_floor: float = 1.0
    bb_clamp: tuple = BB_CLAMP_DEFAULT
    hypergrad_mode: str = "reverse_sweep"
    hypergrad_qr_mode: str = "projection"
    tol_outer: float = 0.0
    seed: int = 0
    warm_start: bool = True
    bb_inverse: bool = False
    collect_points: bool = False

    def validate(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}; expected one of {sorted(VARIANTS)}")
        if not (0.0 < self.mu < 1.0):
            raise ValueError(f"mu must lie strictly inside (0,1), got {self.mu}")
        if self.k1 < 0 or self.k2 < 1:
            raise ValueError(f"need k1 >= 0 and k2 >= 1, got ({self.k1}, {self.k2})")
        if self.s_u <= 0 or self.s_l <= 0 or self.lambda_outer < 0:
            raise ValueError("step-size constants must be positive")
        lo, hi = self.bb_clamp
        if not (0.0 < lo <= hi):
            raise ValueError(f"invalid clamp interval {self.bb_clamp}")
        if not (0.0 < self.beta_floor <= 1.0):
            raise ValueError(f"beta_floor must lie in (0,1], got {self.beta_floor}")
        if self.hypergrad_mode not in ("reverse_sweep", "truncated"):
            raise ValueError(f"unknown hypergrad_mode {self.hypergrad_mode!r}")
        if self.hypergrad_qr_mode not in ("projection", "exact"):
            raise ValueError(f"unknown hypergrad_qr_mode {self.hypergrad_qr_mode!r}")
        if self.outer_iters < 0:
            raise ValueError("outer_iters must be non-negative")
        return self


@dataclass
class InnerTrajectory:
    """Unrolled inner states and everything needed to differentiate them."""
    ys: list                      # T+1 points (raw arrays)
    mu: float
    s_u: list
    s_l: list
    phase: list                   # "bb" | "dim" | "frozen" per step
    ll_values: list               # at y_{k+1}, reporting-mapped
    ul_values: list
    stagnated: list
    g_ul_amb: list                # ambient UL y-gradients at step origins y_0..y_{T-1}
    g_ll_amb: list
    r_factors: list               # R factor per retraction (riemannian only)
    x_data: np.ndarray


@dataclass
class RunTrace:
    variant: str
    seed: int
    ul_bound: Optional[float]
    config: dict
    n_views: int = 1
    inner: list = field(default_factory=list)
    outer: list = field(default_factory=list)
    wall_time_s: float = 0.0
    points: Optional[dict] = None


class BbStepsizes(NamedTuple):
    s_u: float
    s_l: float
    stagnated: bool


# ------------------------------------------------------------------------
# step-size schedules
# ------------------------------------------------------------------------

def _bb_quotient(dy, dg, clamp, inverse):
    num = float(np.sum(dy * dg))
    den = float(np.sum(dy * dy))
    raw = (den / num) if inverse else (num / den)
    if inverse and num == 0.0:
        raw = np.nan
    lo, hi = clamp
    if not np.isfinite(raw) or raw <= 0.0:
        return lo
    return float(min(max(raw, lo), hi))


def bb_stepsizes(y_k, y_km1, g_ul_k, g_ul_km1, g_ll_k, g_ll_km1,
                 clamp=BB_CLAMP_DEFAULT, riemannian=False,
                 bb_inverse=False) -> BbStepsizes:
    """Adaptive step sizes from successive iterate/gradient differences.

    Computes <dy, dg> / ||dy||^2 per objective (the curvature quotient,
    taken verbatim; bb_inverse selects its reciprocal), clamps into
    [clamp[0], clamp[1]], and substitutes clamp[0] for non-positive or
    non-finite values. In riemannian mode the previous gradients are
    transported (projected) to the tangent space at y_k before differencing.
    A vanishing ||dy|| (< 1e-14) cannot be divided through: both sizes fall
    back to the clamp midpoint and the result is flagged stagnated.
    """
    dy = y_k - y_km1
    if float(np.linalg.norm(dy)) < STAGNATION_TOL:
        mid = 0.5 * (clamp[0] + clamp[1])
        return BbStepsizes(mid, mid, True)
    if riemannian:
        g_ul_km1 = project(y_k, g_ul_km1)
        g_ll_km1 = project(y_k, g_ll_km1)
    s_u = _bb_quotient(dy, g_ul_k - g_ul_km1, clamp, bb_inverse)
    s_l = _bb_quotient(dy, g_ll_k - g_ll_km1, clamp, bb_inverse)
    return BbStepsizes(s_u, s_l, False)


def diminishing_stepsizes(k: int, s_u: float, s_l: float, beta_floor: float = 1.0):
    """Schedule for the tail phase, indexed from k = 0 at the phase start.

    The upper-level factor decays harmonically (alpha_k = 1/(k+1), summing
    to infinity while vanishing) so the aggregation forgets the upper
    objective asymptotically and the iterates settle into the lower-level
    solution set; the lower-level factor stays constant (beta_k = 1, which
    satisfies any floor in (0,1]).
    """
    if k < 0:
        raise ValueError("phase index must be non-negative")
    alpha_k = 1.0 / (k + 1.0)
    beta_k = 1.0
    return s_u * alpha_k, s_l * beta_k


# ------------------------------------------------------------------------
# inner loop
# ------------------------------------------------------------------------

def _as_array(p) -> np.ndarray:
    return np.asarray(getattr(p, "data", p), dtype=float)


def _inner_gradients(problem, x, y):
    """Ambient and (in riemannian mode) projected gradients at (x, y)."""
    g_ul = np.asarray(problem.egrad_y_ul(x, y), dtype=float)
    g_ll = np.asarray(problem.egrad_y_ll(x, y), dtype=float)
    if problem.riemannian:
        return g_ul, g_ll, project(y, g_ul), project(y, g_ll)
    return g_ul, g_ll, g_ul, g_ll


def _check_finite(arrs, inner_idx):
    for a in arrs:
        if not np.all(np.isfinite(a)):
            raise SolverError("non-finite gradient entries", inner_idx=inner_idx)


def _step_once(problem, x, y, g_proj_ul, g_proj_ll, s_u_k, s_l_k, mu):
    """One aggregation move from y; returns (next point, R factor or None)."""
    direction = mu * s_u_k * g_proj_ul + (1.0 - mu) * s_l_k * g_proj_ll
    if not problem.maximize:
        direction = -direction
    if problem.riemannian:
        q, r = qr_factor(y + direction)
        return q, r
    return y + direction, None


def aggregate_step(problem, x, y_k, s_u_k: float, s_l_k: float, mu: float):
    """Single inner update combining both objectives' gradients.

    Riemannian mode projects the gradients, moves, and retracts (returns a
    ManifoldPoint); euclidean mode is the plain ambient update. Descent for
    minimization problems, ascent when problem.maximize is set.
    """
    if not (np.isfinite(s_u_k) and np.isfinite(s_l_k) and s_u_k > 0 and s_l_k > 0):
        raise ValueError(f"step sizes must be positive and finite, got ({s_u_k}, {s_l_k})")
    x_arr = _as_array(x)
    y_arr = _as_array(y_k)
    _, _, gp_ul, gp_ll = _inner_gradients(problem, x_arr, y_arr)
    _check_finite((gp_ul, gp_ll), inner_idx=0)
    y_next, _ = _step_once(problem, x_arr, y_arr, gp_ul, gp_ll, s_u_k, s_l_k, mu)
    if problem.riemannian:
        return ManifoldPoint(y_next)
    return y_next


def run_inner(problem, x, y0, config: SolverConfig, fixed_steps=None) -> InnerTrajectory:
    """Unroll the inner loop: an adaptive phase of k1 steps (skipped by the
    diminishing-only variants), then k2 diminishing steps re-indexed from 0.

    fixed_steps overrides the schedule with the given (s_u_k, s_l_k) pairs;
    that is what finite-difference checks use to differentiate the same
    frozen dynamics the reverse sweep linearizes.
    """
    config.validate()
    x = _as_array(x)
    y = _as_array(y0).copy()
    riem = problem.riemannian
    adaptive = VARIANTS[config.variant][1]
    k1 = config.k1 if adaptive and fixed_steps is None else 0
    total = len(fixed_steps) if fixed_steps is not None else config.k1 + config.k2

    x_rep, y_rep_of = x, None
    if problem.trace_map is not None:
        x_rep, _ = problem.trace_map(x, y)
        y_rep_of = lambda yy: problem.trace_map(x, yy)[1]

    traj = InnerTrajectory(ys=[y.copy()], mu=config.mu, s_u=[], s_l=[], phase=[],
                           ll_values=[], ul_values=[], stagnated=[],
                           g_ul_amb=[], g_ll_amb=[], r_factors=[],
                           x_data=x.copy())
    # Curvature quotients are taken on the objective the step DESCENDS
    # (the negation when maximizing): near a constrained maximum the
    # original-sign quotient is negative and would pin every adaptive step
    # to the clamp floor.
    sgn = -1.0 if problem.maximize else 1.0
    prev = None  # (y, g_desc_ul, g_desc_ll) at the previous step origin
    for k in range(total):
        g_ul, g_ll, gp_ul, gp_ll = _inner_gradients(problem, x, y)
        _check_finite((gp_ul, gp_ll), inner_idx=k)
        stag = False
        if fixed_steps is not None:
            s_u_k, s_l_k = fixed_steps[k]
            phase = "frozen"
        elif k < k1:
            phase = "bb"
            if prev is None:
                s_u_k, s_l_k = config.s_u, config.s_l
            else:
                res = bb_stepsizes(y, prev[0], sgn * gp_ul, prev[1],
                                   sgn * gp_ll, prev[2],
                                   clamp=config.bb_clamp, riemannian=riem,
                                   bb_inverse=config.bb_inverse)
                s_u_k, s_l_k, stag = res
        else:
            phase = "dim"
            s_u_k, s_l_k = diminishing_stepsizes(k - k1, config.s_u, config.s_l,
                                                 config.beta_floor)
        prev = (y, sgn * gp_ul, sgn * gp_ll)
        y_next, r = _step_once(problem, x, y, gp_ul, gp_ll, s_u_k, s_l_k, config.mu)
        if not np.all(np.isfinite(y_next)):
            raise SolverError("non-finite iterate", inner_idx=k)

        y_rep = y_next if y_rep_of is None else y_rep_of(y_next)
        traj.ys.append(y_next.copy())
        traj.s_u.append(float(s_u_k))
        traj.s_l.append(float(s_l_k))
        traj.phase.append(phase)
        traj.stagnated.append(stag)
        traj.g_ul_amb.append(g_ul)
        traj.g_ll_amb.append(g_ll)
        traj.r_factors.append(r)
        traj.ll_values.append(float(problem.ll_value(x_rep, y_rep)))
        traj.ul_values.append(float(problem.ul_value(x_rep, y_rep)))
        y = y_next
    return traj


# ------------------------------------------------------------------------
# hypergradient
# ------------------------------------------------------------------------

def _qr_diff_adjoint(q, r, u):
    """Adjoint of the thin-QR orthonormal-factor differential at B = q r.

    (Dqf)^T[u] = (q N + (I - qq^T) u) R^{-T} with N = tril(q^T u - u^T q, -1).
    """
    s = q.T @ u
    n_mat = np.tril(s - s.T, -1)
    core = q @ n_mat + (u - q @ (q.T @ u))
    return np.linalg.solve(r, core.T).T


def _proj_grad_diff_adjoint(problem, which, x, y, w, g_amb, v_in):
    """Adjoint of v -> d/dy [ (I-yy^T) egrad(y) ] v applied to w.

    v_in = (I-yy^T) w is passed in to avoid recomputing the projection.
    """
    hvp = problem.hvp_yy_ul if which == "ul" else problem.hvp_yy_ll
    return hvp(x, y, v_in) - w @ (g_amb.T @ y) - g_amb @ (w.T @ y)


def _hypergradient_array(problem, x, traj: InnerTrajectory, mode="reverse_sweep",
                         qr_mode="projection") -> np.ndarray:
    riem = problem.riemannian
    mu = traj.mu
    y_final = traj.ys[-1]
    fx = np.asarray(problem.egrad_x_ul(x, y_final), dtype=float)
    big_t = len(traj.s_u)
    if mode == "truncated" or big_t == 0:
        return project(x, fx) if riem else fx

    sign = 1.0 if problem.maximize else -1.0
    u = np.asarray(problem.egrad_y_ul(x, y_final), dtype=float)
    if riem:
        u = project(y_final, u)
    g_x = np.zeros_like(fx)
    for t in range(big_t, 0, -1):
        i = t - 1
        y_prev, y_cur = traj.ys[i], traj.ys[t]
        s_u_k, s_l_k = traj.s_u[i], traj.s_l[i]
        if riem:
            if qr_mode == "exact":
                w = _qr_diff_adjoint(y_cur, traj.r_factors[i], u)
            else:
                w = project(y_cur, u)
            v_in = project(y_prev, w)
        else:
            w = u
            v_in = w
        g_x += sign * (mu * s_u_k * np.asarray(problem.hvp_xy_ul(x, y_prev, v_in))
                       + (1.0 - mu) * s_l_k * np.asarray(problem.hvp_xy_ll(x, y_prev, v_in)))
        if riem:
            a_ul = _proj_grad_diff_adjoint(problem, "ul", x, y_prev, w,
                                           traj.g_ul_amb[i], v_in)
            a_ll = _proj_grad_diff_adjoint(problem, "ll", x, y_prev, w,
                                           traj.g_ll_amb[i], v_in)
        else:
            a_ul = np.asarray(problem.hvp_yy_ul(x, y_prev, w))
            a_ll = np.asarray(problem.hvp_yy_ll(x, y_prev, w))
        u = w + sign * (mu * s_u_k * a_ul + (1.0 - mu) * s_l_k * a_ll)
    res = fx + g_x
    return project(x, res) if riem else res


def hypergradient(problem, x, trajectory: InnerTrajectory, mode="reverse_sweep",
                  qr_mode="projection"):
    """Gradient of x -> F(x, y_T(x)) through the unrolled inner dynamics.

    reverse_sweep back-propagates the upper-level y-gradient through every
    inner step (step sizes held constant at their realized values, taken from
    the trajectory together with mu; in riemannian mode the retraction
    differential is either approximated by tangent projection at the arrival
    point or computed exactly from the stored QR factors, per qr_mode).
    truncated keeps only the direct x-dependence. Returns a TangentVector in
    riemannian mode, a raw array otherwise.
    """
    if mode not in ("reverse_sweep", "truncated"):
        raise ValueError(f"unknown hypergradient mode {mode!r}")
    x_arr = _as_array(x)
    if trajectory.x_data.shape != x_arr.shape or not np.array_equal(trajectory.x_data, x_arr):
        raise TrajectoryMismatchError("trajectory was unrolled at a different x")
    res = _hypergradient_array(problem, x_arr, trajectory, mode=mode,
                               qr_mode=qr_mode)
    if problem.riemannian:
        base = x if isinstance(x, ManifoldPoint) else ManifoldPoint(x_arr)
        return TangentVector(base, res)
    return res


def outer_step(x, hypergrad, lambda_outer: float):
    """Upper-level move: retract along -lambda * hypergrad (or the plain
    euclidean update when x is a raw array)."""
    if isinstance(x, ManifoldPoint):
        data = hypergrad.data if isinstance(hypergrad, TangentVector) else hypergrad
        return qr_retract(x, TangentVector(x, -lambda_outer * data))
    return x - lambda_outer * np.asarray(hypergrad)


# ------------------------------------------------------------------------
# outer loop
# ------------------------------------------------------------------------

def _config_echo(config: SolverConfig) -> dict:
    d = asdict(config)
    d["bb_clamp"] = list(d["bb_clamp"])
    return d


def _outer_report(problems, x, y_finals, hg_total):
    """Aggregate reporting values across views at the mapped representatives."""
    ul = ll = 0.0
    res_sq = 0.0
    for problem, y in zip(problems, y_finals):
        x_rep, y_rep = (problem.trace_map(x, y) if problem.trace_map is not None
                        else (x, y))
        ul += float(problem.ul_value(x_rep, y_rep))
        ll += float(problem.ll_value(x_rep, y_rep))
        g = np.asarray(problem.egrad_y_ll(x_rep, y_rep), dtype=float)
        if problem.riemannian or problem.trace_map is not None:
            g = project(y_rep, g)
        res_sq += float(np.sum(g * g))
    return ul, ll, float(np.sqrt(res_sq)), float(np.linalg.norm(hg_total))


def _solve_core(problems, config: SolverConfig, x0, y0s, tag_views: bool):
    config.validate()
    riem = problems[0].riemannian
    maximize = problems[0].maximize
    for p in problems:
        if p.riemannian != riem or p.maximize != maximize:
            raise ValueError("all views must share manifold_mode and orientation")
    bounds = [p.ul_bound for p in problems]
    ul_bound = float(sum(bounds)) if all(b is not None for b in bounds) else None

    x = _as_array(x0).copy()
    ys = [_as_array(y).copy() for y in y0s]
    trace = RunTrace(variant=config.variant, seed=config.seed, ul_bound=ul_bound,
                     config=_config_echo(config), n_views=len(problems))
    if config.collect_points:
        trace.points = {"x": [x.copy()], "y": [y.copy() for y in ys]}

    t_start = time.perf_counter()
    prev_ul, flat_streak = None, 0
    for t in range(config.outer_iters):
        hg_total = np.zeros_like(np.asarray(problems[0].egrad_x_ul(x, ys[0]), dtype=float))
        y_finals = []
        for v, (problem, y_start) in enumerate(zip(problems, ys)):
            try:
                traj = run_inner(problem, x, y_start, config)
            except SolverError as err:
                trace.wall_time_s = time.perf_counter() - t_start
                raise SolverError(str(err), outer_idx=t, inner_idx=err.inner_idx,
                                  trace=trace) from None
            for k in range(len(traj.s_u)):
                row = {"outer_idx": t, "inner_idx": k, "phase": traj.phase[k],
                       "s_u_k": traj.s_u[k], "s_l_k": traj.s_l[k],
                       "ll_value": traj.ll_values[k], "ul_value": traj.ul_values[k]}
                if tag_views:
                    row["view"] = v
                trace.inner.append(row)
            hg_total += _hypergradient_array(problem, x, traj,
                                             mode=config.hypergrad_mode,
                                             qr_mode=config.hypergrad_qr_mode)
            y_finals.append(traj.ys[-1])
            if config.collect_points:
                trace.points["y"].extend(yy.copy() for yy in traj.ys[1:])

        ul, ll, ll_res, hg_norm = _outer_report(problems, x, y_finals, hg_total)
        wall_ms = (time.perf_counter() - t_start) * 1000.0
        trace.outer.append({
            "outer_idx": t,
            "ul_value": ul,
            "ul_dval": (ul_bound - ul) if ul_bound is not None else None,
            "ll_final_value": ll,
            "ll_residual": ll_res,
            "hypergrad_norm": hg_norm,
            "wall_time_ms": wall_ms,
        })

        internal_hg = -hg_total if maximize else hg_total
        if riem:
            q, _ = qr_factor(x - config.lambda_outer * project(x, internal_hg))
            x = q
        else:
            x = x - config.lambda_outer * internal_hg
            if problems[0].trace_map is not None:
                x = np.asarray(problems[0].trace_map(x, y_finals[0])[0],
                               dtype=float)
        if config.collect_points:
            trace.points["x"].append(x.copy())

        # warm start; euclidean runs on problems with a normalization map hand
        # over the normalized point so iterate scale stays bounded across
        # outer iterations
        if config.warm_start:
            new_ys = []
            for problem, yf in zip(problems, y_finals):
                if not riem and problem.trace_map is not None:
                    _, yf = problem.trace_map(x, yf)
                new_ys.append(yf)
            ys = new_ys
        if config.tol_outer > 0.0 and prev_ul is not None:
            flat_streak = flat_streak + 1 if abs(ul - prev_ul) < config.tol_outer else 0
            if flat_streak >= 5:
                prev_ul = ul
                break
        prev_ul = ul

    trace.wall_time_s = time.perf_counter() - t_start
    return x, ys, trace


def _wrap_point(arr, riem):
    return ManifoldPoint(arr) if riem else arr


def solve(problem, config: SolverConfig, x0, y0):
    """Full outer loop on a single problem; returns (x, y, trace).

    Stops early when the reported UL value moves by less than tol_outer for
    five consecutive outer iterations (tol_outer > 0 enables this).
    """
    if config.outer_iters == 0:
        trace = RunTrace(variant=config.variant, seed=config.seed,
                         ul_bound=problem.ul_bound, config=_config_echo(config))
        return x0, y0, trace
    x, ys, trace = _solve_core([problem], config, x0, [y0], tag_views=False)
    riem = problem.riemannian
    return _wrap_point(x, riem), _wrap_point(ys[0], riem), trace


def solve_multiview(problems, config: SolverConfig, x0, y0s):
    """Outer loop over several views sharing the upper-level variable.

    Each view runs its own inner loop and contributes its hypergradient;
    contributions are summed in view order before the single outer update.
    Trace rows carry a `view` column.
    """
    if len(problems) != len(y0s):
        raise ValueError("need one initial lower-level point per view")
    if config.outer_iters == 0:
        bounds = [p.ul_bound for p in problems]
        ul_bound = float(sum(bounds)) if all(b is not None for b in bounds) else None
        trace = RunTrace(variant=config.variant, seed=config.seed, ul_bound=ul_bound,
                         config=_config_echo(config), n_views=len(problems))
        return x0, list(y0s), trace
    x, ys, trace = _solve_core(problems, config, x0, y0s, tag_views=True)
    riem = problems[0].riemannian
    return (_wrap_point(x, riem), [_wrap_point(y, riem) for y in ys], trace)
