"""Run the four solver variants on one synthetic trace-maximization instance.

The two flags behind the variant names: does the solver respect the manifold
(project gradients + retract after every step), and does it open the inner
loop with an adaptive curvature-step phase before the diminishing phase.

    bda    flat geometry, diminishing only
    bdag   manifold,      diminishing only
    b3da   flat geometry, adaptive + diminishing
    fbda   manifold,      adaptive + diminishing
"""

import numpy as np

from rblo.bilevel import SolverConfig, VARIANTS, solve
from rblo.dataio import synth_bilevel
from rblo.manifold import Rng, random_point
from rblo.mvhsc import bilevel_problem

SEED = 7
N, K = 16, 3

synth = synth_bilevel("grassmann_trace", seed=SEED, n=N, k=K)
inst = synth.oracle["instance"]
bound = synth.oracle["ul_bound"]
rng = Rng(SEED)
x0 = random_point(N, K, rng)
y0 = random_point(N, K, rng)

print(f"instance: n={N}, k={K}, upper-level bound lam*k = {bound}")
print(f"{'variant':<8} {'geometry':<11} {'adaptive':<9} {'final UL gap':<14} "
      f"{'worst ||y^T y - I||':<12}")
for variant in ("bda", "bdag", "b3da", "fbda"):
    riemannian, adaptive = VARIANTS[variant]
    mode = "riemannian" if riemannian else "euclidean"
    problem = bilevel_problem(inst, manifold_mode=mode)
    cfg = SolverConfig(variant=variant, k1=20, k2=10, outer_iters=150,
                       lambda_outer=0.1, seed=SEED, collect_points=True)
    _, _, trace = solve(problem, cfg, x0.data, y0.data)
    gap = bound - trace.outer[-1]["ul_value"]
    drift = max(np.linalg.norm(y.T @ y - np.eye(K)) for y in trace.points["y"])
    print(f"{variant:<8} {mode:<11} {str(adaptive):<9} {gap:<14.6g} {drift:.2e}")

print("""
The euclidean ablations run plain ambient ascent on an objective that is
unbounded off the manifold, so their raw inner iterates blow up (right
column); all reported values are taken at normalized representatives, which
is why their gap still closes. The manifold variants never leave the
constraint set. On a single synthetic view the upper-level bound is
attainable and flat geometry happens to close the gap fastest; the regime
where geometry decides the benchmark is the multi-view corpus - see
demos/miniature_bench.py.""")
