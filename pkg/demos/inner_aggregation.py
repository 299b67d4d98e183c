import numpy as np

from rblo.bilevel import SolverConfig, run_inner
from rblo.dataio import synth_bilevel
from rblo.manifold import Rng

# Inner loop on the synthetic quadratic: watch the aggregation forget the
# upper objective. The upper-level factor decays like 1/(k+1) while the
# lower-level factor stays constant, so the iterate slides into the
# lower-level solution set y* = A x no matter where the upper pull points.

synth = synth_bilevel("euclidean_quadratic", seed=11, n_x=3, n_y=5)
problem, oracle = synth.problem, synth.oracle

rng = Rng(1)
x = rng.standard_normal((3, 1))
y_star = oracle["ll_solution"](x)

cfg = SolverConfig(variant="bda", mu=0.5, k1=0, k2=2000)
traj = run_inner(problem, x, np.zeros_like(y_star), cfg)

print("k      s_u_k      dist(y_k, y*)   F(x, y_k)")
for k in (1, 5, 10, 50, 100, 500, 1000, 2000):
    d = np.linalg.norm(traj.ys[k] - y_star)
    print(f"{k:<6d} {traj.s_u[k - 1]:<10.4g} {d:<15.6g} {traj.ul_values[k - 1]:.6f}")

phi = oracle["phi"](x)
print(f"\ntruncated outer value F(x, y_K) = {traj.ul_values[-1]:.6f}")
print(f"exact phi(x) at the LL solution = {phi:.6f}")
print(f"truncation gap                  = {abs(traj.ul_values[-1] - phi):.2e}")
