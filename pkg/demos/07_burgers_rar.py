"""Burgers' equation with residual-based adaptive refinement.

The solution develops a steep front at x = 0; refinement scores fresh
uniform candidates by |f| after each round and adds the ten largest, so
new points pile up along the front. Demo scale: a few hundred
iterations per phase and 800 initial points; the full schedule is
1500 + 40 rounds x 10 points with thousands of iterations per round
(configs/3.4.1_burgers_rar.toml).
"""

import numpy as np

from gpinn import RarConfig, TrainConfig, rar_refine

cfg = TrainConfig(
    problem="burgers",
    method="pinn",
    depth=4,
    width=32,
    optimizer="adam-then-lbfgs",
    iterations=1500,
    lbfgs_max_iter=300,
    seed=0,
    n_residual=800,
    n_boundary=64,
    w_g=0.01,
    snapshot_every=1500,
)
rar = RarConfig(m=10, rounds=5, pool=20000, round_iterations=300, round_lbfgs_iter=100)
r = rar_refine("burgers", cfg, rar)

added = r.residual_points[r.point_rounds > 0]
frac_front = np.mean(np.abs(added[:, 0]) < 0.2)
print(f"final point count: {len(r.residual_points)} (800 initial + 5 rounds x 10)")
print(f"fraction of added points within |x| < 0.2: {frac_front:.0%}")
print(f"u error vs the quadrature reference: {r.final.u_error:.2%}")
for s in r.snapshots[-5:]:
    print(f"  iter {s.iteration:>6}: {len(r.residual_points)} pts, u-err {s.u_error:.3e}")
