"""Fitting u(x) = -(1.4 - 3x) sin(18x) from 15 samples.

A plain network fits only the sampled values; the gradient-enhanced
variant also penalizes the misfit of du/dx at the same points and lands
roughly an order of magnitude lower in L2 error. Demo scale: 4000
iterations (a tenth of a percent-level result needs the full 10000).
"""

from gpinn import TrainConfig, train

for method in ("nn", "gnn"):
    cfg = TrainConfig(
        problem="func-approx",
        method=method,
        depth=4,
        width=20,
        learning_rate=1e-3,
        iterations=4000,
        seed=0,
        n_residual=15,
        w_g=1.0,
        snapshot_every=1000,
    )
    r = train("func-approx", cfg)
    print(
        f"{method:>3}: L2 error of u = {r.final.u_error:.4%}, "
        f"of du/dx = {r.final.derivative_errors[0]:.4%}  "
        f"({r.wall_clock:.0f}s)"
    )
