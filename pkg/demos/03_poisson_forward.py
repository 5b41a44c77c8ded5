"""1D Poisson with a hard-constraint surrogate: x(pi-x)N(x) + x.

The residual loss alone (the baseline) is compared against adding the
penalty on df/dx with weight 0.01. Both use the same 20 equispaced
interior points and identical initialization.
"""

from gpinn import TrainConfig, train

for method in ("pinn", "gpinn"):
    cfg = TrainConfig(
        problem="poisson-1d",
        method=method,
        iterations=20000,
        seed=0,
        n_residual=20,
        w_g=0.01,
        snapshot_every=5000,
    )
    r = train("poisson-1d", cfg)
    print(f"{method}: ")
    for s in r.snapshots:
        print(
            f"  iter {s.iteration:>6}: u-err {s.u_error:.2e}  "
            f"u'-err {s.derivative_errors[0]:.2e}  mean|f| {s.mean_abs_residual:.2e}"
        )
