"""Inferring the effective viscosity of wall-bounded porous-media flow.

Five velocity sensors and ten residual points; the effective viscosity
(and optionally the permeability) is optimized in log-space jointly
with the network. Demo scale: 20000 iterations (full runs use 50000).
"""

from gpinn import TrainConfig, train

TRUE = 1e-3

print("single unknown (effective viscosity):")
for method in ("pinn", "gpinn"):
    cfg = TrainConfig(
        problem="brinkman",
        method=method,
        iterations=20000,
        seed=0,
        n_residual=10,
        w_g=0.1,
        infer=("nu_e",),
        snapshot_every=5000,
    )
    r = train("brinkman", cfg)
    nu = r.final.inferred["nu_e"]
    print(f"  {method:>5}: nu_e = {nu:.4e} (true 1e-3, rel err {abs(nu-TRUE)/TRUE:.1%}), "
          f"u-err {r.final.u_error:.2e}")
    traj = [s.inferred["nu_e"] for s in r.snapshots]
    print(f"         trajectory: {['%.2e' % v for v in traj]}")

print("two unknowns (viscosity and permeability):")
cfg = TrainConfig(
    problem="brinkman", method="gpinn", iterations=20000, seed=0,
    n_residual=10, w_g=0.1, infer=("nu_e", "K"), snapshot_every=20000,
)
r = train("brinkman", cfg)
print(f"  gpinn: nu_e = {r.final.inferred['nu_e']:.4e}, K = {r.final.inferred['K']:.4e}")
