"""Point sampling and the evaluation metrics reported for every run:
L2 relative errors of u and its derivatives on a dense deterministic
test grid, and the mean absolute PDE residual.
"""

from __future__ import annotations

import numpy as np

from .autodiff import grad
from .compiled import Program
from .loss import LossAssembly
from .problems import ProblemSpec, reference_solution
from . import reference

__all__ = [
    "sample_uniform",
    "sample_equispaced",
    "sample_equispaced_interior",
    "sample_hammersley",
    "l2_relative_error",
    "mean_abs_residual",
    "derivative_error",
    "TestGrid",
    "ModelEvaluator",
]

GRID_1D = 10_001
GRID_2D = 201  # per axis


def sample_uniform(domain: np.ndarray, n: int, seed: int) -> np.ndarray:
    """n i.i.d. uniform points in the box; deterministic per seed."""
    if n < 1:
        raise ValueError("n must be >= 1")
    domain = np.atleast_2d(np.asarray(domain, dtype=float))
    rng = np.random.default_rng(seed)
    return rng.uniform(domain[:, 0], domain[:, 1], size=(n, domain.shape[0]))


def sample_equispaced(a: float, b: float, n: int) -> np.ndarray:
    """n equispaced points on [a, b], endpoints included."""
    if n < 2:
        raise ValueError("need n >= 2 for an equispaced grid")
    return np.linspace(a, b, n)


def sample_equispaced_interior(a: float, b: float, n: int) -> np.ndarray:
    """n equispaced points strictly inside (a, b): a + (b-a) j/(n+1)."""
    if n < 1:
        raise ValueError("n must be >= 1")
    return a + (b - a) * np.arange(1, n + 1) / (n + 1)


def _van_der_corput(n: int, base: int = 2) -> np.ndarray:
    out = np.zeros(n)
    idx = np.arange(n)
    denom = 1.0
    while idx.any():
        denom *= base
        idx, rem = np.divmod(idx, base)
        out += rem / denom
    return out


def sample_hammersley(domain: np.ndarray, n: int) -> np.ndarray:
    """Low-discrepancy 2D point set: stratified first axis, van der
    Corput base-2 second axis.  Deterministic for a given n."""
    domain = np.atleast_2d(np.asarray(domain, dtype=float))
    if domain.shape[0] != 2:
        raise ValueError("hammersley sampling is for 2D domains")
    u = np.column_stack([(np.arange(n) + 0.5) / n, _van_der_corput(n)])
    return domain[:, 0] + (domain[:, 1] - domain[:, 0]) * u


def l2_relative_error(pred: np.ndarray, ref: np.ndarray) -> float:
    """||pred - ref||_2 / ||ref||_2 over the test grid (plain discrete norm)."""
    pred = np.asarray(pred, dtype=float).ravel()
    ref = np.asarray(ref, dtype=float).ravel()
    if pred.shape != ref.shape:
        raise ValueError(f"shape mismatch {pred.shape} vs {ref.shape}")
    denom = float(np.linalg.norm(ref))
    if denom == 0.0:
        raise ValueError("reference field has zero norm")
    return float(np.linalg.norm(pred - ref) / denom)


class TestGrid:
    """Dense evaluation grid with cached reference values.

    10,001 points for 1D problems, 201 x 201 for (x, t) problems; the
    grid is independent of training seeds.
    """

    __test__ = False  # not a pytest class, despite the name

    def __init__(self, spec: ProblemSpec, cache_dir=None):
        self.spec = spec
        d = spec.dim
        if d == 1:
            a, b = spec.domain[0]
            self.axes = (np.linspace(a, b, GRID_1D),)
            self.points = self.axes[0].reshape(-1, 1)
        elif d == 2:
            (a, b), (c, e) = spec.domain
            self.axes = (np.linspace(a, b, GRID_2D), np.linspace(c, e, GRID_2D))
            X, T = np.meshgrid(*self.axes, indexing="ij")
            self.points = np.column_stack([X.ravel(), T.ravel()])
        else:  # pragma: no cover
            raise ValueError("test grids cover 1D and 2D problems")

        if spec.has_closed_form or spec.name == "react-rate-inv":
            if spec.name == "react-rate-inv":
                self.u_ref = reference.reaction_rate_u(self.points[:, 0])
                self.du_ref = (reference.reaction_rate_du(self.points[:, 0]),)
                self.k_ref = spec.exact(self.points)
            else:
                self.u_ref = spec.exact(self.points)
                self.du_ref = tuple(dfn(self.points) for dfn in spec.exact_derivative)
        else:
            field = reference_solution(spec.name, self.axes, cache_dir=cache_dir)
            self.u_ref = field.ravel()
            # derivative reference by central differences of the field
            dx = self.axes[0][1] - self.axes[0][0]
            dt = self.axes[1][1] - self.axes[1][0]
            self.du_ref = (
                np.gradient(field, dx, axis=0).ravel(),
                np.gradient(field, dt, axis=1).ravel(),
            )


def mean_abs_residual(spec: ProblemSpec, model, points: np.ndarray) -> float:
    """Mean |f| over the given points for any bound model (network or
    closed form)."""
    from .autodiff import Graph
    from .problems import residual

    points = np.atleast_2d(np.asarray(points, dtype=float))
    if points.shape[0] == 0:
        raise ValueError("empty point set")
    g = model.graph
    pt = [g.input(c) for c in spec.domain.mean(axis=1)]
    f = residual(spec, model, pt)
    prog = Program([f], variables=model.theta, batch_variables=pt)
    vals = prog.run(model.theta0 if model.theta else None, points.T)[0]
    return float(np.mean(np.abs(vals)))


def derivative_error(spec: ProblemSpec, model, grid: "TestGrid", axis: int) -> float:
    """L2 relative error of du/dx_axis against the grid's reference."""
    from .autodiff import grad as _grad

    if axis >= len(grid.du_ref):
        raise ValueError(f"no reference derivative for axis {axis}")
    g = model.graph
    pt = [g.input(c) for c in spec.domain.mean(axis=1)]
    u = model.u(pt)
    du = _grad(u, [pt[axis]])[0]
    prog = Program([du], variables=model.theta, batch_variables=pt)
    vals = prog.run(model.theta0 if model.theta else None, grid.points.T)[0]
    return l2_relative_error(vals, grid.du_ref[axis])


class ModelEvaluator:
    """Compiled programs for u, its derivatives, the residual and any
    auxiliary fields of one trained model, reusable across snapshots."""

    def __init__(self, assembly: LossAssembly):
        self.assembly = assembly
        spec = assembly.spec
        model = assembly.model
        pt = assembly.point
        u = assembly.u_node
        du = grad(u, pt)
        f = assembly.f_node
        outs = [u, *du, f]
        self._extra = [name for name in spec.fields if name != "u"]
        for name in self._extra:
            outs.append(assembly.field_nodes[name])
        self._prog = Program(outs, variables=model.theta, batch_variables=pt)
        self._dim = spec.dim

    def evaluate(self, theta: np.ndarray, points: np.ndarray) -> dict[str, np.ndarray]:
        res = self._prog.run(theta, np.atleast_2d(points).T)
        out = {"u": res[0], "f": res[1 + self._dim]}
        for ax in range(self._dim):
            out[f"du_{self.assembly.spec.axes[ax]}"] = res[1 + ax]
        for j, name in enumerate(self._extra):
            out[name] = res[2 + self._dim + j]
        return out

    def u_error(self, theta: np.ndarray, grid: TestGrid) -> float:
        return l2_relative_error(self.evaluate(theta, grid.points)["u"], grid.u_ref)

    def derivative_error(self, theta: np.ndarray, grid: TestGrid, axis: int) -> float:
        ref = grid.du_ref[axis]
        name = f"du_{self.assembly.spec.axes[axis]}"
        return l2_relative_error(self.evaluate(theta, grid.points)[name], ref)

    def mean_abs_residual(self, theta: np.ndarray, points: np.ndarray) -> float:
        points = np.atleast_2d(points)
        if points.shape[0] == 0:
            raise ValueError("empty point set")
        return float(np.mean(np.abs(self.evaluate(theta, points)["f"])))

    def field_error(self, theta: np.ndarray, grid: TestGrid, name: str) -> float:
        """L2 relative error of an auxiliary field (the rate field k)."""
        ref = getattr(grid, f"{name}_ref")
        return l2_relative_error(self.evaluate(theta, grid.points)[name], ref)

    def metrics(self, theta: np.ndarray, grid: TestGrid) -> dict:
        """All grid metrics from a single program evaluation."""
        vals = self.evaluate(theta, grid.points)
        spec = self.assembly.spec
        out = {
            "u_error": l2_relative_error(vals["u"], grid.u_ref),
            "derivative_errors": tuple(
                l2_relative_error(vals[f"du_{spec.axes[ax]}"], grid.du_ref[ax])
                for ax in range(self._dim)
            ),
            "mean_abs_residual": float(np.mean(np.abs(vals["f"]))),
            "field_errors": {
                name: l2_relative_error(vals[name], getattr(grid, f"{name}_ref"))
                for name in self._extra
            },
        }
        return out
