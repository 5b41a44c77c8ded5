"""Composite loss assembly: residual, residual-gradient, boundary and
data terms over their point sets.

Two equivalent surfaces are provided.  The Node-building functions
(``loss_f`` .. ``total_loss``) construct the loss as one differentiable
graph expression with the training points baked in; they define the
reference semantics (pairwise summation order, weight algebra).  The
``LossAssembly`` compiles the same terms once, at a symbolic point, and
re-evaluates value + parameter gradient for new parameter vectors every
iteration; the test suite checks the two paths agree.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Node, grad, pairwise_sum
from .compiled import Program
from .problems import Model, ProblemSpec, residual

__all__ = [
    "LossWeights",
    "PointSets",
    "build_point_sets",
    "loss_f",
    "loss_g",
    "loss_b",
    "loss_data",
    "total_loss",
    "LossAssembly",
    "pairwise_mean_array",
]


@dataclass(frozen=True)
class LossWeights:
    """Term weights; w_g has one entry per input axis."""

    w_f: float = 1.0
    w_b: float = 1.0
    w_i: float = 1.0
    w_g: tuple[float, ...] = ()

    def validated(self, dim: int) -> "LossWeights":
        w_g = tuple(self.w_g) if self.w_g else (0.0,) * dim
        if len(w_g) != dim:
            raise ValueError(f"w_g needs {dim} entries, got {len(w_g)}")
        if self.w_f < 0 or self.w_b < 0 or self.w_i < 0 or any(w < 0 for w in w_g):
            raise ValueError("loss weights must be >= 0")
        return LossWeights(self.w_f, self.w_b, self.w_i, w_g)


@dataclass
class PointSets:
    """Training point sets; the gradient-loss set is aliased to the
    residual set (T_g = T_f)."""

    residual: np.ndarray  # (n_f, d)
    boundary: tuple[np.ndarray, np.ndarray] | None = None  # points, targets
    data: tuple[np.ndarray, np.ndarray] | None = None  # points, observed u

    @property
    def gradient(self) -> np.ndarray:
        return self.residual


def build_point_sets(
    spec: ProblemSpec,
    n_residual: int,
    seed: int,
    n_boundary: int = 32,
    observations: tuple[np.ndarray, np.ndarray] | None = None,
    distribution: str = "auto",
) -> PointSets:
    """Sample the training sets for one run.

    distribution:
      auto            problem default: endpoint-inclusive equispaced data
                      points for func-approx, equispaced interior points
                      for 1D PDEs, a Hammersley set for 2D PDEs
      uniform-random  i.i.d. uniform, seed-dependent
      equispaced      1D lattice (interior for PDEs)
      hammersley      2D low-discrepancy set

    Boundary points are equispaced per segment, ``n_boundary`` each.
    """
    from .metrics import sample_equispaced_interior, sample_hammersley

    lo, hi = spec.domain[:, 0], spec.domain[:, 1]
    if distribution == "auto":
        if spec.name == "func-approx":
            distribution = "equispaced-data"
        elif spec.dim == 1:
            distribution = "equispaced"
        else:
            distribution = "hammersley"
    if distribution == "equispaced-data":
        pts = np.linspace(lo[0], hi[0], n_residual).reshape(-1, 1)
    elif distribution == "equispaced":
        if spec.dim != 1:
            raise ValueError("equispaced residual sampling is 1D only")
        pts = sample_equispaced_interior(lo[0], hi[0], n_residual).reshape(-1, 1)
    elif distribution == "hammersley":
        pts = sample_hammersley(spec.domain, n_residual)
    elif distribution == "uniform-random":
        rng = np.random.default_rng(seed)
        pts = rng.uniform(lo, hi, size=(n_residual, spec.dim))
    else:
        raise ValueError(f"unknown point distribution {distribution!r}")
    boundary = None
    if spec.boundary_segments:
        bp = []
        bt = []
        for seg in spec.boundary_segments:
            p = seg.sample(n_boundary)
            bp.append(p)
            bt.append(seg.target(p))
        boundary = (np.vstack(bp), np.concatenate(bt))
    return PointSets(residual=pts, boundary=boundary, data=observations)


def _mean(nodes: list[Node]) -> Node:
    return pairwise_sum(nodes) / float(len(nodes))


def pairwise_mean_array(v: np.ndarray) -> np.ndarray:
    """Mean over the last axis with the same pairwise association order
    as ``autodiff.pairwise_sum`` (left half first, recursive halving)."""
    v = np.asarray(v)

    def rec(a):
        n = a.shape[-1]
        if n == 1:
            return a[..., 0]
        mid = n // 2
        return rec(a[..., :mid]) + rec(a[..., mid:])

    return rec(v) / v.shape[-1]


def _residual_nodes(spec: ProblemSpec, model: Model, points: np.ndarray):
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    out = []
    for row in pts:
        pn = [model.graph.input(c) for c in row]
        out.append((pn, residual(spec, model, pn)))
    return out


def loss_f(spec: ProblemSpec, model: Model, T_f: np.ndarray) -> Node:
    """Mean squared PDE residual over the interior set."""
    pts = np.atleast_2d(np.asarray(T_f, dtype=float))
    if pts.shape[0] == 0:
        raise ValueError("empty residual point set")
    return _mean([f * f for _, f in _residual_nodes(spec, model, pts)])


def loss_g(spec: ProblemSpec, model: Model, T_f: np.ndarray, axis: int) -> Node:
    """Mean squared residual derivative along one axis, over T_g = T_f."""
    pts = np.atleast_2d(np.asarray(T_f, dtype=float))
    if pts.shape[0] == 0:
        raise ValueError("empty residual point set")
    if not 0 <= axis < spec.dim:
        raise ValueError(f"axis {axis} out of range")
    sq = []
    for pn, f in _residual_nodes(spec, model, pts):
        fg = grad(f, [pn[axis]])[0]
        sq.append(fg * fg)
    return _mean(sq)


def loss_b(spec: ProblemSpec, model: Model, T_b) -> Node:
    """Mean squared boundary/initial violation (soft-constraint problems)."""
    if not spec.boundary_segments:
        raise ValueError(
            f"{spec.name} enforces boundary conditions through its ansatz; "
            "there is no boundary loss"
        )
    pts, targets = T_b
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    if pts.shape[0] == 0:
        raise ValueError("empty boundary point set")
    sq = []
    for row, tv in zip(pts, np.asarray(targets, dtype=float)):
        pn = [model.graph.input(c) for c in row]
        b = model.u(pn) - float(tv)
        sq.append(b * b)
    return _mean(sq)


def loss_data(model: Model, T_i) -> Node:
    """Mean squared misfit against observed values of u."""
    pts, vals = T_i
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    if pts.shape[0] == 0:
        raise ValueError("empty observation set")
    sq = []
    for row, v in zip(pts, np.asarray(vals, dtype=float)):
        pn = [model.graph.input(c) for c in row]
        m = model.u(pn) - float(v)
        sq.append(m * m)
    return _mean(sq)


def total_loss(spec: ProblemSpec, model: Model, sets: PointSets, w: LossWeights) -> Node:
    """w_f L_f + w_b L_b + w_i L_i + sum_i w_gi L_gi.

    With all gradient weights zero this reduces exactly (same nodes, same
    summation order) to the plain composite loss, so PINN and gPINN share
    one code path.
    """
    w = w.validated(spec.dim)
    total = w.w_f * loss_f(spec, model, sets.residual)
    if sets.boundary is not None and spec.boundary_segments:
        total = total + w.w_b * loss_b(spec, model, sets.boundary)
    if sets.data is not None:
        total = total + w.w_i * loss_data(model, sets.data)
    for axis, wg in enumerate(w.w_g):
        if wg > 0.0:
            total = total + wg * loss_g(spec, model, sets.gradient, axis)
    return total


class LossAssembly:
    """Compiled value-and-gradient of the composite loss.

    One symbolic point per term; training points are batch data, the
    flattened trainable vector is the scalar-variable set.  Weights are
    baked into the per-point contribution so a single adjoint sweep per
    term yields the full parameter gradient.
    """

    def __init__(self, spec: ProblemSpec, model: Model, sets: PointSets, w: LossWeights):
        w = w.validated(spec.dim)
        self.spec = spec
        self.model = model
        self.sets = sets
        self.weights = w
        g = model.graph
        mid = spec.domain.mean(axis=1)

        # interior: residual and (optionally) its coordinate gradients
        self.point = [g.input(c) for c in mid]
        f = residual(spec, model, self.point)
        self.f_node = f
        self.u_node = model.u(self.point)
        self.field_nodes = {name: model.fields[name](self.point) for name in spec.fields}
        outputs = [f * f]
        self.grad_axes = [ax for ax, wg in enumerate(w.w_g) if wg > 0.0]
        contrib = w.w_f * (f * f)
        self.fg_nodes = {}
        for ax in self.grad_axes:
            fg = grad(f, [self.point[ax]])[0]
            self.fg_nodes[ax] = fg
            outputs.append(fg * fg)
            contrib = contrib + w.w_g[ax] * (fg * fg)
        dtheta = grad(contrib, model.theta) if model.theta else []
        self._interior = Program(outputs + dtheta, variables=model.theta, batch_variables=self.point)
        self._n_theta = len(model.theta)

        # boundary: one program over the union of segments; the prescribed
        # value rides along as an extra batch column
        self._boundary = None
        if sets.boundary is not None and spec.boundary_segments:
            bpoint = [g.input(c) for c in mid]
            u_b = model.u(bpoint)
            pts, targets = sets.boundary
            tvar = g.input(0.0)
            viol = u_b - tvar
            db = grad(w.w_b * (viol * viol), model.theta) if model.theta else []
            self._boundary = Program(
                [viol * viol] + db, variables=model.theta, batch_variables=bpoint + [tvar]
            )
            self._boundary_batch = np.vstack([pts.T, targets[None, :]])

        self._data = None
        if sets.data is not None:
            dpoint = [g.input(c) for c in mid]
            u_d = model.u(dpoint)
            ovar = g.input(0.0)
            mis = u_d - ovar
            dd = grad(w.w_i * (mis * mis), model.theta) if model.theta else []
            self._data = Program(
                [mis * mis] + dd, variables=model.theta, batch_variables=dpoint + [ovar]
            )
            opts, ovals = sets.data
            self._data_batch = np.vstack([opts.T, np.asarray(ovals, dtype=float)[None, :]])

    def __call__(self, theta: np.ndarray):
        """Returns (total, gradient, components dict of unweighted means)."""
        w = self.weights
        comps: dict[str, float] = {}
        res = self._interior.run(theta, self.sets.residual.T)
        k = 1 + len(self.grad_axes)
        comps["loss_f"] = float(pairwise_mean_array(res[0]))
        total = w.w_f * comps["loss_f"]
        for j, ax in enumerate(self.grad_axes):
            m = float(pairwise_mean_array(res[1 + j]))
            comps[f"loss_g{self.spec.axes[ax]}"] = m
            total += w.w_g[ax] * m
        gvec = pairwise_mean_array(res[k:]) if self._n_theta else np.empty(0)

        if self._boundary is not None:
            rb = self._boundary.run(theta, self._boundary_batch)
            comps["loss_b"] = float(pairwise_mean_array(rb[0]))
            total += w.w_b * comps["loss_b"]
            if self._n_theta:
                gvec = gvec + pairwise_mean_array(rb[1:])
        if self._data is not None:
            rd = self._data.run(theta, self._data_batch)
            comps["loss_i"] = float(pairwise_mean_array(rd[0]))
            total += w.w_i * comps["loss_i"]
            if self._n_theta:
                gvec = gvec + pairwise_mean_array(rd[1:])
        comps["loss_total"] = total
        return total, gvec, comps
