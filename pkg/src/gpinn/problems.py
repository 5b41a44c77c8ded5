"""The benchmark problems: geometry, residual operators, closed-form
references, boundary terms, inverse-parameter descriptors and
observation sets.

Every residual is built as a differentiable graph expression, so the
same code path yields the residual, its coordinate gradients (via
``residual_gradient``) and all parameter gradients.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import autodiff as ad
from . import reference
from .autodiff import Graph, Node, grad
from .network import MlpParams, apply_ansatz, forward, param_leaves

__all__ = [
    "ProblemSpec",
    "InverseParam",
    "BoundarySegment",
    "Model",
    "PROBLEMS",
    "get_problem",
    "point_nodes",
    "bind_model",
    "exact_model",
    "residual",
    "residual_gradient",
    "exact_solution",
    "reference_solution",
    "observations",
]


@dataclass(frozen=True)
class InverseParam:
    """An unknown scalar PDE parameter learned jointly with the solution.

    Positivity-flagged parameters are optimized in log-space, so any
    optimizer update keeps them strictly positive.
    """

    name: str
    true_value: float
    positive: bool = True
    init_value: float = 1e-2


@dataclass(frozen=True)
class BoundarySegment:
    """One boundary/initial segment of a soft-constrained problem."""

    name: str
    sample: Callable[[int], np.ndarray]  # n -> (n, d) equispaced points
    target_expr: Callable[[list[Node]], Node]  # prescribed value at a point
    target: Callable[[np.ndarray], np.ndarray]  # vectorized numpy version


@dataclass(frozen=True)
class ProblemSpec:
    name: str
    domain: np.ndarray  # (d, 2) bounds
    ansatz: str
    residual_builder: Callable  # (fields, params, point) -> Node
    fields: tuple[str, ...] = ("u",)
    axes: tuple[str, ...] = ("x",)
    has_closed_form: bool = False
    exact: Callable[[np.ndarray], np.ndarray] | None = None  # u (or k) values
    exact_expr: Callable[[list[Node]], Node] | None = None
    exact_derivative: tuple[Callable[[np.ndarray], np.ndarray], ...] = ()
    u0_expr: Callable[[Node], Node] | None = None  # initial profile for ansatz
    boundary_segments: tuple[BoundarySegment, ...] = ()
    inverse_params: tuple[InverseParam, ...] = ()
    is_inverse: bool = False
    n_obs_default: int = 0
    obs_noise_default: float = 0.0
    constants: dict = field(default_factory=dict)

    @property
    def dim(self) -> int:
        return self.domain.shape[0]

    def contains(self, point) -> bool:
        p = np.asarray(point, dtype=float)
        return bool(
            np.all(p >= self.domain[:, 0] - 1e-12)
            and np.all(p <= self.domain[:, 1] + 1e-12)
        )


class Model:
    """Trainable fields and inverse parameters bound to one Graph.

    ``fields`` maps a field name to a builder taking coordinate Nodes and
    returning the (ansatz-transformed) field value Node.  ``theta`` lists
    every trainable leaf in canonical order: u-network flat parameters,
    then auxiliary networks in spec order, then inverse parameters
    (log-values where positivity-flagged).
    """

    def __init__(self, graph, fields, params, theta, theta0, mlps, infer):
        self.graph = graph
        self.fields = fields
        self.params = params
        self.theta = theta
        self.theta0 = theta0
        self.mlps = mlps
        self.infer = infer

    def u(self, point: list[Node]) -> Node:
        return self.fields["u"](point)

    def split_theta(self, theta: np.ndarray) -> dict:
        """Break a flat vector back into per-network params and the
        natural-scale inverse parameter values."""
        out = {}
        k = 0
        for name in self.mlps:
            n = self.mlps[name].n_params
            out[name] = self.mlps[name].with_flat(theta[k : k + n])
            k += n
        for ip in self.infer:
            v = theta[k]
            out[ip.name] = float(np.exp(v)) if ip.positive else float(v)
            k += 1
        return out


def point_nodes(g: Graph, coords) -> list[Node]:
    """Register a coordinate point as differentiable input leaves."""
    return [g.input(c) for c in np.atleast_1d(np.asarray(coords, dtype=float))]


def bind_model(
    spec: ProblemSpec,
    g: Graph,
    mlps: dict[str, MlpParams],
    infer: Sequence[str] = (),
) -> Model:
    """Register networks and inverse parameters as graph leaves."""
    for name in spec.fields:
        if name not in mlps:
            raise ValueError(f"problem {spec.name} needs a network for field {name!r}")
    theta: list[Node] = []
    theta0: list[float] = []
    fields = {}
    for name in spec.fields:
        leaves = param_leaves(mlps[name], g)
        theta.extend(leaves)
        theta0.extend(mlps[name].flat.tolist())
        ansatz = spec.ansatz if name == "u" else "identity"

        def make(nm, lv, an):
            cache: dict[tuple[int, ...], Node] = {}

            def build(point: list[Node]) -> Node:
                key = tuple(n.i for n in point)
                hit = cache.get(key)
                if hit is not None:
                    return hit
                raw = forward(mlps[nm], g, point, leaves=lv)
                out = apply_ansatz(an, raw, point, u0=spec.u0_expr)
                cache[key] = out
                return out

            return build

        fields[name] = make(name, leaves, ansatz)

    by_name = {ip.name: ip for ip in spec.inverse_params}
    infer_descr = []
    params: dict[str, Node] = {}
    for nm in infer:
        if nm not in by_name:
            raise ValueError(f"problem {spec.name} has no inverse parameter {nm!r}")
        ip = by_name[nm]
        raw0 = math.log(ip.init_value) if ip.positive else ip.init_value
        leaf = g.input(raw0)
        theta.append(leaf)
        theta0.append(raw0)
        params[nm] = ad.exp(leaf) if ip.positive else leaf
        infer_descr.append(ip)
    for ip in spec.inverse_params:
        if ip.name not in params:
            params[ip.name] = g.constant(ip.true_value)
    return Model(g, fields, params, theta, np.array(theta0), dict(mlps), tuple(infer_descr))


def exact_model(spec: ProblemSpec, g: Graph) -> Model:
    """The closed-form solution as a differentiable expression with true
    parameters; lets tests substitute the reference for the network."""
    if not spec.has_closed_form or spec.exact_expr is None:
        raise ValueError(f"problem {spec.name} has no closed-form solution")
    cache: dict[tuple[int, ...], Node] = {}

    def u_exact(point):
        key = tuple(n.i for n in point)
        if key not in cache:
            cache[key] = spec.exact_expr(point)
        return cache[key]

    fields = {"u": u_exact}
    params = {ip.name: g.constant(ip.true_value) for ip in spec.inverse_params}
    return Model(g, fields, params, [], np.empty(0), {}, ())


def residual(spec: ProblemSpec, model: Model, point: list[Node]) -> Node:
    """The PDE residual f at one point, as a differentiable Node.

    Point entries must be input leaves of the model's graph (so the
    residual can be differentiated w.r.t. them).
    """
    if len(point) != spec.dim:
        raise ValueError(f"{spec.name} expects {spec.dim} coordinates")
    coords = [p.value for p in point]
    if not spec.contains(coords):
        raise ValueError(f"point {coords} outside domain of {spec.name}")
    for name in spec.fields:
        if name not in model.fields:
            raise ValueError(f"model lacks field {name!r}")
    return spec.residual_builder(model.fields, model.params, point)


def residual_gradient(spec: ProblemSpec, model: Model, point: list[Node], axis: int) -> Node:
    """d f / d x_axis via AD differentiation of the residual."""
    if not 0 <= axis < spec.dim:
        raise ValueError(f"axis {axis} out of range for {spec.name}")
    f = residual(spec, model, point)
    return grad(f, [point[axis]])[0]


def exact_solution(spec: ProblemSpec, point) -> float:
    """Closed-form reference value (u; the rate field k for react-rate-inv)."""
    if spec.exact is None:
        raise ValueError(
            f"{spec.name} has no closed-form solution; use reference_solution"
        )
    p = np.atleast_1d(np.asarray(point, dtype=float))
    if not spec.contains(p):
        raise ValueError(f"point {p} outside domain of {spec.name}")
    return float(spec.exact(p.reshape(1, -1))[0])


def reference_solution(name: str, grid, cache_dir=None) -> np.ndarray:
    """High-accuracy reference field for the problems without closed forms.

    grid: (x_values, t_values); returns values with shape (len(x), len(t)).
    """
    x, t = (np.asarray(a, dtype=float) for a in grid)
    if x.min() < -1 - 1e-12 or x.max() > 1 + 1e-12 or t.min() < -1e-12 or t.max() > 1 + 1e-12:
        raise ValueError("grid must lie within [-1,1] x [0,1]")
    if name == "burgers":
        return reference.burgers_solution(x, t)
    if name == "allen-cahn":
        return reference.allen_cahn_solution(x, t, cache_dir=cache_dir)
    raise ValueError(f"no tabulated reference for {name!r}")


def observations(spec: ProblemSpec, seed: int, n: int | None = None, noise_std: float | None = None):
    """Sensor locations and (optionally noisy) measured values of u.

    Sensors sit at equispaced interior points x_j = a + (b-a) j/(n+1);
    values are the reference solution there plus Gaussian noise of the
    configured standard deviation.  Deterministic given the seed.
    """
    if not spec.is_inverse:
        raise ValueError(f"{spec.name} is a forward problem; no observations")
    n = spec.n_obs_default if n is None else int(n)
    noise_std = spec.obs_noise_default if noise_std is None else float(noise_std)
    a, b = spec.domain[0]
    pts = (a + (b - a) * np.arange(1, n + 1) / (n + 1)).reshape(-1, 1)
    if spec.name == "brinkman":
        vals = spec.exact(pts)
    elif spec.name == "react-rate-inv":
        vals = reference.reaction_rate_u(pts[:, 0])
    else:  # pragma: no cover
        raise ValueError(f"no observation generator for {spec.name}")
    if noise_std > 0:
        rng = np.random.default_rng(seed)
        vals = vals + rng.normal(0.0, noise_std, size=vals.shape)
    return pts, vals


# ---------------------------------------------------------------------------
# Problem definitions
# ---------------------------------------------------------------------------


def _equispaced(a, b, n):
    return np.linspace(a, b, n)


# -- function approximation -------------------------------------------------

def _fa_exact(p):
    x = p[:, 0]
    return -(1.4 - 3.0 * x) * np.sin(18.0 * x)


def _fa_dexact(p):
    x = p[:, 0]
    return 3.0 * np.sin(18.0 * x) - 18.0 * (1.4 - 3.0 * x) * np.cos(18.0 * x)


def _fa_exact_expr(point):
    x = point[0]
    return -(1.4 - 3.0 * x) * ad.sin(18.0 * x)


def _fa_residual(fields, params, point):
    # data misfit treated through the residual path; its coordinate
    # gradient is then the gradient-enhanced data term
    return fields["u"](point) - _fa_exact_expr(point)


FUNC_APPROX = ProblemSpec(
    name="func-approx",
    domain=np.array([[0.0, 1.0]]),
    ansatz="identity",
    residual_builder=_fa_residual,
    axes=("x",),
    has_closed_form=True,
    exact=_fa_exact,
    exact_expr=_fa_exact_expr,
    exact_derivative=(_fa_dexact,),
)


# -- 1D Poisson ---------------------------------------------------------------

def _poisson_source_expr(x: Node) -> Node:
    terms = [float(i) * ad.sin(float(i) * x) for i in range(1, 5)]
    return ad.pairwise_sum(terms) + 8.0 * ad.sin(8.0 * x)


def _poisson_residual(fields, params, point):
    x = point[0]
    u = fields["u"](point)
    ux = grad(u, [x])[0]
    uxx = grad(ux, [x])[0]
    return -uxx - _poisson_source_expr(x)


def _poisson_exact(p):
    x = p[:, 0]
    return x + sum(np.sin(i * x) / i for i in range(1, 5)) + np.sin(8 * x) / 8.0


def _poisson_dexact(p):
    x = p[:, 0]
    return 1.0 + sum(np.cos(i * x) for i in range(1, 5)) + np.cos(8 * x)


def _poisson_exact_expr(point):
    x = point[0]
    terms = [ad.sin(float(i) * x) / float(i) for i in range(1, 5)]
    return x + ad.pairwise_sum(terms) + ad.sin(8.0 * x) / 8.0


POISSON_1D = ProblemSpec(
    name="poisson-1d",
    domain=np.array([[0.0, math.pi]]),
    ansatz="dirichlet-1d-poisson",
    residual_builder=_poisson_residual,
    axes=("x",),
    has_closed_form=True,
    exact=_poisson_exact,
    exact_expr=_poisson_exact_expr,
    exact_derivative=(_poisson_dexact,),
)


# -- diffusion-reaction (forward) --------------------------------------------

def _dr_u0_expr(x: Node) -> Node:
    terms = [ad.sin(float(i) * x) / float(i) for i in range(1, 5)]
    return ad.pairwise_sum(terms) + ad.sin(8.0 * x) / 8.0


def _dr_source_expr(x: Node, t: Node) -> Node:
    coeffs = [(2, 3.0 / 2.0), (3, 8.0 / 3.0), (4, 15.0 / 4.0), (8, 63.0 / 8.0)]
    s = ad.pairwise_sum([c * ad.sin(float(i) * x) for i, c in coeffs])
    return ad.exp(-t) * s


def _dr_residual(fields, params, point):
    x, t = point
    u = fields["u"](point)
    ux, ut = grad(u, [x, t])
    uxx = grad(ux, [x])[0]
    return ut - uxx - _dr_source_expr(x, t)


def _dr_exact(p):
    x, t = p[:, 0], p[:, 1]
    prof = sum(np.sin(i * x) / i for i in range(1, 5)) + np.sin(8 * x) / 8.0
    return np.exp(-t) * prof


def _dr_dexact_x(p):
    x, t = p[:, 0], p[:, 1]
    return np.exp(-t) * (sum(np.cos(i * x) for i in range(1, 5)) + np.cos(8 * x))


def _dr_dexact_t(p):
    return -_dr_exact(p)


def _dr_exact_expr(point):
    x, t = point
    return ad.exp(-t) * _dr_u0_expr(x)


DIFF_REACT = ProblemSpec(
    name="diff-react-fwd",
    domain=np.array([[-math.pi, math.pi], [0.0, 1.0]]),
    ansatz="diff-react",
    residual_builder=_dr_residual,
    axes=("x", "t"),
    has_closed_form=True,
    exact=_dr_exact,
    exact_expr=_dr_exact_expr,
    exact_derivative=(_dr_dexact_x, _dr_dexact_t),
    u0_expr=_dr_u0_expr,
)


# -- Brinkman-Forchheimer (inverse) -------------------------------------------

_BF = dict(g=1.0, nu=1e-3, eps=0.4, H=1.0)
_BF_TRUE_NU_E = 1e-3
_BF_TRUE_K = 1e-3


def _bf_r(nu_e=_BF_TRUE_NU_E, K=_BF_TRUE_K):
    return math.sqrt(_BF["nu"] * _BF["eps"] / (nu_e * K))


def _bf_exact(p):
    x = p[:, 0]
    r = _bf_r()
    gk = _BF["g"] * _BF_TRUE_K / _BF["nu"]
    return gk * (1.0 - np.cosh(r * (x - _BF["H"] / 2)) / np.cosh(r * _BF["H"] / 2))


def _bf_dexact(p):
    x = p[:, 0]
    r = _bf_r()
    gk = _BF["g"] * _BF_TRUE_K / _BF["nu"]
    return -gk * r * np.sinh(r * (x - _BF["H"] / 2)) / np.cosh(r * _BF["H"] / 2)


def _bf_exact_expr(point):
    x = point[0]
    r = _bf_r()
    gk = _BF["g"] * _BF_TRUE_K / _BF["nu"]
    return gk * (1.0 - ad.cosh(r * (x - _BF["H"] / 2)) / math.cosh(r * _BF["H"] / 2))


def _bf_residual(fields, params, point):
    x = point[0]
    u = fields["u"](point)
    ux = grad(u, [x])[0]
    uxx = grad(ux, [x])[0]
    return -(params["nu_e"] / _BF["eps"]) * uxx + _BF["nu"] * u / params["K"] - _BF["g"]


def _bf_segments():
    H = _BF["H"]

    def mk(x0):
        return BoundarySegment(
            name=f"x={x0:g}",
            sample=lambda n, x0=x0: np.full((n, 1), x0),
            target_expr=lambda point: point[0].g.constant(0.0),
            target=lambda pts: np.zeros(len(pts)),
        )

    return (mk(0.0), mk(H))


BRINKMAN = ProblemSpec(
    name="brinkman",
    domain=np.array([[0.0, _BF["H"]]]),
    ansatz="none-soft-bc",
    residual_builder=_bf_residual,
    axes=("x",),
    has_closed_form=True,
    exact=_bf_exact,
    exact_expr=_bf_exact_expr,
    exact_derivative=(_bf_dexact,),
    boundary_segments=_bf_segments(),
    inverse_params=(
        InverseParam("nu_e", _BF_TRUE_NU_E, positive=True, init_value=1e-2),
        InverseParam("K", _BF_TRUE_K, positive=True, init_value=1e-2),
    ),
    is_inverse=True,
    n_obs_default=5,
    constants=dict(_BF),
)


# -- space-dependent reaction rate (inverse) ----------------------------------

_RR_LAMBDA = 0.01


def _rr_k_exact(p):
    x = p[:, 0]
    return 0.1 + np.exp(-0.5 * (x - 0.5) ** 2 / 0.15**2)


def _rr_residual(fields, params, point):
    x = point[0]
    u = fields["u"](point)
    k = fields["k"](point)
    ux = grad(u, [x])[0]
    uxx = grad(ux, [x])[0]
    return _RR_LAMBDA * uxx - k * u - ad.sin(2.0 * math.pi * x)


def _rr_segments():
    def mk(x0):
        return BoundarySegment(
            name=f"x={x0:g}",
            sample=lambda n, x0=x0: np.full((n, 1), x0),
            target_expr=lambda point: point[0].g.constant(0.0),
            target=lambda pts: np.zeros(len(pts)),
        )

    return (mk(0.0), mk(1.0))


REACT_RATE = ProblemSpec(
    name="react-rate-inv",
    domain=np.array([[0.0, 1.0]]),
    ansatz="none-soft-bc",
    residual_builder=_rr_residual,
    fields=("u", "k"),
    axes=("x",),
    has_closed_form=False,
    exact=_rr_k_exact,  # scoring reference for the rate field
    boundary_segments=_rr_segments(),
    is_inverse=True,  # the unknown k(x) lives in a second network
    n_obs_default=8,
    constants={"lambda": _RR_LAMBDA},
)


# -- Burgers ------------------------------------------------------------------

_BURGERS_NU = 0.01 / math.pi


def _burgers_residual(fields, params, point):
    x, t = point
    u = fields["u"](point)
    ux, ut = grad(u, [x, t])
    uxx = grad(ux, [x])[0]
    return ut + u * ux - _BURGERS_NU * uxx


def _burgers_segments():
    def side(x0):
        return BoundarySegment(
            name=f"x={x0:g}",
            sample=lambda n, x0=x0: np.column_stack([np.full(n, x0), _equispaced(0, 1, n)]),
            target_expr=lambda point: point[0].g.constant(0.0),
            target=lambda pts: np.zeros(len(pts)),
        )

    init = BoundarySegment(
        name="t=0",
        sample=lambda n: np.column_stack([_equispaced(-1, 1, n), np.zeros(n)]),
        target_expr=lambda point: -ad.sin(math.pi * point[0]),
        target=lambda pts: -np.sin(math.pi * pts[:, 0]),
    )
    return (side(-1.0), side(1.0), init)


BURGERS = ProblemSpec(
    name="burgers",
    domain=np.array([[-1.0, 1.0], [0.0, 1.0]]),
    ansatz="none-soft-bc",
    residual_builder=_burgers_residual,
    axes=("x", "t"),
    boundary_segments=_burgers_segments(),
    constants={"nu": _BURGERS_NU},
)


# -- Allen-Cahn ----------------------------------------------------------------

_AC_D = 0.001


def _ac_residual(fields, params, point):
    x, t = point
    u = fields["u"](point)
    ux, ut = grad(u, [x, t])
    uxx = grad(ux, [x])[0]
    return ut - _AC_D * uxx - 5.0 * (u - u**3)


def _ac_segments():
    def side(x0):
        return BoundarySegment(
            name=f"x={x0:g}",
            sample=lambda n, x0=x0: np.column_stack([np.full(n, x0), _equispaced(0, 1, n)]),
            target_expr=lambda point: point[0].g.constant(-1.0),
            target=lambda pts: np.full(len(pts), -1.0),
        )

    init = BoundarySegment(
        name="t=0",
        sample=lambda n: np.column_stack([_equispaced(-1, 1, n), np.zeros(n)]),
        target_expr=lambda point: point[0] * point[0] * ad.cos(math.pi * point[0]),
        target=lambda pts: pts[:, 0] ** 2 * np.cos(math.pi * pts[:, 0]),
    )
    return (side(-1.0), side(1.0), init)


ALLEN_CAHN = ProblemSpec(
    name="allen-cahn",
    domain=np.array([[-1.0, 1.0], [0.0, 1.0]]),
    ansatz="none-soft-bc",
    residual_builder=_ac_residual,
    axes=("x", "t"),
    boundary_segments=_ac_segments(),
    constants={"D": _AC_D},
)


PROBLEMS = {
    p.name: p
    for p in (FUNC_APPROX, POISSON_1D, DIFF_REACT, BRINKMAN, REACT_RATE, BURGERS, ALLEN_CAHN)
}


def get_problem(name: str) -> ProblemSpec:
    if name not in PROBLEMS:
        raise KeyError(f"unknown problem {name!r}; available: {sorted(PROBLEMS)}")
    return PROBLEMS[name]
