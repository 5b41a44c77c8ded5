import math

import numpy as np
import pytest

from gpinn.autodiff import Graph, grad
from gpinn.loss import (
    LossAssembly,
    LossWeights,
    PointSets,
    build_point_sets,
    loss_b,
    loss_data,
    loss_f,
    loss_g,
    pairwise_mean_array,
    total_loss,
)
from gpinn.network import init_mlp
from gpinn.problems import Model, bind_model, exact_model, get_problem, observations


def _zero_model(g, dims):
    if dims == 1:
        return Model(g, {"u": lambda pt: 0.0 * pt[0]}, {}, [], np.empty(0), {}, ())
    return Model(g, {"u": lambda pt: 0.0 * pt[0] * pt[1]}, {}, [], np.empty(0), {}, ())


def test_loss_f_exact_solution_is_zero():
    spec = get_problem("poisson-1d")
    g = Graph()
    m = exact_model(spec, g)
    pts = np.linspace(0.3, 2.8, 7).reshape(-1, 1)
    assert loss_f(spec, m, pts).value < 1e-16


def test_loss_f_brinkman_zero_field():
    spec = get_problem("brinkman")
    g = Graph()
    params = {ip.name: g.constant(ip.true_value) for ip in spec.inverse_params}
    m = Model(g, {"u": lambda pt: 0.0 * pt[0]}, params, [], np.empty(0), {}, ())
    pts = np.linspace(0.1, 0.9, 9).reshape(-1, 1)
    assert loss_f(spec, m, pts).value == pytest.approx(1.0, abs=1e-15)


def test_loss_f_single_point():
    spec = get_problem("brinkman")
    g = Graph()
    params = {ip.name: g.constant(ip.true_value) for ip in spec.inverse_params}
    m = Model(g, {"u": lambda pt: 0.0 * pt[0]}, params, [], np.empty(0), {}, ())
    assert loss_f(spec, m, np.array([[0.3]])).value == pytest.approx(1.0)
    with pytest.raises(ValueError):
        loss_f(spec, m, np.empty((0, 1)))


def test_loss_g_exact_solution():
    spec = get_problem("poisson-1d")
    g = Graph()
    m = exact_model(spec, g)
    pts = np.linspace(0.4, 2.7, 5).reshape(-1, 1)
    assert loss_g(spec, m, pts, 0).value < 1e-14


def test_loss_g_linear_surrogate_single_point():
    spec = get_problem("poisson-1d")
    g = Graph()
    m = Model(g, {"u": lambda pt: pt[0] + 0.0 * pt[0]}, {}, [], np.empty(0), {}, ())
    assert loss_g(spec, m, np.array([[0.0]]), 0).value == pytest.approx(8836.0, rel=1e-12)


def test_loss_g_constant_residual_field():
    spec = get_problem("brinkman")
    g = Graph()
    params = {ip.name: g.constant(ip.true_value) for ip in spec.inverse_params}
    m = Model(g, {"u": lambda pt: 0.0 * pt[0]}, params, [], np.empty(0), {}, ())
    assert loss_g(spec, m, np.linspace(0.2, 0.8, 5).reshape(-1, 1), 0).value == 0.0
    with pytest.raises(ValueError):
        loss_g(spec, m, np.array([[0.3]]), 1)


def test_loss_b_burgers_zero_field():
    spec = get_problem("burgers")
    g = Graph()
    m = _zero_model(g, 2)
    side = np.column_stack([np.full(5, -1.0), np.linspace(0, 1, 5)])
    side2 = np.column_stack([np.full(5, 1.0), np.linspace(0, 1, 5)])
    pts = np.vstack([side, side2])
    assert loss_b(spec, m, (pts, np.zeros(10))).value == 0.0
    # initial segment at x = 0.5: violation = sin^2(pi/2) = 1
    pt0 = np.array([[0.5, 0.0]])
    assert loss_b(spec, m, (pt0, np.array([-math.sin(math.pi * 0.5)]))).value == pytest.approx(1.0)


def test_loss_b_allen_cahn_constant_field():
    spec = get_problem("allen-cahn")
    g = Graph()
    m = Model(g, {"u": lambda pt: -1.0 + 0.0 * pt[0] * pt[1]}, {}, [], np.empty(0), {}, ())
    pts = np.column_stack([np.full(4, 1.0), np.linspace(0, 1, 4)])
    assert loss_b(spec, m, (pts, np.full(4, -1.0))).value == 0.0


def test_loss_b_rejects_hard_constraint_problem():
    spec = get_problem("poisson-1d")
    g = Graph()
    m = exact_model(spec, g)
    with pytest.raises(ValueError):
        loss_b(spec, m, (np.array([[0.0]]), np.array([0.0])))


def test_loss_data_examples():
    spec = get_problem("brinkman")
    g = Graph()
    m = exact_model(spec, g)
    pts, vals = observations(spec, seed=0)
    assert loss_data(m, (pts, vals)).value < 1e-28
    assert loss_data(m, (pts[:1], vals[:1] + 0.1)).value == pytest.approx(0.01, rel=1e-12)
    with pytest.raises(ValueError):
        loss_data(m, (np.empty((0, 1)), np.empty(0)))


def _small_model(spec, seed=0, width=6):
    g = Graph()
    mlp = init_mlp([spec.dim, width, width, 1], seed=seed)
    return bind_model(spec, g, {n: mlp for n in spec.fields})


def test_total_loss_pinn_reduction_bitwise():
    spec = get_problem("burgers")
    m = _small_model(spec)
    sets = build_point_sets(spec, 6, seed=1, n_boundary=4)
    w0 = LossWeights(w_g=(0.0, 0.0))
    manual = (
        loss_f(spec, m, sets.residual).value
        + loss_b(spec, m, sets.boundary).value
    )
    total = total_loss(spec, m, sets, w0).value
    assert total == manual  # bitwise: same nodes, same summation order


def test_total_loss_gpinn_composition_bitwise():
    spec = get_problem("poisson-1d")
    m = _small_model(spec)
    sets = build_point_sets(spec, 5, seed=2)
    w = LossWeights(w_g=(0.01,))
    lf = loss_f(spec, m, sets.residual).value
    lg = loss_g(spec, m, sets.gradient, 0).value
    assert total_loss(spec, m, sets, w).value == lf + 0.01 * lg


def test_total_loss_affine_in_weights():
    spec = get_problem("poisson-1d")
    m = _small_model(spec, seed=3)
    sets = build_point_sets(spec, 5, seed=2)
    base = total_loss(spec, m, sets, LossWeights(w_g=(0.0,))).value
    w1 = total_loss(spec, m, sets, LossWeights(w_g=(0.02,))).value
    w2 = total_loss(spec, m, sets, LossWeights(w_g=(0.04,))).value
    # doubling w_g doubles the gradient-loss contribution exactly
    assert (w2 - base) == pytest.approx(2.0 * (w1 - base), rel=1e-15)


def test_total_loss_rejects_negative_weights():
    spec = get_problem("poisson-1d")
    m = _small_model(spec)
    sets = build_point_sets(spec, 4, seed=0)
    with pytest.raises(ValueError):
        total_loss(spec, m, sets, LossWeights(w_f=-1.0, w_g=(0.0,)))


def test_loss_permutation_reassociation():
    spec = get_problem("poisson-1d")
    m = _small_model(spec, seed=4)
    pts = np.random.default_rng(0).uniform(0.1, 3.0, size=(16, 1))
    a = loss_f(spec, m, pts).value
    b = loss_f(spec, m, pts[::-1]).value
    assert a == pytest.approx(b, rel=1e-12)


def test_pairwise_mean_array_matches_node_order():
    g = Graph()
    vals = np.random.default_rng(1).uniform(0.1, 2.0, 13)
    from gpinn.autodiff import pairwise_sum

    node = pairwise_sum([g.constant(v) for v in vals]) / 13.0
    assert pairwise_mean_array(vals) == node.value


def test_assembly_matches_node_surface():
    for name, infer in (("poisson-1d", ()), ("burgers", ()), ("brinkman", ("nu_e",))):
        spec = get_problem(name)
        g = Graph()
        mlp = init_mlp([spec.dim, 6, 6, 1], seed=5)
        model = bind_model(spec, g, {n: mlp for n in spec.fields}, infer=infer)
        obs = observations(spec, seed=0) if spec.is_inverse else None
        sets = build_point_sets(spec, 5, seed=3, n_boundary=3, observations=obs)
        w = LossWeights(w_g=(0.05,) * spec.dim)
        assembly = LossAssembly(spec, model, sets, w)
        total, gvec, comps = assembly(model.theta0)
        node_total = total_loss(spec, model, sets, w).value
        assert total == pytest.approx(node_total, rel=1e-12)


def test_assembly_parameter_gradient_matches_fd():
    spec = get_problem("poisson-1d")
    g = Graph()
    mlp = init_mlp([1, 5, 5, 1], seed=6)
    model = bind_model(spec, g, {"u": mlp})
    sets = build_point_sets(spec, 4, seed=1)
    assembly = LossAssembly(spec, model, sets, LossWeights(w_g=(0.01,)))
    theta = model.theta0.copy()
    _, gvec, _ = assembly(theta)
    rng = np.random.default_rng(2)
    h = 1e-6
    for k in rng.choice(len(theta), size=20, replace=False):
        tp, tm = theta.copy(), theta.copy()
        tp[k] += h
        tm[k] -= h
        fd = (assembly(tp)[0] - assembly(tm)[0]) / (2 * h)
        assert gvec[k] == pytest.approx(fd, rel=1e-4, abs=1e-9)


def test_assembly_inverse_parameter_gradient_matches_fd():
    spec = get_problem("brinkman")
    g = Graph()
    mlp = init_mlp([1, 6, 6, 1], seed=7)
    model = bind_model(spec, g, {"u": mlp}, infer=("nu_e",))
    sets = build_point_sets(spec, 6, seed=2, observations=observations(spec, seed=0))
    assembly = LossAssembly(spec, model, sets, LossWeights(w_g=(0.1,)))
    theta = model.theta0.copy()
    theta[-1] = math.log(3e-3)  # a random checkpoint for the log-viscosity
    _, gvec, _ = assembly(theta)
    h = 1e-6
    tp, tm = theta.copy(), theta.copy()
    tp[-1] += h
    tm[-1] -= h
    fd = (assembly(tp)[0] - assembly(tm)[0]) / (2 * h)
    assert gvec[-1] == pytest.approx(fd, rel=1e-4)


def test_point_sets_within_domain_and_alias():
    spec = get_problem("burgers")
    sets = build_point_sets(spec, 50, seed=0, n_boundary=8)
    assert sets.gradient is sets.residual  # T_g = T_f
    assert np.all(sets.residual[:, 0] >= -1) and np.all(sets.residual[:, 0] <= 1)
    assert np.all(sets.residual[:, 1] >= 0) and np.all(sets.residual[:, 1] <= 1)
    pts, targets = sets.boundary
    assert len(pts) == 24  # three segments, 8 each
    assert np.all(np.isfinite(targets))
