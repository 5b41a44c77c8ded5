"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with `pytest tests/test_acceptance.py -m acceptance -v`; the
terminal summary lists every criterion line. Every check states its
tolerance inline. Stochastic criteria use medians over fixed seed sets
(>= 5 seeds; 10 where the runtime allows).

Budgets: criteria 1-7 and 10 run their stated configurations
(criterion 5 uses the reduced 20000-iteration variant). Criteria 8
and 9, whose full configurations train for hours, default to reduced
iteration budgets that preserve the orderings under test, sized for a
single-core machine; `GPINN_FULL=1` switches them to the full published
budgets. The Burgers point counts (1900 = 1500 + 400) and the
Allen-Cahn point schedule (500 + 30 per round) are never reduced.
"""

import json
import math
import os
import time
from pathlib import Path

import numpy as np
import pytest

from gpinn import autodiff as ad
from gpinn.autodiff import Graph, check_grad, grad
from gpinn.cli import main as cli_main
from gpinn.config import parse_config_text, serialize_config
from gpinn.optimize import RarConfig, TrainConfig, rar_refine, train
from gpinn.problems import exact_model, get_problem, point_nodes, residual, residual_gradient

pytestmark = pytest.mark.acceptance

FULL = os.environ.get("GPINN_FULL", "") == "1"
_LINES: list[str] = []


def report(criterion: str, ok: bool, detail: str) -> None:
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {criterion}: {detail}"
    _LINES.append(line)
    print(line)
    assert ok, line


# ---------------------------------------------------------------------------
# 1. AD correctness (property-based), runtime < 10 s
# ---------------------------------------------------------------------------


def _random_expression(rng):
    """A random composition of registered primitives, kept numerically
    tame (scaled exp/cosh arguments, guarded denominators)."""

    def build(depth):
        r = rng.random()
        if depth == 0:
            return ("x",) if r < 0.7 else ("c", float(rng.uniform(-1.5, 1.5)))
        if r < 0.45:
            op = rng.choice(["add", "sub", "mul", "div"])
            return (op, build(depth - 1), build(depth - 1))
        op = rng.choice(["sin", "cos", "tanh", "exp", "cosh", "pow2", "pow3", "neg"])
        return (op, build(depth - 1))

    tree = build(int(rng.integers(1, 4)))

    def evaluate(node, x):
        kind = node[0]
        if kind == "x":
            return x
        if kind == "c":
            return x.g.constant(node[1])
        if kind in ("add", "sub", "mul", "div"):
            a = evaluate(node[1], x)
            b = evaluate(node[2], x)
            if kind == "add":
                return a + b
            if kind == "sub":
                return a - b
            if kind == "mul":
                return a * b
            return a / (2.0 + ad.tanh(b))  # denominator bounded away from 0
        a = evaluate(node[1], x)
        if kind == "sin":
            return ad.sin(a)
        if kind == "cos":
            return ad.cos(a)
        if kind == "tanh":
            return ad.tanh(a)
        if kind == "exp":
            return ad.exp(0.5 * ad.tanh(a))
        if kind == "cosh":
            return ad.cosh(0.5 * ad.tanh(a))
        if kind == "pow2":
            return a**2
        if kind == "pow3":
            return a**3
        return -a

    return lambda x: evaluate(tree, x)


def test_criterion_01_ad_correctness():
    t0 = time.time()
    thresholds = {1: 1e-7, 2: 1e-5, 3: 1e-4}
    worst = {1: 0.0, 2: 0.0, 3: 0.0}
    primitives = [
        lambda x: ad.sin(x),
        lambda x: ad.cos(x),
        lambda x: ad.exp(x),
        lambda x: ad.tanh(x),
        lambda x: ad.cosh(x),
        lambda x: x**2,
        lambda x: x**3,
        lambda x: x + ad.sin(x),
        lambda x: x - ad.cos(x),
        lambda x: x * ad.tanh(x),
        lambda x: x / (2.0 + ad.sin(x)),
        lambda x: -ad.exp(x),
    ]
    rng = np.random.default_rng(0)
    fns = primitives + [_random_expression(rng) for _ in range(50)]
    for i, fn in enumerate(fns):
        at = float(rng.uniform(0.3, 1.1))
        for order, tol in thresholds.items():
            rel = check_grad(fn, at, order)
            worst[order] = max(worst[order], rel)
            assert rel < tol, f"fn {i} order {order}: rel={rel:.3e} at x={at}"
    dt = time.time() - t0
    report(
        "1",
        dt < 10.0,
        f"AD vs finite differences, worst rel err per order "
        f"{worst[1]:.1e}/{worst[2]:.1e}/{worst[3]:.1e} "
        f"(thresholds 1e-7/1e-5/1e-4), runtime {dt:.1f}s < 10s",
    )


# ---------------------------------------------------------------------------
# 2. Residual of the exact solution, runtime < 10 s
# ---------------------------------------------------------------------------


def test_criterion_02_residual_of_exact_solution():
    t0 = time.time()
    worst_f, worst_g = 0.0, 0.0
    for name in ("poisson-1d", "diff-react-fwd", "brinkman"):
        spec = get_problem(name)
        g = Graph()
        m = exact_model(spec, g)
        rng = np.random.default_rng(1)
        for _ in range(200):
            c = rng.uniform(spec.domain[:, 0] + 1e-6, spec.domain[:, 1] - 1e-6)
            pt = point_nodes(g, c)
            worst_f = max(worst_f, abs(residual(spec, m, pt).value))
            for ax in range(spec.dim):
                worst_g = max(worst_g, abs(residual_gradient(spec, m, pt, ax).value))
    dt = time.time() - t0
    ok = worst_f < 1e-8 and worst_g < 1e-7 and dt < 10.0
    report(
        "2",
        ok,
        f"max|f|={worst_f:.2e} < 1e-8, max|df/dx|={worst_g:.2e} < 1e-7 "
        f"over 200 random points x 3 problems, runtime {dt:.1f}s < 10s",
    )


# ---------------------------------------------------------------------------
# 3. Function approximation (preset 3.1): NN vs gNN at 15 points
# ---------------------------------------------------------------------------

SEEDS5 = (0, 1, 2, 3, 4)


def _run_many(problem, seeds, **kw):
    results = []
    for seed in seeds:
        results.append(train(problem, TrainConfig(problem=problem, seed=seed, **kw)))
    return results


def test_criterion_03_function_approximation():
    base = dict(depth=4, width=20, learning_rate=1e-3, iterations=10_000,
                n_residual=15, w_g=1.0, snapshot_every=10_000)
    gnn = _run_many("func-approx", SEEDS5, method="gnn", **base)
    nn = _run_many("func-approx", SEEDS5, method="nn", **base)
    gnn_u = float(np.median([r.final.u_error for r in gnn]))
    nn_u = float(np.median([r.final.u_error for r in nn]))
    gnn_du = float(np.median([r.final.derivative_errors[0] for r in gnn]))
    nn_du = float(np.median([r.final.derivative_errors[0] for r in nn]))
    ok = gnn_u <= 0.03 and nn_u >= 3 * gnn_u and gnn_du < nn_du
    report(
        "3",
        ok,
        f"gNN u-err {gnn_u:.4f} <= 3%, NN u-err {nn_u:.4f} >= 3x gNN, "
        f"gNN du-err {gnn_du:.4f} < NN du-err {nn_du:.4f} (medians, 5 seeds)",
    )


# ---------------------------------------------------------------------------
# 4. Poisson (preset 3.2.1): error bands, gaps, and the weight sweep
# ---------------------------------------------------------------------------

SEEDS10 = tuple(range(10))


def test_criterion_04_poisson():
    base = dict(depth=4, width=20, learning_rate=1e-3, iterations=20_000,
                n_residual=20, snapshot_every=20_000)
    pinn = _run_many("poisson-1d", SEEDS10, method="pinn", w_g=0.01, **base)
    gpinn = _run_many("poisson-1d", SEEDS10, method="gpinn", w_g=0.01, **base)
    pu = float(np.median([r.final.u_error for r in pinn]))
    gu = float(np.median([r.final.u_error for r in gpinn]))
    pdu = float(np.median([r.final.derivative_errors[0] for r in pinn]))
    gdu = float(np.median([r.final.derivative_errors[0] for r in gpinn]))
    band = 0.001 <= pu <= 0.02
    ratio_u = gu <= pu / 3
    ratio_du = pdu / gdu >= 10
    # weight sweep: u-error minimum within [1e-3, 1e-1]
    med = {}
    for w in (1e-4, 1e-3, 1e-2, 1e-1, 1.0):
        runs = _run_many("poisson-1d", SEEDS5, method="gpinn", w_g=w, **base)
        med[w] = float(np.median([r.final.u_error for r in runs]))
    best_w = min(med, key=med.get)
    sweep_ok = 1e-3 <= best_w <= 1e-1
    ok = band and ratio_u and ratio_du and sweep_ok
    report(
        "4",
        ok,
        f"PINN u-err {pu:.4f} in [0.001, 0.02]; gPINN {gu:.5f} <= PINN/3; "
        f"du gap {pdu / gdu:.1f}x >= 10x; sweep minimum at w={best_w:g} in [1e-3, 1e-1] "
        f"(medians: {', '.join(f'{w:g}:{e:.4f}' for w, e in med.items())})",
    )


# ---------------------------------------------------------------------------
# 5. Diffusion-reaction: reduced 20k-iteration variant of preset 3.2.2
# ---------------------------------------------------------------------------


def test_criterion_05_diffusion_reaction():
    base = dict(depth=4, width=20, learning_rate=1e-4, iterations=20_000,
                n_residual=40, snapshot_every=20_000)
    gpinn = _run_many("diff-react-fwd", SEEDS5, method="gpinn", w_g=0.1, **base)
    pinn = _run_many("diff-react-fwd", SEEDS5, method="pinn", w_g=0.1, **base)
    gu = float(np.median([r.final.u_error for r in gpinn]))
    pu = float(np.median([r.final.u_error for r in pinn]))
    med = {0.1: gu}
    for w in (0.01, 1.0):
        runs = _run_many("diff-react-fwd", SEEDS5, method="gpinn", w_g=w, **base)
        med[w] = float(np.median([r.final.u_error for r in runs]))
    spread = max(med.values()) / min(med.values())
    ok = gu <= 0.03 and pu >= 3 * gu and spread <= 10.0
    report(
        "5",
        ok,
        f"gPINN(w=0.1) u-err {gu:.4f} <= 3%; PINN {pu:.4f} >= 3x worse; "
        f"w in (0.01, 0.1, 1) medians within one order (spread {spread:.2f}x) "
        f"[reduced 20k-iteration variant]",
    )


# ---------------------------------------------------------------------------
# 6. Brinkman inverse: three variants of preset 3.3.1
# ---------------------------------------------------------------------------


def _nu_err(r):
    return abs(r.final.inferred["nu_e"] - 1e-3) / 1e-3


def _k_err(r):
    return abs(r.final.inferred["K"] - 1e-3) / 1e-3


def test_criterion_06_brinkman_inverse():
    base = dict(depth=4, width=20, learning_rate=1e-3, iterations=50_000,
                w_g=0.1, snapshot_every=50_000)
    # (a) infer nu_e from 5 noiseless observations + 10 residual points
    gp = _run_many("brinkman", SEEDS5, method="gpinn", n_residual=10, infer=("nu_e",), **base)
    pi = _run_many("brinkman", SEEDS5, method="pinn", n_residual=10, infer=("nu_e",), **base)
    g_nu = float(np.median([_nu_err(r) for r in gp]))
    p_nu = float(np.median([_nu_err(r) for r in pi]))
    a_ok = g_nu <= 0.10 and p_nu > g_nu
    # (b) infer both nu_e and K
    gp2 = _run_many("brinkman", SEEDS5, method="gpinn", n_residual=10, infer=("nu_e", "K"), **base)
    pi2 = _run_many("brinkman", SEEDS5, method="pinn", n_residual=10, infer=("nu_e", "K"), **base)
    g_k = float(np.median([_k_err(r) for r in gp2]))
    p_k = float(np.median([_k_err(r) for r in pi2]))
    g_nu2 = float(np.median([_nu_err(r) for r in gp2]))
    p_nu2 = float(np.median([_nu_err(r) for r in pi2]))
    b_ok = g_k <= 0.10 and p_k <= 0.10 and g_nu2 < p_nu2
    # (c) noisy variant: sigma = 0.05, 12 observations; baseline 2x points
    noisy = dict(n_observations=12, noise_std=0.05, infer=("nu_e", "K"))
    gpn = _run_many("brinkman", SEEDS5, method="gpinn", n_residual=15, **noisy, **base)
    pin2x = _run_many("brinkman", SEEDS5, method="pinn", n_residual=30, **noisy, **base)
    g_nu_n = float(np.median([_nu_err(r) for r in gpn]))
    p2x_nu = float(np.median([_nu_err(r) for r in pin2x]))
    c_ok = g_nu_n <= 0.30 and p2x_nu <= 0.30
    report(
        "6",
        a_ok and b_ok and c_ok,
        f"(a) gPINN nu_e err {g_nu:.3f} <= 10%, PINN {p_nu:.3f} larger; "
        f"(b) K errs {g_k:.4f}/{p_k:.4f} <= 10%, gPINN nu_e {g_nu2:.3f} < PINN {p_nu2:.3f}; "
        f"(c) noisy gPINN nu_e {g_nu_n:.3f} <= 30%, PINN-2x {p2x_nu:.3f} <= 30% "
        f"(medians, 5 seeds)",
    )


# ---------------------------------------------------------------------------
# 7. Reaction-rate inverse (preset 3.3.2, full 200k budget)
# ---------------------------------------------------------------------------


def test_criterion_07_reaction_rate_inverse():
    base = dict(depth=4, width=20, learning_rate=1e-4, iterations=200_000,
                n_residual=10, n_observations=8, w_g=0.01, snapshot_every=200_000)
    gp = _run_many("react-rate-inv", SEEDS5, method="gpinn", **base)
    pi = _run_many("react-rate-inv", SEEDS5, method="pinn", **base)
    gk = float(np.median([r.final.field_errors["k"] for r in gp]))
    pk = float(np.median([r.final.field_errors["k"] for r in pi]))
    ok = gk < pk and gk <= 0.10
    report(
        "7",
        ok,
        f"gPINN k-error {gk:.4f} < PINN {pk:.4f}; gPINN <= 10% "
        f"(medians, 5 seeds, 8 observations + 10 residual points)",
    )


# ---------------------------------------------------------------------------
# 8. Burgers + RAR (reduced budget by default; GPINN_FULL=1 for Table-1)
# ---------------------------------------------------------------------------


def test_criterion_08_burgers_rar():
    iters = 20_000 if FULL else 10_000
    lbfgs = 5_000 if FULL else 2_000
    base = dict(depth=4, width=32, optimizer="adam-then-lbfgs",
                learning_rate=1e-3, iterations=iters, lbfgs_max_iter=lbfgs,
                n_boundary=64, w_g=0.01, snapshot_every=iters)
    runs = {}
    for method in ("pinn", "gpinn"):
        r = train("burgers", TrainConfig(problem="burgers", method=method, seed=0,
                                         n_residual=1900, **base))
        runs[method] = r.final.u_error
    ordering = runs["gpinn"] <= runs["pinn"] / 3

    rar_cfg = TrainConfig(problem="burgers", method="pinn", seed=0, n_residual=1500,
                          **{**base, "iterations": iters // 2, "lbfgs_max_iter": 1000})
    rar = RarConfig(m=10, rounds=40, pool=100_000,
                    round_iterations=2000 if FULL else 250,
                    round_lbfgs_iter=1000 if FULL else 60)
    rr = rar_refine("burgers", rar_cfg, rar)
    n_total = len(rr.residual_points)
    added = rr.residual_points[rr.point_rounds > 0]
    frac = float(np.mean(np.abs(added[:100, 0]) < 0.2))
    rar_err = rr.final.u_error
    ok = ordering and n_total == 1900 and frac >= 0.60 and rar_err <= 0.01
    report(
        "8",
        ok,
        f"gPINN u-err {runs['gpinn']:.4f} <= PINN {runs['pinn']:.4f}/3; "
        f"PINN+RAR reaches {rar_err:.4f} <= 1% at {n_total} points (1500+400, m=10); "
        f"{frac:.0%} of first 100 added points in |x|<0.2 >= 60% "
        f"[{'full' if FULL else 'half'} budget, seed 0]",
    )


# ---------------------------------------------------------------------------
# 9. Allen-Cahn + RAR (reduced budget by default; GPINN_FULL=1 for Table-1)
# ---------------------------------------------------------------------------


def test_criterion_09_allen_cahn_rar():
    if FULL:
        base = dict(depth=5, width=64, optimizer="adam-then-lbfgs",
                    learning_rate=1e-3, iterations=20_000, lbfgs_max_iter=5_000,
                    n_boundary=64, w_g=0.01)
        round_iters, round_lbfgs = 2000, 1000
        matched_iters = 20_000
    else:
        base = dict(depth=4, width=24, optimizer="adam-then-lbfgs",
                    learning_rate=1e-3, iterations=3_000, lbfgs_max_iter=800,
                    n_boundary=64, w_g=0.01)
        round_iters, round_lbfgs = 300, 80
        matched_iters = 3_000

    # gPINN + RAR within 900 total points: 500 + 13 rounds x 30 = 890
    rar_cfg = TrainConfig(problem="allen-cahn", method="gpinn", seed=0,
                          n_residual=500, snapshot_every=base["iterations"], **base)
    rr = rar_refine("allen-cahn", rar_cfg,
                    RarConfig(m=30, rounds=13, pool=100_000,
                              round_iterations=round_iters, round_lbfgs_iter=round_lbfgs))
    n_total = len(rr.residual_points)
    rar_err = rr.final.u_error
    rar_ok = rar_err <= 0.02 and n_total <= 900

    # matched point counts: gPINN beats PINN at 1000 and 2000
    matched_ok = True
    details = []
    for n in (1000, 2000):
        errs = {}
        for method in ("pinn", "gpinn"):
            cfg = TrainConfig(problem="allen-cahn", method=method, seed=0,
                              n_residual=n, snapshot_every=matched_iters,
                              **{**base, "iterations": matched_iters})
            errs[method] = train("allen-cahn", cfg).final.u_error
        matched_ok = matched_ok and errs["gpinn"] < errs["pinn"]
        details.append(f"n={n}: gPINN {errs['gpinn']:.4f} < PINN {errs['pinn']:.4f}")
    ok = rar_ok and matched_ok
    report(
        "9",
        ok,
        f"gPINN+RAR u-err {rar_err:.4f} <= 2% at {n_total} <= 900 points; "
        + "; ".join(details)
        + f" [{'full' if FULL else 'reduced'} budget, seed 0]",
    )


# ---------------------------------------------------------------------------
# 10. Determinism and plumbing, runtime < 1 min
# ---------------------------------------------------------------------------

TINY = """
[experiment]
name = "accept10"
out = "{out}"

[problem]
name = "poisson-1d"

[train]
method = "gpinn"
depth = 3
width = 6
iterations = 80
seed = 3
n_residual = 6
w_g = 0.01
snapshot_every = 40
"""


def test_criterion_10_determinism_and_plumbing(tmp_path):
    t0 = time.time()
    # byte-identical metrics.csv for identical config + seed
    for sub in ("a", "b"):
        cfgfile = tmp_path / f"{sub}.toml"
        cfgfile.write_text(TINY.format(out=tmp_path / sub))
        assert cli_main(["run", "--config", str(cfgfile)]) == 0
    ma = (tmp_path / "a" / "accept10" / "metrics.csv").read_bytes()
    mb = (tmp_path / "b" / "accept10" / "metrics.csv").read_bytes()
    byte_identical = ma == mb

    # config round-trip identity
    cfg = parse_config_text(TINY.format(out="/tmp/x"))
    round_trip = parse_config_text(serialize_config(cfg)) == cfg

    # RAR bookkeeping exactness
    rar = RarConfig(m=3, rounds=5, pool=50, round_iterations=20, round_lbfgs_iter=0)
    rr = rar_refine("poisson-1d", TrainConfig(problem="poisson-1d", method="gpinn",
                                              depth=3, width=6, iterations=60, seed=0,
                                              n_residual=6, w_g=0.01, snapshot_every=60), rar)
    counts_ok = (
        len(rr.residual_points) == 6 + 5 * 3
        and np.bincount(rr.point_rounds).tolist() == [6, 3, 3, 3, 3, 3]
    )
    dt = time.time() - t0
    ok = byte_identical and round_trip and counts_ok and dt < 60.0
    report(
        "10",
        ok,
        f"metrics.csv byte-identical={byte_identical}; config round-trip={round_trip}; "
        f"RAR point counts exact={counts_ok}; runtime {dt:.1f}s < 60s",
    )
