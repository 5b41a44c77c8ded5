"""Optimizers over the flattened trainable vector (network parameters
plus inverse parameters), the training loop, and residual-based
adaptive refinement of the training point set.
"""

from __future__ import annotations

import math
import struct
import time
from dataclasses import dataclass, field, asdict

import numpy as np

from .autodiff import Graph
from .loss import LossAssembly, LossWeights, build_point_sets
from .metrics import ModelEvaluator, TestGrid, sample_uniform
from .network import init_mlp
from .problems import ProblemSpec, bind_model, get_problem, observations

__all__ = [
    "TrainConfig",
    "RarConfig",
    "AdamState",
    "adam_step",
    "lbfgs_minimize",
    "Snapshot",
    "RunResult",
    "train",
    "rar_refine",
    "save_checkpoint",
    "load_checkpoint",
]


@dataclass(frozen=True)
class TrainConfig:
    problem: str
    method: str = "gpinn"  # pinn | gpinn | nn | gnn
    depth: int = 4
    width: int = 20
    optimizer: str = "adam"  # adam | adam-then-lbfgs
    learning_rate: float = 1e-3
    iterations: int = 20000
    seed: int = 0
    n_residual: int = 20
    n_boundary: int = 32
    n_observations: int = 0  # 0 = problem default
    noise_std: float = 0.0
    point_distribution: str = "auto"
    infer: tuple[str, ...] = ()
    w_f: float = 1.0
    w_b: float = 1.0
    w_i: float = 1.0
    w_g: float = 0.1  # uniform across axes; ignored for pinn/nn
    snapshot_every: int = 1000
    lbfgs_history: int = 50
    lbfgs_max_iter: int = 1000
    lbfgs_tol: float = 1e-8
    checkpoint_every: int = 0
    checkpoint_path: str = ""
    resume_from: str = ""
    cache_dir: str = ""

    def layer_sizes(self, dim: int) -> list[int]:
        if self.depth < 2:
            raise ValueError("depth counts weight layers and must be >= 2")
        return [dim] + [self.width] * (self.depth - 1) + [1]

    def weights(self, dim: int) -> LossWeights:
        wg = 0.0 if self.method in ("pinn", "nn") else self.w_g
        return LossWeights(self.w_f, self.w_b, self.w_i, (wg,) * dim).validated(dim)

    def echo(self) -> dict:
        d = asdict(self)
        d["infer"] = list(self.infer)
        return d


@dataclass(frozen=True)
class RarConfig:
    """Refinement schedule: after each training round, score fresh uniform
    candidates by |f| and append the m largest."""

    m: int = 10
    rounds: int = 40
    threshold: float = 0.0  # mean-|f| stop rule; 0 disables
    pool: int = 100_000
    round_iterations: int = 2000
    round_lbfgs_iter: int = 0

    def validated(self) -> "RarConfig":
        if self.m < 1:
            raise ValueError("m must be >= 1")
        if self.pool < 10 * self.m:
            raise ValueError("candidate pool must be >= 10*m")
        return self


@dataclass
class Snapshot:
    iteration: int
    loss_total: float
    components: dict[str, float]
    u_error: float
    derivative_errors: tuple[float, ...]
    mean_abs_residual: float
    inferred: dict[str, float] = field(default_factory=dict)
    field_errors: dict[str, float] = field(default_factory=dict)


@dataclass
class RunResult:
    problem: str
    method: str
    seed: int
    config: dict
    loss_history: np.ndarray
    snapshots: list[Snapshot]
    final_theta: np.ndarray
    residual_points: np.ndarray
    point_rounds: np.ndarray  # provenance: 0 = initial set, r = added in round r
    wall_clock: float
    diverged: bool = False
    lbfgs_info: dict = field(default_factory=dict)

    @property
    def final(self) -> Snapshot:
        return self.snapshots[-1]

    def summary(self) -> dict:
        s = self.final
        return {
            "problem": self.problem,
            "method": self.method,
            "seed": self.seed,
            "iterations": int(s.iteration),
            "loss_total": s.loss_total,
            "u_error": s.u_error,
            "derivative_errors": list(s.derivative_errors),
            "mean_abs_residual": s.mean_abs_residual,
            "inferred": s.inferred,
            "field_errors": s.field_errors,
            "n_points": int(len(self.residual_points)),
            "wall_clock": self.wall_clock,
            "diverged": self.diverged,
        }


# ---------------------------------------------------------------------------
# Adam
# ---------------------------------------------------------------------------


@dataclass
class AdamState:
    lr: float
    m: np.ndarray
    v: np.ndarray
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def init(cls, n: int, lr: float) -> "AdamState":
        return cls(lr=lr, m=np.zeros(n), v=np.zeros(n))

    def copy(self) -> "AdamState":
        return AdamState(self.lr, self.m.copy(), self.v.copy(), self.t, self.beta1, self.beta2, self.eps)


def adam_step(state: AdamState, params: np.ndarray, grad: np.ndarray) -> np.ndarray:
    """One bias-corrected Adam update; returns the new parameter vector."""
    if grad.shape != params.shape or state.m.shape != params.shape:
        raise ValueError("adam_step shape mismatch")
    if not np.all(np.isfinite(grad)):
        bad = int(np.flatnonzero(~np.isfinite(grad))[0])
        raise FloatingPointError(f"non-finite gradient (first at index {bad})")
    state.t += 1
    state.m = state.beta1 * state.m + (1.0 - state.beta1) * grad
    state.v = state.beta2 * state.v + (1.0 - state.beta2) * grad * grad
    mhat = state.m / (1.0 - state.beta1**state.t)
    vhat = state.v / (1.0 - state.beta2**state.t)
    return params - state.lr * mhat / (np.sqrt(vhat) + state.eps)


# ---------------------------------------------------------------------------
# L-BFGS with a strong-Wolfe line search
# ---------------------------------------------------------------------------


def _cubic_min(a, fa, ga, b, fb, gb):
    """Minimizer of the cubic through (a, fa, ga), (b, fb, gb); None if
    degenerate."""
    d1 = ga + gb - 3.0 * (fa - fb) / (a - b)
    disc = d1 * d1 - ga * gb
    if disc < 0.0:
        return None
    d2 = math.copysign(math.sqrt(disc), b - a)
    denom = gb - ga + 2.0 * d2
    if denom == 0.0:
        return None
    t = b - (b - a) * (gb + d2 - d1) / denom
    return t


def _zoom(phi, lo, hi, f_lo, g_lo, f_hi, g_hi, f0, g0, c1, c2, max_iter=25):
    for _ in range(max_iter):
        t = _cubic_min(lo, f_lo, g_lo, hi, f_hi, g_hi)
        span = abs(hi - lo)
        if (
            t is None
            or not (min(lo, hi) < t < max(lo, hi))
            or abs(t - lo) < 0.1 * span
            or abs(t - hi) < 0.1 * span
        ):
            t = 0.5 * (lo + hi)
        ft, gt = phi(t)
        if ft > f0 + c1 * t * g0 or ft >= f_lo:
            hi, f_hi, g_hi = t, ft, gt
        else:
            if abs(gt) <= -c2 * g0:
                return t, ft, gt
            if gt * (hi - lo) >= 0.0:
                hi, f_hi, g_hi = lo, f_lo, g_lo
            lo, f_lo, g_lo = t, ft, gt
        if span < 1e-16:
            break
    return None


def _strong_wolfe(phi, f0, g0, alpha0=1.0, c1=1e-4, c2=0.9, alpha_max=1e4, max_iter=25):
    """Bracket + zoom line search enforcing the strong Wolfe conditions.

    phi(a) must return (f, dphi/da) at x + a d.  Returns (alpha, f, g)
    or None on failure.
    """
    if g0 >= 0.0:
        return None
    a_prev, f_prev, g_prev = 0.0, f0, g0
    a = alpha0
    for i in range(max_iter):
        fa, ga = phi(a)
        if fa > f0 + c1 * a * g0 or (i > 0 and fa >= f_prev):
            return _zoom(phi, a_prev, a, f_prev, g_prev, fa, ga, f0, g0, c1, c2)
        if abs(ga) <= -c2 * g0:
            return a, fa, ga
        if ga >= 0.0:
            return _zoom(phi, a, a_prev, fa, ga, f_prev, g_prev, f0, g0, c1, c2)
        a_prev, f_prev, g_prev = a, fa, ga
        a = min(2.0 * a, alpha_max)
        if a >= alpha_max:
            return None
    return None


def lbfgs_minimize(
    objective,
    x0: np.ndarray,
    history: int = 50,
    max_iter: int = 1000,
    grad_tol: float = 1e-8,
    loss_rel_tol: float = 1e-12,
    callback=None,
):
    """Two-loop-recursion L-BFGS with a strong-Wolfe line search
    (c1=1e-4, c2=0.9).

    objective(x) -> (f, grad).  Stops on gradient norm < grad_tol,
    relative loss change < loss_rel_tol, or max_iter.  A failed line
    search returns the best point so far with a flag so training can
    continue gracefully.
    """
    x = np.asarray(x0, dtype=float).copy()
    f, g = objective(x)
    if not np.isfinite(f):
        raise FloatingPointError("objective not finite at the starting point")
    best_x, best_f = x.copy(), f
    S: list[np.ndarray] = []
    Y: list[np.ndarray] = []
    rho: list[float] = []
    info = {"iterations": 0, "n_evals": 1, "reason": "max_iter", "line_search_failures": 0}
    for it in range(max_iter):
        gnorm = float(np.linalg.norm(g))
        if gnorm < grad_tol:
            info["reason"] = "grad_tol"
            break
        # two-loop recursion
        q = g.copy()
        alpha_hist = []
        for s, y, r in zip(reversed(S), reversed(Y), reversed(rho)):
            a = r * float(np.dot(s, q))
            alpha_hist.append(a)
            q -= a * y
        if S:
            gamma = float(np.dot(S[-1], Y[-1]) / np.dot(Y[-1], Y[-1]))
            q *= gamma
        for (s, y, r), a in zip(zip(S, Y, rho), reversed(alpha_hist)):
            b = r * float(np.dot(y, q))
            q += (a - b) * s
        d = -q
        dg = float(np.dot(d, g))
        if dg >= 0.0:  # not a descent direction: reset memory
            S, Y, rho = [], [], []
            d = -g
            dg = -float(np.dot(g, g))

        g_new_holder = {}

        def phi(a):
            fa, ga = objective(x + a * d)
            info["n_evals"] += 1
            g_new_holder["g"] = ga
            return fa, float(np.dot(ga, d))

        ls = _strong_wolfe(phi, f, dg, alpha0=1.0)
        if ls is None:
            info["line_search_failures"] += 1
            info["reason"] = "line_search_failure"
            break
        alpha, f_new, _ = ls
        g_new = g_new_holder["g"]
        s = alpha * d
        y = g_new - g
        sy = float(np.dot(s, y))
        if sy > 1e-10 * float(np.linalg.norm(s)) * float(np.linalg.norm(y)):
            S.append(s)
            Y.append(y)
            rho.append(1.0 / sy)
            if len(S) > history:
                S.pop(0)
                Y.pop(0)
                rho.pop(0)
        x = x + s
        rel_change = abs(f - f_new) / max(1.0, abs(f))
        f, g = f_new, g_new
        if f < best_f:
            best_f, best_x = f, x.copy()
        info["iterations"] = it + 1
        if callback is not None:
            callback(it + 1, x, f)
        if rel_change < loss_rel_tol:
            info["reason"] = "loss_rel_tol"
            break
    if f > best_f:
        x, f = best_x, best_f
    info["final_loss"] = float(f)
    info["final_grad_norm"] = float(np.linalg.norm(g))
    return x, info


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------


def _seeds(seed: int) -> dict[str, int]:
    return {"net": 3 * seed, "points": 3 * seed + 1, "aux_net": 3 * seed + 2}


def select_largest(values: np.ndarray, m: int) -> np.ndarray:
    """Indices of the m largest values, largest first; ties broken by
    original order (deterministic)."""
    return np.argsort(-np.asarray(values), kind="stable")[:m]


class _Run:
    """Mutable state for one training run (shared by train and RAR)."""

    def __init__(self, spec: ProblemSpec, config: TrainConfig):
        self.spec = spec
        self.config = config
        seeds = _seeds(config.seed)
        sizes = config.layer_sizes(spec.dim)
        mlps = {"u": init_mlp(sizes, seeds["net"])}
        for name in spec.fields:
            if name != "u":
                mlps[name] = init_mlp(sizes, seeds["aux_net"])
        self.graph = Graph()
        self.model = bind_model(spec, self.graph, mlps, infer=config.infer)
        obs = None
        if spec.is_inverse:
            n_obs = config.n_observations or spec.n_obs_default
            obs = observations(spec, seed=config.seed, n=n_obs, noise_std=config.noise_std)
        self.sets = build_point_sets(
            spec,
            config.n_residual,
            seeds["points"],
            n_boundary=config.n_boundary,
            observations=obs,
            distribution=config.point_distribution,
        )
        self.weights = config.weights(spec.dim)
        self.assembly = LossAssembly(spec, self.model, self.sets, self.weights)
        self.evaluator = ModelEvaluator(self.assembly)
        self.grid = TestGrid(spec, cache_dir=config.cache_dir or None)
        self.theta = self.model.theta0.copy()
        self.adam = AdamState.init(len(self.theta), config.learning_rate)
        self.iteration = 0
        self.loss_history: list[float] = []
        self.snapshots: list[Snapshot] = []
        self.point_rounds = np.zeros(len(self.sets.residual), dtype=np.int64)
        self.diverged = False
        self.lbfgs_info: dict = {}
        self._nan_rollbacks = 0
        self._ckpt = (self.theta.copy(), self.adam.copy(), 0)
        # the reported model is the best-training-loss iterate, which
        # filters the limit cycle a constant-rate Adam settles into
        self.best_loss = math.inf
        self.best_theta = self.theta.copy()
        if config.resume_from:
            theta, adam, iteration = load_checkpoint(config.resume_from)
            if theta.shape != self.theta.shape:
                raise ValueError(
                    f"checkpoint {config.resume_from} holds {theta.shape[0]} "
                    f"parameters, expected {self.theta.shape[0]}"
                )
            self.theta, self.adam, self.iteration = theta, adam, iteration
            self.best_theta = theta.copy()
            self._ckpt = (theta.copy(), adam.copy(), iteration)

    def snapshot(self, comps: dict[str, float], theta: np.ndarray | None = None) -> None:
        theta = self.theta if theta is None else theta
        inferred = {}
        if self.model.infer:
            split = self.model.split_theta(theta)
            inferred = {ip.name: split[ip.name] for ip in self.model.infer}
        m = self.evaluator.metrics(theta, self.grid)
        self.snapshots.append(
            Snapshot(
                iteration=self.iteration,
                loss_total=comps.get("loss_total", float("nan")),
                components=dict(comps),
                u_error=m["u_error"],
                derivative_errors=m["derivative_errors"],
                mean_abs_residual=m["mean_abs_residual"],
                inferred=inferred,
                field_errors=m["field_errors"],
            )
        )

    def _maybe_checkpoint_file(self) -> None:
        cfg = self.config
        if cfg.checkpoint_every and cfg.checkpoint_path and self.iteration % cfg.checkpoint_every == 0:
            save_checkpoint(cfg.checkpoint_path, self.theta, self.adam, self.iteration)

    def run_adam(self, iterations: int) -> None:
        cfg = self.config
        every = max(1, cfg.snapshot_every)
        for _ in range(iterations):
            loss, gvec, comps = self.assembly(self.theta)
            if not np.isfinite(loss) or not np.all(np.isfinite(gvec)):
                # divergence policy: one rollback + halved learning rate,
                # then abort
                if self._nan_rollbacks == 0:
                    self._nan_rollbacks = 1
                    self.theta, self.adam, self.iteration = (
                        self._ckpt[0].copy(),
                        self._ckpt[1].copy(),
                        self._ckpt[2],
                    )
                    self.adam.lr *= 0.5
                    continue
                self.diverged = True
                break
            self.loss_history.append(loss)
            if loss < self.best_loss:
                self.best_loss = loss
                self.best_theta = self.theta.copy()
            self.theta = adam_step(self.adam, self.theta, gvec)
            self.iteration += 1
            if self.iteration % every == 0:
                self.snapshot(comps)
                self._ckpt = (self.theta.copy(), self.adam.copy(), self.iteration)
                self._maybe_checkpoint_file()

    def run_lbfgs(self, max_iter: int) -> None:
        cfg = self.config

        def objective(th):
            loss, gvec, _ = self.assembly(th)
            return loss, gvec

        every = max(1, cfg.snapshot_every)
        counter = {"last_snap": self.iteration}

        def cb(k, x, fval):
            self.loss_history.append(fval)
            self.iteration += 1
            if self.iteration - counter["last_snap"] >= every:
                comps = self.assembly(x)[2]
                self.snapshot(comps, theta=x)
                counter["last_snap"] = self.iteration

        self.theta, info = lbfgs_minimize(
            objective,
            self.theta,
            history=cfg.lbfgs_history,
            max_iter=max_iter,
            grad_tol=cfg.lbfgs_tol,
            callback=cb,
        )
        self.lbfgs_info = info
        if info["final_loss"] < self.best_loss:
            self.best_loss = info["final_loss"]
            self.best_theta = self.theta.copy()

    def result(self, wall: float) -> RunResult:
        final = self.theta
        if self.best_loss < math.inf:
            cur = self.assembly(self.theta)[0]
            if self.best_loss < cur:
                final = self.best_theta
        if self.snapshots and self.snapshots[-1].iteration == self.iteration:
            self.snapshots.pop()
        self.snapshot(self.assembly(final)[2], theta=final)
        return RunResult(
            problem=self.spec.name,
            method=self.config.method,
            seed=self.config.seed,
            config=self.config.echo(),
            loss_history=np.asarray(self.loss_history),
            snapshots=self.snapshots,
            final_theta=final.copy(),
            residual_points=self.sets.residual.copy(),
            point_rounds=self.point_rounds.copy(),
            wall_clock=wall,
            diverged=self.diverged,
            lbfgs_info=self.lbfgs_info,
        )


def train(spec: ProblemSpec | str, config: TrainConfig) -> RunResult:
    """Train one model with the configured optimizer; records metric
    snapshots every ``snapshot_every`` iterations."""
    spec = get_problem(spec) if isinstance(spec, str) else spec
    if config.optimizer not in ("adam", "adam-then-lbfgs"):
        raise ValueError(f"unknown optimizer {config.optimizer!r}")
    t0 = time.time()
    run = _Run(spec, config)
    run.run_adam(max(0, config.iterations - run.iteration))
    if config.optimizer == "adam-then-lbfgs" and not run.diverged:
        run.run_lbfgs(config.lbfgs_max_iter)
    return run.result(time.time() - t0)


def rar_refine(spec: ProblemSpec | str, config: TrainConfig, rar: RarConfig) -> RunResult:
    """Train, then repeatedly add the m points with the largest |f| from a
    fresh uniform candidate pool; optimizer state carries across rounds.

    Stops after ``rounds`` rounds, or earlier once the candidate-pool
    mean |f| falls below the threshold (when enabled).
    """
    spec = get_problem(spec) if isinstance(spec, str) else spec
    rar = rar.validated()
    t0 = time.time()
    run = _Run(spec, config)
    pts_seed = _seeds(config.seed)["points"]

    run.run_adam(max(0, config.iterations - run.iteration))
    if config.optimizer == "adam-then-lbfgs" and not run.diverged:
        run.run_lbfgs(config.lbfgs_max_iter)

    for r in range(1, rar.rounds + 1):
        if run.diverged:
            break
        cands = sample_uniform(spec.domain, rar.pool, seed=pts_seed + 7_000_000 + r)
        absf = np.abs(run.evaluator.evaluate(run.theta, cands)["f"])
        if rar.threshold > 0.0 and float(absf.mean()) < rar.threshold:
            break
        top = select_largest(absf, rar.m)
        run.sets.residual = np.vstack([run.sets.residual, cands[top]])
        run.point_rounds = np.concatenate(
            [run.point_rounds, np.full(rar.m, r, dtype=np.int64)]
        )
        run.run_adam(rar.round_iterations)
        if rar.round_lbfgs_iter and config.optimizer == "adam-then-lbfgs" and not run.diverged:
            run.run_lbfgs(rar.round_lbfgs_iter)
        comps = run.assembly(run.theta)[2]
        if run.snapshots and run.snapshots[-1].iteration == run.iteration:
            run.snapshots.pop()
        run.snapshot(comps)
    return run.result(time.time() - t0)


# ---------------------------------------------------------------------------
# Checkpoints (binary layout documented in docs/formats.md)
# ---------------------------------------------------------------------------

_CKPT_MAGIC = b"GPCK"


def save_checkpoint(path, theta: np.ndarray, adam: AdamState, iteration: int) -> None:
    with open(path, "wb") as fh:
        fh.write(_CKPT_MAGIC)
        fh.write(struct.pack("<IQ", len(theta), iteration))
        fh.write(struct.pack("<dQ", adam.lr, adam.t))
        for arr in (theta, adam.m, adam.v):
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load_checkpoint(path):
    with open(path, "rb") as fh:
        if fh.read(4) != _CKPT_MAGIC:
            raise ValueError(f"{path}: not a training checkpoint")
        n, iteration = struct.unpack("<IQ", fh.read(12))
        lr, t = struct.unpack("<dQ", fh.read(16))
        theta = np.frombuffer(fh.read(8 * n), dtype="<f8").astype(float)
        m = np.frombuffer(fh.read(8 * n), dtype="<f8").astype(float)
        v = np.frombuffer(fh.read(8 * n), dtype="<f8").astype(float)
    adam = AdamState(lr=lr, m=m, v=v, t=t)
    return theta, adam, iteration
