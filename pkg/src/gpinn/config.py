"""Experiment configuration: preset hyperparameter rows, TOML parsing
and serialization with round-trip identity on every documented field.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

try:
    import tomllib as _toml  # python >= 3.11
except ModuleNotFoundError:  # pragma: no cover
    import tomli as _toml

from .optimize import RarConfig, TrainConfig
from .problems import PROBLEMS

__all__ = [
    "ConfigError",
    "SweepConfig",
    "ExperimentConfig",
    "PRESETS",
    "expand_preset",
    "parse_config",
    "parse_config_text",
    "serialize_config",
]


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending field."""


# Per-experiment hyperparameter rows (depth, width, optimizer, learning
# rate, iteration count) plus the per-problem defaults the runs use.
PRESETS: dict[str, dict] = {
    "3.1": dict(
        problem="func-approx", method="gnn", depth=4, width=20, optimizer="adam",
        learning_rate=1e-3, iterations=10_000, n_residual=15, w_g=1.0,
    ),
    "3.2.1": dict(
        problem="poisson-1d", method="gpinn", depth=4, width=20, optimizer="adam",
        learning_rate=1e-3, iterations=20_000, n_residual=20, w_g=0.01,
    ),
    "3.2.2": dict(
        problem="diff-react-fwd", method="gpinn", depth=4, width=20, optimizer="adam",
        learning_rate=1e-4, iterations=100_000, n_residual=40, w_g=0.1,
    ),
    "3.2.2-long": dict(
        problem="diff-react-fwd", method="gpinn", depth=4, width=20, optimizer="adam",
        learning_rate=1e-6, iterations=5_000_000, n_residual=140, w_g=0.1,
        checkpoint_every=100_000,
    ),
    "3.3.1": dict(
        problem="brinkman", method="gpinn", depth=4, width=20, optimizer="adam",
        learning_rate=1e-3, iterations=50_000, n_residual=10, w_g=0.1,
        infer=("nu_e",),
    ),
    "3.3.2": dict(
        problem="react-rate-inv", method="gpinn", depth=4, width=20, optimizer="adam",
        learning_rate=1e-4, iterations=200_000, n_residual=10, w_g=0.01,
    ),
    "3.4.1": dict(
        problem="burgers", method="gpinn", depth=4, width=32, optimizer="adam-then-lbfgs",
        learning_rate=1e-3, iterations=20_000, n_residual=1500, w_g=0.01,
        n_boundary=64, snapshot_every=5000,
        rar=dict(m=10, rounds=40, pool=100_000, round_iterations=2000, round_lbfgs_iter=1000),
    ),
    "3.4.2": dict(
        problem="allen-cahn", method="gpinn", depth=5, width=64, optimizer="adam-then-lbfgs",
        learning_rate=1e-3, iterations=20_000, n_residual=500, w_g=0.01,
        n_boundary=64, snapshot_every=5000,
        rar=dict(m=30, rounds=100, pool=100_000, round_iterations=2000, round_lbfgs_iter=1000),
    ),
}


@dataclass(frozen=True)
class SweepConfig:
    points: tuple[int, ...] = ()
    weights: tuple[float, ...] = ()
    methods: tuple[str, ...] = ()
    seeds: tuple[int, ...] = tuple(range(10))  # ten runs by default

    def axes(self) -> int:
        return sum(1 for a in (self.points, self.weights, self.methods) if a)


@dataclass(frozen=True)
class ExperimentConfig:
    name: str
    train: TrainConfig
    rar: RarConfig | None = None
    sweep: SweepConfig | None = None
    out: str = "out"


def expand_preset(name: str) -> tuple[TrainConfig, RarConfig | None]:
    if name not in PRESETS:
        raise ConfigError(f"experiment.preset: unknown preset {name!r}")
    row = dict(PRESETS[name])
    rar = row.pop("rar", None)
    cfg = TrainConfig(**row)
    return cfg, RarConfig(**rar) if rar else None


_TRAIN_FIELDS = {f.name for f in TrainConfig.__dataclass_fields__.values()}
_RAR_FIELDS = {f.name for f in RarConfig.__dataclass_fields__.values()}
_SWEEP_FIELDS = {f.name for f in SweepConfig.__dataclass_fields__.values()}
_METHODS = ("pinn", "gpinn", "nn", "gnn")


def _check_fields(section: str, data: dict, allowed: set) -> None:
    for key in data:
        if key not in allowed:
            raise ConfigError(f"{section}.{key}: unknown field")


def parse_config_text(text: str) -> ExperimentConfig:
    try:
        raw = _toml.loads(text)
    except _toml.TOMLDecodeError as e:
        raise ConfigError(f"config is not valid TOML: {e}") from None

    exp = raw.get("experiment", {})
    _check_fields("experiment", exp, {"name", "preset", "out"})
    problem_sec = raw.get("problem", {})
    _check_fields("problem", problem_sec, {"name"})

    train_kwargs: dict = {}
    rar: RarConfig | None = None
    preset = exp.get("preset")
    if preset:
        base, rar = expand_preset(str(preset))
        train_kwargs = {k: getattr(base, k) for k in _TRAIN_FIELDS}
    if "name" in problem_sec:
        train_kwargs["problem"] = problem_sec["name"]

    tsec = raw.get("train", {})
    _check_fields("train", tsec, _TRAIN_FIELDS)
    train_kwargs.update(tsec)
    if "infer" in train_kwargs:
        train_kwargs["infer"] = tuple(train_kwargs["infer"])
    if "problem" not in train_kwargs:
        raise ConfigError("problem.name: required (or give experiment.preset)")
    if train_kwargs["problem"] not in PROBLEMS:
        raise ConfigError(
            f"problem.name: unknown problem {train_kwargs['problem']!r}; "
            f"available: {sorted(PROBLEMS)}"
        )
    try:
        train = TrainConfig(**train_kwargs)
    except TypeError as e:
        raise ConfigError(f"train: {e}") from None
    if train.method not in _METHODS:
        raise ConfigError(f"train.method: unknown method {train.method!r}")
    if train.optimizer not in ("adam", "adam-then-lbfgs"):
        raise ConfigError(f"train.optimizer: unknown optimizer {train.optimizer!r}")
    for fieldname in ("iterations", "n_residual", "depth", "width"):
        if getattr(train, fieldname) <= 0:
            raise ConfigError(f"train.{fieldname}: must be positive")
    if min(train.w_f, train.w_b, train.w_i, train.w_g) < 0:
        raise ConfigError("train: loss weights must be >= 0")

    if "rar" in raw:
        _check_fields("rar", raw["rar"], _RAR_FIELDS)
        base_rar = {k: getattr(rar, k) for k in _RAR_FIELDS} if rar else {}
        base_rar.update(raw["rar"])
        try:
            rar = RarConfig(**base_rar).validated()
        except ValueError as e:
            raise ConfigError(f"rar: {e}") from None

    sweep = None
    if "sweep" in raw:
        _check_fields("sweep", raw["sweep"], _SWEEP_FIELDS)
        ssec = dict(raw["sweep"])
        for key in ("points", "weights", "methods", "seeds"):
            if key in ssec:
                ssec[key] = tuple(ssec[key])
        sweep = SweepConfig(**ssec)
        for m in sweep.methods:
            if m not in _METHODS:
                raise ConfigError(f"sweep.methods: unknown method {m!r}")

    return ExperimentConfig(
        name=str(exp.get("name", train.problem)),
        train=train,
        rar=rar,
        sweep=sweep,
        out=str(exp.get("out", "out")),
    )


def parse_config(path) -> ExperimentConfig:
    return parse_config_text(Path(path).read_text())


def _toml_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int, float)):
        return repr(v)
    if isinstance(v, str):
        return '"' + v.replace("\\", "\\\\").replace('"', '\\"') + '"'
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_toml_value(x) for x in v) + "]"
    raise ConfigError(f"cannot serialize value {v!r}")


def serialize_config(cfg: ExperimentConfig) -> str:
    """Canonical TOML form; parse(serialize(cfg)) == cfg."""
    lines = ["[experiment]"]
    lines.append(f"name = {_toml_value(cfg.name)}")
    lines.append(f"out = {_toml_value(cfg.out)}")
    lines.append("")
    lines.append("[train]")
    for k in TrainConfig.__dataclass_fields__:
        v = getattr(cfg.train, k)
        if isinstance(v, tuple):
            v = list(v)
        lines.append(f"{k} = {_toml_value(v)}")
    if cfg.rar is not None:
        lines.append("")
        lines.append("[rar]")
        for k in RarConfig.__dataclass_fields__:
            lines.append(f"{k} = {_toml_value(getattr(cfg.rar, k))}")
    if cfg.sweep is not None:
        lines.append("")
        lines.append("[sweep]")
        for k in SweepConfig.__dataclass_fields__:
            v = getattr(cfg.sweep, k)
            lines.append(f"{k} = {_toml_value(list(v))}")
    return "\n".join(lines) + "\n"
