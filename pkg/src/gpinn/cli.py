"""Command-line front end: single runs, sweeps over points/weights/seeds,
RAR runs, and a Markdown comparison report.

Artifacts (formats documented in docs/formats.md):
  run:    <out>/<name>/metrics.csv, result.json, config.toml, manifest.json
  sweep:  per-cell/seed run directories plus aggregated sweep.csv
  rar:    as run, plus points_round_<r>.csv per refinement round
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .config import (
    ConfigError,
    ExperimentConfig,
    SweepConfig,
    parse_config,
    serialize_config,
)
from .optimize import RarConfig, RunResult, TrainConfig, rar_refine, train
from .problems import get_problem

__all__ = ["main", "cmd_run", "cmd_sweep", "cmd_rar", "cmd_report"]


def _fmt(x: float) -> str:
    """Full 64-bit precision decimal (17 significant digits)."""
    return format(float(x), ".17g")


def _metric_columns(result: RunResult) -> list[str]:
    spec = get_problem(result.problem)
    cols = ["iteration", "loss_total", "loss_f"]
    if result.snapshots and "loss_b" in result.snapshots[-1].components:
        cols.append("loss_b")
    if result.snapshots and "loss_i" in result.snapshots[-1].components:
        cols.append("loss_i")
    for ax in spec.axes:
        key = f"loss_g{ax}"
        if result.snapshots and key in result.snapshots[-1].components:
            cols.append(key)
    cols.append("u_error")
    cols.extend(f"du_{ax}_error" for ax in spec.axes)
    cols.append("mean_abs_f")
    for name in result.snapshots[-1].inferred if result.snapshots else ():
        cols.append(name)
    for name in result.snapshots[-1].field_errors if result.snapshots else ():
        cols.append(f"{name}_error")
    return cols


def write_metrics_csv(result: RunResult, path: Path) -> None:
    cols = _metric_columns(result)
    spec = get_problem(result.problem)
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(cols)
        for s in result.snapshots:
            row = [str(s.iteration), _fmt(s.loss_total), _fmt(s.components.get("loss_f", float("nan")))]
            if "loss_b" in cols:
                row.append(_fmt(s.components.get("loss_b", float("nan"))))
            if "loss_i" in cols:
                row.append(_fmt(s.components.get("loss_i", float("nan"))))
            for ax in spec.axes:
                if f"loss_g{ax}" in cols:
                    row.append(_fmt(s.components.get(f"loss_g{ax}", float("nan"))))
            row.append(_fmt(s.u_error))
            row.extend(_fmt(e) for e in s.derivative_errors)
            row.append(_fmt(s.mean_abs_residual))
            for name in s.inferred:
                row.append(_fmt(s.inferred[name]))
            for name in s.field_errors:
                row.append(_fmt(s.field_errors[name]))
            wr.writerow(row)


def write_result_json(result: RunResult, path: Path) -> None:
    doc = result.summary()
    doc["version"] = __version__
    doc["config"] = result.config
    doc["lbfgs"] = result.lbfgs_info
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_points_csv(result: RunResult, out_dir: Path) -> list[Path]:
    """Cumulative point sets per refinement round, with provenance."""
    spec = get_problem(result.problem)
    paths = []
    rounds = int(result.point_rounds.max()) if len(result.point_rounds) else 0
    for r in range(rounds + 1):
        mask = result.point_rounds <= r
        path = out_dir / f"points_round_{r:03d}.csv"
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(list(spec.axes) + ["round_added"])
            for p, ra in zip(result.residual_points[mask], result.point_rounds[mask]):
                wr.writerow([_fmt(c) for c in p] + [str(int(ra))])
        paths.append(path)
    return paths


def _write_manifest(out_dir: Path, cfg: ExperimentConfig, artifacts: list[Path], seeds: list[int]) -> None:
    doc = {
        "name": cfg.name,
        "version": __version__,
        "created": time.strftime("%Y-%m-%dT%H:%M:%S"),
        "config": serialize_config(cfg),
        "seeds": seeds,
        "artifacts": sorted(str(p.relative_to(out_dir)) for p in artifacts),
    }
    with open(out_dir / "manifest.json", "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _single_run(cfg: ExperimentConfig, out_dir: Path, use_rar: bool) -> tuple[RunResult, list[Path]]:
    out_dir.mkdir(parents=True, exist_ok=True)
    train_cfg = cfg.train
    if train_cfg.checkpoint_every and not train_cfg.checkpoint_path:
        train_cfg = replace(train_cfg, checkpoint_path=str(out_dir / "checkpoint.bin"))
    if use_rar:
        result = rar_refine(train_cfg.problem, train_cfg, cfg.rar)
    else:
        result = train(train_cfg.problem, train_cfg)
    artifacts = []
    p = out_dir / "metrics.csv"
    write_metrics_csv(result, p)
    artifacts.append(p)
    p = out_dir / "result.json"
    write_result_json(result, p)
    artifacts.append(p)
    p = out_dir / "config.toml"
    p.write_text(serialize_config(replace(cfg, train=train_cfg)))
    artifacts.append(p)
    if use_rar:
        artifacts.extend(write_points_csv(result, out_dir))
    if train_cfg.checkpoint_path and Path(train_cfg.checkpoint_path).exists():
        artifacts.append(Path(train_cfg.checkpoint_path))
    return result, artifacts


def cmd_run(cfg: ExperimentConfig, use_rar: bool = False) -> int:
    out_dir = Path(cfg.out) / cfg.name
    if use_rar and cfg.rar is None:
        raise ConfigError("rar: section required for the rar command")
    result, artifacts = _single_run(cfg, out_dir, use_rar)
    _write_manifest(out_dir, cfg, artifacts, [cfg.train.seed])
    s = result.final
    print(f"{cfg.name}: u_error={s.u_error:.6g} mean|f|={s.mean_abs_residual:.6g} "
          f"loss={s.loss_total:.6g} wall={result.wall_clock:.1f}s")
    for name, v in s.inferred.items():
        print(f"  inferred {name} = {v:.6g}")
    for name, v in s.field_errors.items():
        print(f"  {name}_error = {v:.6g}")
    return 0


def _sweep_cells(cfg: ExperimentConfig):
    sw = cfg.sweep
    methods = sw.methods or (cfg.train.method,)
    points = sw.points or (cfg.train.n_residual,)
    weights = sw.weights or (cfg.train.w_g,)
    for method in methods:
        for n in points:
            for w in weights:
                yield method, int(n), float(w)


def _cell_dir(method: str, n: int, w: float) -> str:
    return f"{method}_n{n}_w{w:g}"


def _run_cell_seed(args):
    cfg_text, out_root, method, n, w, seed, use_rar = args
    from .config import parse_config_text

    cfg = parse_config_text(cfg_text)
    tc = replace(cfg.train, method=method, n_residual=n, w_g=w, seed=seed)
    sub = Path(out_root) / _cell_dir(method, n, w) / f"seed{seed}"
    try:
        result, artifacts = _single_run(replace(cfg, train=tc), sub, use_rar)
        return (method, n, w, seed, result.summary(), [str(a) for a in artifacts], "")
    except Exception as e:  # noqa: BLE001 - cell failures recorded, sweep continues
        sub.mkdir(parents=True, exist_ok=True)
        err = f"{type(e).__name__}: {e}"
        (sub / "error.txt").write_text(err + "\n")
        return (method, n, w, seed, None, [str(sub / "error.txt")], err)


def cmd_sweep(cfg: ExperimentConfig, jobs: int = 1) -> int:
    if cfg.sweep is None or cfg.sweep.axes() == 0 and not cfg.sweep.seeds:
        raise ConfigError("sweep: at least one sweep axis required")
    out_dir = Path(cfg.out) / cfg.name
    out_dir.mkdir(parents=True, exist_ok=True)
    seeds = list(cfg.sweep.seeds) or list(range(10))
    cfg_text = serialize_config(cfg)
    tasks = [
        (cfg_text, str(out_dir), method, n, w, seed, False)
        for method, n, w in _sweep_cells(cfg)
        for seed in seeds
    ]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_run_cell_seed, tasks))
    else:
        rows = [_run_cell_seed(t) for t in tasks]

    artifacts = [Path(p) for r in rows for p in r[5]]
    # aggregate per cell
    cells: dict[tuple, list] = {}
    for method, n, w, seed, summary, _, err in rows:
        cells.setdefault((method, n, w), []).append((seed, summary, err))
    sweep_path = out_dir / "sweep.csv"
    stat_keys = ["u_error", "mean_abs_residual"]
    spec = get_problem(cfg.train.problem)
    deriv_keys = [f"du_{ax}_error" for ax in spec.axes]
    with open(sweep_path, "w", newline="") as fh:
        wr = csv.writer(fh)
        header = ["problem", "method", "n_points", "w", "n_seeds", "n_failed"]
        for k in stat_keys + deriv_keys + ["nu_e_rel_err", "K_rel_err", "k_error"]:
            header += [f"{k}_mean", f"{k}_std", f"{k}_median"]
        wr.writerow(header)
        for (method, n, w), entries in sorted(cells.items()):
            ok = [s for _, s, _ in entries if s is not None]
            row = [cfg.train.problem, method, str(n), _fmt(w), str(len(ok)), str(len(entries) - len(ok))]

            def stats(values):
                if not values:
                    return ["nan", "nan", "nan"]
                a = np.asarray(values, dtype=float)
                return [_fmt(a.mean()), _fmt(a.std()), _fmt(np.median(a))]

            row += stats([s["u_error"] for s in ok])
            row += stats([s["mean_abs_residual"] for s in ok])
            for ax in range(spec.dim):
                row += stats([s["derivative_errors"][ax] for s in ok])
            for pname, true in (("nu_e", 1e-3), ("K", 1e-3)):
                vals = [
                    abs(s["inferred"][pname] - true) / true
                    for s in ok
                    if pname in s.get("inferred", {})
                ]
                row += stats(vals)
            row += stats([s["field_errors"]["k"] for s in ok if "k" in s.get("field_errors", {})])
            wr.writerow(row)
    artifacts.append(sweep_path)
    _write_manifest(out_dir, cfg, artifacts, seeds)
    print(f"sweep {cfg.name}: {len(tasks)} runs -> {sweep_path}")
    return 0


def cmd_rar(cfg: ExperimentConfig) -> int:
    return cmd_run(cfg, use_rar=True)


def cmd_report(sweep_csv: Path, out_path: Path | None) -> int:
    with open(sweep_csv, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise ConfigError(f"{sweep_csv}: empty sweep")
    lines = [
        f"# Sweep report: {rows[0]['problem']}",
        "",
        "| method | points | w | u error (median) | u error (mean +- std) | mean abs f |",
        "|---|---|---|---|---|---|",
    ]
    for r in rows:
        lines.append(
            "| {method} | {n_points} | {w} | {med:.3e} | {mean:.3e} +- {std:.3e} | {f:.3e} |".format(
                method=r["method"],
                n_points=r["n_points"],
                w=float(r["w"]),
                med=float(r["u_error_median"]),
                mean=float(r["u_error_mean"]),
                std=float(r["u_error_std"]),
                f=float(r["mean_abs_residual_median"]),
            )
        )
    pinn = {
        (r["n_points"], r["w"]): float(r["u_error_median"])
        for r in rows
        if r["method"] in ("pinn", "nn")
    }
    gpinn = {
        (r["n_points"], r["w"]): float(r["u_error_median"])
        for r in rows
        if r["method"] in ("gpinn", "gnn")
    }
    shared = sorted(set(k[0] for k in pinn) & set(k[0] for k in gpinn))
    if shared:
        lines += ["", "## Gradient-enhanced vs baseline (median u error)", ""]
        lines += ["| points | baseline | gradient-enhanced | ratio |", "|---|---|---|---|"]
        for n in shared:
            p = min(v for (np_, _), v in pinn.items() if np_ == n)
            g = min(v for (np_, _), v in gpinn.items() if np_ == n)
            lines.append(f"| {n} | {p:.3e} | {g:.3e} | {p / g:.2f}x |")
    text = "\n".join(lines) + "\n"
    if out_path:
        Path(out_path).write_text(text)
        print(f"report -> {out_path}")
    else:
        print(text)
    return 0


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="gpinn", description=__doc__)
    ap.add_argument("--version", action="version", version=f"gpinn {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in ("run", "sweep", "rar"):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, type=Path)
        p.add_argument("--out", type=Path, default=None)
        p.add_argument("--seeds", type=str, default=None, help="comma-separated seed list")
        p.add_argument("--cache", type=Path, default=None)
        p.add_argument("--jobs", type=int, default=None)
        if name == "run":
            p.add_argument("--resume", action="store_true")
    p = sub.add_parser("report")
    p.add_argument("--sweep", required=True, type=Path, help="path to sweep.csv")
    p.add_argument("--out", type=Path, default=None)
    args = ap.parse_args(argv)

    try:
        if args.command == "report":
            return cmd_report(args.sweep, args.out)
        cfg = parse_config(args.config)
        if args.out:
            cfg = replace(cfg, out=str(args.out))
        if args.cache:
            cfg = replace(cfg, train=replace(cfg.train, cache_dir=str(args.cache)))
        if args.seeds:
            seeds = tuple(int(s) for s in args.seeds.split(","))
            if args.command == "sweep":
                sw = cfg.sweep or SweepConfig()
                cfg = replace(cfg, sweep=replace(sw, seeds=seeds))
            else:
                cfg = replace(cfg, train=replace(cfg.train, seed=seeds[0]))
        if args.command == "run" and args.resume:
            ck = Path(cfg.out) / cfg.name / "checkpoint.bin"
            if ck.exists():
                cfg = replace(cfg, train=replace(cfg.train, resume_from=str(ck)))
        if args.command == "run":
            return cmd_run(cfg)
        if args.command == "rar":
            return cmd_rar(cfg)
        n_jobs = args.jobs
        if n_jobs is None:
            import os

            n_jobs = os.cpu_count() or 1
        return cmd_sweep(cfg, jobs=n_jobs)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except FileNotFoundError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
