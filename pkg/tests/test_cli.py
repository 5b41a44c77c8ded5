import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from gpinn.cli import main
from gpinn.config import (
    ConfigError,
    PRESETS,
    expand_preset,
    parse_config_text,
    serialize_config,
)

TINY = """
[experiment]
name = "tiny"
out = "{out}"

[problem]
name = "poisson-1d"

[train]
method = "gpinn"
depth = 3
width = 6
iterations = 60
seed = 1
n_residual = 6
w_g = 0.01
snapshot_every = 30
"""

TINY_RAR = TINY + """
[rar]
m = 2
rounds = 2
pool = 32
round_iterations = 20
round_lbfgs_iter = 0
"""


def test_presets_match_hyperparameter_table():
    rows = {
        "3.1": ("func-approx", 4, 20, "adam", 1e-3, 10_000),
        "3.2.1": ("poisson-1d", 4, 20, "adam", 1e-3, 20_000),
        "3.2.2": ("diff-react-fwd", 4, 20, "adam", 1e-4, 100_000),
        "3.3.1": ("brinkman", 4, 20, "adam", 1e-3, 50_000),
        "3.3.2": ("react-rate-inv", 4, 20, "adam", 1e-4, 200_000),
        "3.4.1": ("burgers", 4, 32, "adam-then-lbfgs", 1e-3, 20_000),
        "3.4.2": ("allen-cahn", 5, 64, "adam-then-lbfgs", 1e-3, 20_000),
    }
    for name, (prob, depth, width, opt, lr, iters) in rows.items():
        cfg, _ = expand_preset(name)
        assert cfg.problem == prob
        assert (cfg.depth, cfg.width, cfg.optimizer) == (depth, width, opt)
        assert (cfg.learning_rate, cfg.iterations) == (lr, iters)


def test_rar_presets_match_paper_schedules():
    _, rar1 = expand_preset("3.4.1")
    assert (rar1.m, rar1.rounds) == (10, 40)
    cfg1, _ = expand_preset("3.4.1")
    assert cfg1.n_residual == 1500  # 1500 + 40*10 = 1900 total
    _, rar2 = expand_preset("3.4.2")
    assert (rar2.m, rar2.rounds) == (30, 100)
    cfg2, _ = expand_preset("3.4.2")
    assert cfg2.n_residual == 500  # 500 + 100*30 = 3500 total


def test_config_round_trip_identity():
    cfg = parse_config_text(TINY.format(out="/tmp/x") + "\n[sweep]\npoints=[4,6]\nweights=[0.01]\nmethods=[\"pinn\",\"gpinn\"]\nseeds=[0,1]\n")
    text = serialize_config(cfg)
    again = parse_config_text(text)
    assert again == cfg
    assert serialize_config(again) == text


def test_config_preset_expansion_and_override():
    cfg = parse_config_text(
        '[experiment]\nname="x"\npreset="3.2.1"\n\n[train]\niterations = 777\n'
    )
    assert cfg.train.problem == "poisson-1d"
    assert cfg.train.iterations == 777
    assert cfg.train.depth == 4 and cfg.train.width == 20


def test_sweep_defaults_to_ten_seeds():
    cfg = parse_config_text(
        '[problem]\nname="poisson-1d"\n\n[sweep]\nmethods=["pinn"]\n'
    )
    assert cfg.sweep.seeds == tuple(range(10))


def test_config_errors_name_the_field():
    with pytest.raises(ConfigError, match="problem.name"):
        parse_config_text('[train]\nmethod="gpinn"\n')
    with pytest.raises(ConfigError, match="problem.name"):
        parse_config_text('[problem]\nname="not-a-problem"\n')
    with pytest.raises(ConfigError, match="train.depth"):
        parse_config_text('[problem]\nname="poisson-1d"\n\n[train]\ndepth=0\n')
    with pytest.raises(ConfigError, match="train.bogus"):
        parse_config_text('[problem]\nname="poisson-1d"\n\n[train]\nbogus=1\n')
    with pytest.raises(ConfigError, match="preset"):
        parse_config_text('[experiment]\npreset="9.9"\n')


def test_cmd_run_artifacts_and_determinism(tmp_path):
    cfgfile = tmp_path / "tiny.toml"
    cfgfile.write_text(TINY.format(out=tmp_path / "out1"))
    assert main(["run", "--config", str(cfgfile)]) == 0
    run_dir = tmp_path / "out1" / "tiny"
    metrics = (run_dir / "metrics.csv").read_bytes()
    result = json.loads((run_dir / "result.json").read_text())
    assert result["problem"] == "poisson-1d"
    assert "u_error" in result
    header = metrics.decode().splitlines()[0]
    assert header.startswith("iteration,loss_total,loss_f")
    # rerun into a second directory: metrics.csv byte-identical
    cfgfile2 = tmp_path / "tiny2.toml"
    cfgfile2.write_text(TINY.format(out=tmp_path / "out2"))
    assert main(["run", "--config", str(cfgfile2)]) == 0
    metrics2 = (tmp_path / "out2" / "tiny" / "metrics.csv").read_bytes()
    assert metrics == metrics2


def test_cli_invalid_problem_exit_code_2(tmp_path, capsys):
    bad = tmp_path / "bad.toml"
    bad.write_text('[problem]\nname = "nope"\n')
    rc = main(["run", "--config", str(bad)])
    assert rc == 2
    assert "problem.name" in capsys.readouterr().err


def test_cli_entrypoint_subprocess(tmp_path):
    cfgfile = tmp_path / "tiny.toml"
    cfgfile.write_text(TINY.format(out=tmp_path / "out"))
    proc = subprocess.run(
        [sys.executable, "-m", "gpinn.cli", "run", "--config", str(cfgfile)],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == 0, proc.stderr
    assert "u_error" in proc.stdout


def test_cmd_rar_points_files(tmp_path):
    cfgfile = tmp_path / "rar.toml"
    cfgfile.write_text(TINY_RAR.format(out=tmp_path / "out"))
    assert main(["rar", "--config", str(cfgfile)]) == 0
    run_dir = tmp_path / "out" / "tiny"
    files = sorted(p.name for p in run_dir.glob("points_round_*.csv"))
    assert files == ["points_round_000.csv", "points_round_001.csv", "points_round_002.csv"]
    last = (run_dir / "points_round_002.csv").read_text().splitlines()
    assert last[0] == "x,round_added"
    assert len(last) - 1 == 6 + 2 * 2  # initial + rounds * m


def test_cmd_rar_requires_rar_section(tmp_path):
    cfgfile = tmp_path / "norar.toml"
    cfgfile.write_text(TINY.format(out=tmp_path / "out"))
    assert main(["rar", "--config", str(cfgfile)]) == 2


def test_rar_zero_rounds_behaves_like_run(tmp_path):
    base = tmp_path / "a.toml"
    base.write_text(TINY.format(out=tmp_path / "outA"))
    main(["run", "--config", str(base)])
    rar0 = tmp_path / "b.toml"
    rar0.write_text(
        TINY.format(out=tmp_path / "outB")
        + "[rar]\nm = 2\nrounds = 0\npool = 32\nround_iterations = 10\n"
    )
    main(["rar", "--config", str(rar0)])
    ma = (tmp_path / "outA" / "tiny" / "metrics.csv").read_bytes()
    mb = (tmp_path / "outB" / "tiny" / "metrics.csv").read_bytes()
    assert ma == mb


def test_manifest_lists_every_artifact(tmp_path):
    cfgfile = tmp_path / "rar.toml"
    cfgfile.write_text(TINY_RAR.format(out=tmp_path / "out"))
    main(["rar", "--config", str(cfgfile)])
    run_dir = tmp_path / "out" / "tiny"
    manifest = json.loads((run_dir / "manifest.json").read_text())
    on_disk = {
        str(p.relative_to(run_dir))
        for p in run_dir.rglob("*")
        if p.is_file() and p.name != "manifest.json"
    }
    assert set(manifest["artifacts"]) == on_disk


def test_cmd_sweep_aggregates(tmp_path):
    cfgfile = tmp_path / "sweep.toml"
    cfgfile.write_text(
        TINY.format(out=tmp_path / "out")
        + '[sweep]\npoints = [4, 6]\nmethods = ["pinn", "gpinn"]\nseeds = [0, 1]\n'
    )
    assert main(["sweep", "--config", str(cfgfile), "--jobs", "1"]) == 0
    out_dir = tmp_path / "out" / "tiny"
    lines = (out_dir / "sweep.csv").read_text().splitlines()
    assert len(lines) == 1 + 4  # header + 2 methods x 2 point counts
    assert lines[0].startswith("problem,method,n_points,w,n_seeds,n_failed")
    for row in lines[1:]:
        assert row.split(",")[4] == "2"  # two seeds aggregated
    # per-cell directories with per-seed runs
    assert (out_dir / "pinn_n4_w0.01" / "seed0" / "metrics.csv").exists()
    manifest = json.loads((out_dir / "manifest.json").read_text())
    on_disk = {
        str(p.relative_to(out_dir))
        for p in out_dir.rglob("*")
        if p.is_file() and p.name != "manifest.json"
    }
    assert set(manifest["artifacts"]) == on_disk


def test_cmd_report(tmp_path):
    cfgfile = tmp_path / "sweep.toml"
    cfgfile.write_text(
        TINY.format(out=tmp_path / "out")
        + '[sweep]\nmethods = ["pinn", "gpinn"]\nseeds = [0]\n'
    )
    main(["sweep", "--config", str(cfgfile), "--jobs", "1"])
    sweep_csv = tmp_path / "out" / "tiny" / "sweep.csv"
    report = tmp_path / "report.md"
    assert main(["report", "--sweep", str(sweep_csv), "--out", str(report)]) == 0
    text = report.read_text()
    assert "| method |" in text
    assert "gpinn" in text and "pinn" in text
    assert "ratio" in text
