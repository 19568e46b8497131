import json
import os
import subprocess
import sys

import numpy as np
import pytest

from dfrs.cli import main
from dfrs.config import grid_points, loads_config
from dfrs.errors import ConfigError, DimensionMismatch, DivisibilityError

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
CONFIGS = os.path.join(ROOT, "configs")


def write(tmp_path, text, name="exp.cfg"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


MINIMAL = """
experiment_id = minimal
seed = 4
trials = 200
field.kind = constant
field.values = 0.25
field.a = 0.5
noise.family = uniform
noise.b = 0.5
deployment.n = 20
eval.grid = 3
"""


def test_parse_minimal():
    cfg = loads_config(MINIMAL)
    assert cfg.N == 20 and cfg.c == 1.0 and cfg.trials == 200 and cfg.seed == 4
    assert cfg.eval_points.shape == (3, 1)


@pytest.mark.parametrize("text,line", [
    ("seed = 1\nfield.kind = blob\n", 2),
    ("seed = 1\n\n# comment\nbogus.key = 3\n", 4),
    ("trials = many\n", 1),
    ("seed = 1\nseed = 2\n", 2),
    ("noise.family = uniform\nnoise.b = -1\n", 1),
    ("just words\n", 1),
    ("field.kind = sinusoidal\nfield.amplitude = 1\n", 1),
])
def test_config_errors_are_line_localized(text, line):
    with pytest.raises(ConfigError) as exc:
        loads_config(text)
    assert exc.value.line == line
    assert str(exc.value).startswith(f"line {line}:")


def test_divisibility_and_dimension_errors():
    with pytest.raises(DivisibilityError):
        loads_config("field.values = 1\npartition.l = 2\ndeployment.N = 7\n")
    with pytest.raises(DivisibilityError):
        loads_config("field.values = 1\npartition.m = 2\ndeployment.n = 2\n")  # T=1, M=2
    with pytest.raises(DimensionMismatch):
        loads_config("field.kind = lipschitz_linear\nfield.slope = 1, 1\nfield.offsets = 0\nfield.a = 2\npartition.d = 1\n")


def test_missing_seed_is_generated():
    cfg = loads_config("field.values = 0.1\n")
    assert cfg.seed_generated and isinstance(cfg.seed, int)
    assert loads_config("field.values = 0.1\n", seed_override=9).seed == 9


def test_per_snapshot_broadcast_and_points():
    cfg = loads_config("field.values = 0.2\nfield.T = 4\nfield.d = 2\npartition.m = 2\n"
                       "eval.points = 0.1, 0.2; 1, 1\neval.snapshots = 2, 4\n")
    assert cfg.field.T == 4 and cfg.eval_snapshots == (2, 4)
    np.testing.assert_array_equal(cfg.eval_points, [[0.1, 0.2], [1, 1]])


def test_grid_points():
    pts = grid_points(2, 3)
    assert pts.shape == (9, 2)
    assert {tuple(p) for p in pts} == {(a, b) for a in (0, 0.5, 1) for b in (0, 0.5, 1)}


def test_example_configs_parse():
    for name in os.listdir(CONFIGS):
        loads_config(open(os.path.join(CONFIGS, name)).read())


def test_reference_config_reports_864():
    cfg = loads_config(open(os.path.join(CONFIGS, "sinusoidal_16x9.cfg")).read())
    assert (cfg.N, cfg.partition.L, cfg.partition.M) == (864, 16, 9)


def run_cli(*args):
    return main(list(args))


def test_simulate_minimal(tmp_path):
    cfg = write(tmp_path, MINIMAL)
    out = tmp_path / "out"
    assert run_cli("simulate", "--config", cfg, "--out", str(out)) == 0
    lines = (out / "results.csv").read_text().splitlines()
    assert lines[0] == "experiment_id,t,x_coords,trials,mse,mse_stderr,bias,var,bound_local,bound_global"
    assert len(lines) == 1 + 3
    man = json.loads((out / "manifest.json").read_text())
    assert man["N"] == 20 and man["seed"] == 4
    assert set(man["artifacts"]) == {"results.csv", "deployment.csv", "schedule.csv", "estimate.csv", "eval_grid.csv"}
    assert (out / "deployment.csv").read_text().splitlines()[0] == "sensor_id,x_1,supercell,subcell"
    assert (out / "eval_grid.csv").read_text().splitlines()[0] == "t,x_1,s_true,s_hat,abs_err"
    assert (out / "estimate.csv").read_text().splitlines()[0] == "t,supercell_j,s_hat"


def test_simulate_is_reproducible(tmp_path):
    cfg = write(tmp_path, MINIMAL)
    for d in ("a", "b"):
        assert run_cli("simulate", "--config", cfg, "--out", str(tmp_path / d)) == 0
    ma = json.loads((tmp_path / "a" / "manifest.json").read_text())["artifacts"]
    mb = json.loads((tmp_path / "b" / "manifest.json").read_text())["artifacts"]
    assert ma == mb
    assert run_cli("simulate", "--config", cfg, "--out", str(tmp_path / "c"), "--seed", "5") == 0
    mc = json.loads((tmp_path / "c" / "manifest.json").read_text())
    assert mc["seed"] == 5 and mc["artifacts"]["results.csv"] != ma["results.csv"]


def test_csv_uses_17_digits(tmp_path):
    cfg = write(tmp_path, MINIMAL)
    assert run_cli("bounds", "--config", cfg, "--out", str(tmp_path / "o")) == 0
    row = (tmp_path / "o" / "bounds.csv").read_text().splitlines()[1].split(",")
    # c = 1, L = M = 1, N = 20: variance term 1/20
    assert row[4] == "0.050000000000000003"


def test_exit_codes(tmp_path):
    bad = write(tmp_path, "field.kind = nope\n", "bad.cfg")
    assert run_cli("simulate", "--config", bad, "--out", str(tmp_path / "x")) == 2
    div = write(tmp_path, "field.values = 1\npartition.l = 2\ndeployment.N = 7\n", "div.cfg")
    assert run_cli("simulate", "--config", div, "--out", str(tmp_path / "x")) == 3
    assert run_cli("simulate", "--config", str(tmp_path / "missing.cfg"), "--out", str(tmp_path / "x")) == 2
    # uniform noise has no finite Fisher information, which exercises the numerical-error path
    from dfrs import cli
    num = write(tmp_path, MINIMAL, "num.cfg")

    def boom(run):
        from dfrs.analysis import cramer_rao_bound
        cramer_rao_bound(run.cfg.noise, 10)

    cli.cmd_bounds, saved = boom, cli.cmd_bounds
    try:
        assert run_cli("bounds", "--config", num, "--out", str(tmp_path / "x")) == 4
    finally:
        cli.cmd_bounds = saved


def test_bounds_constant_field(tmp_path):
    out = tmp_path / "b"
    assert run_cli("bounds", "--config", os.path.join(CONFIGS, "bounds_constant.cfg"), "--out", str(out)) == 0
    rows = [r.split(",") for r in (out / "bounds.csv").read_text().splitlines()[1:]]
    M, c, N = 9, 2.0, 864
    for r in rows:
        assert float(r[4]) == pytest.approx(M * c * c / N)
        assert float(r[5]) == float(r[4]) == float(r[6])


def test_equivalence_command(tmp_path):
    cfg = write(tmp_path, "seed = 3\nequivalence.c = 1\nequivalence.points = 5\nequivalence.trials = 20000\n")
    out = tmp_path / "e"
    assert run_cli("equivalence", "--config", cfg, "--out", str(out)) == 0
    rows = [r.split(",") for r in (out / "equivalence.csv").read_text().splitlines()[1:]]
    assert len(rows) == 5
    assert float(rows[0][5]) < float(rows[0][6])


def test_deploy_command(tmp_path):
    cfg = write(tmp_path, "seed = 3\npartition.l = 2\ndeploy.N = 100\ndeploy.trials = 2000\n")
    out = tmp_path / "d"
    assert run_cli("deploy", "--config", cfg, "--out", str(out)) == 0
    header, row = [r.split(",") for r in (out / "deploy.csv").read_text().splitlines()]
    rec = dict(zip(header, row))
    assert float(rec["empirical_failure"]) <= float(rec["sanov_bound"])
    assert float(rec["exact_failure"]) <= float(rec["sanov_bound"])


def test_scaling_command(tmp_path):
    cfg = write(tmp_path, MINIMAL + "scaling.N = 100, 400, 1600, 6400\nscaling.trials = 300\n")
    out = tmp_path / "s"
    assert run_cli("scaling", "--config", cfg, "--out", str(out)) == 0
    lines = (out / "scaling.csv").read_text().splitlines()
    assert lines[0] == "N,L,M,worst_mse,bound,slope_running"
    assert len(lines) == 5
    slope = json.loads((out / "manifest.json").read_text())["slope"]
    assert slope == pytest.approx(-1, abs=0.15)


def test_dfrs_out_env_and_entry_point(tmp_path):
    cfg = write(tmp_path, MINIMAL)
    env = dict(os.environ, DFRS_OUT=str(tmp_path / "envout"))
    proc = subprocess.run([sys.executable, "-m", "dfrs.cli", "simulate", "--config", cfg],
                          env=env, capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert (tmp_path / "envout" / "manifest.json").exists()
