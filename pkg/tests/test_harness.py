import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from mesowigner import ConfigurationError, NumericalError
from mesowigner import harness
from mesowigner.cli import main
from mesowigner.config import Experiment, ExperimentConfig, load_config, parse_override
from mesowigner.harness import emit_plot_data, histogram_block, plot_rows, run


def write_toml(path, text):
    path.write_text(text)
    return str(path)


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


# -- configuration ----------------------------------------------------------------

def test_parse_override():
    assert parse_override("N=64") == ("N", 64)
    assert parse_override("ensemble.entry_law = \"rademacher\"") == ("ensemble.entry_law", "rademacher")
    assert parse_override("b_points=[[0, 1], [1, 1]]") == ("b_points", [[0, 1], [1, 1]])
    assert parse_override("function=sin") == ("function", "sin")
    with pytest.raises(ConfigurationError):
        parse_override("N64")


def test_load_config_with_overrides(tmp_path):
    path = write_toml(tmp_path / "c.toml", """
experiment = "resolvent_clt"
N = 32
b_points = [[0.0, 1.0]]
num_samples = 64
[ensemble]
entry_law = "gaussian"
master_seed = 5
[scale]
alpha = 0.4
""")
    cfg = load_config(path, ["N=48", "ensemble.entry_law=\"rademacher\""], "resolvent_clt", seed=9, workers=2)
    assert cfg.N == 48 and cfg.spec().dimension == 48
    assert cfg.ensemble.entry_law.value == "rademacher" and cfg.ensemble.master_seed == 9
    assert cfg.b_points == (1j,) and cfg.scale.alpha == 0.4 and cfg.workers == 2
    with pytest.raises(ConfigurationError):
        load_config(path, experiment="local_law")


@pytest.mark.parametrize("tree, field", [
    ({"experiment": "resolvent_clt", "N": 8, "b_points": [[0, 1]], "num_samples": 64, "colour": 1}, "colour"),
    ({"experiment": "resolvent_clt", "N": 8, "num_samples": 64}, "b_points"),
    ({"experiment": "resolvent_clt", "N": 8, "b_points": [[0, -1]], "num_samples": 64}, "b_points"),
    ({"experiment": "local_law", "N": 8, "z_grid": [[0, 1]], "num_samples": 64, "epsilon": 0.2,
      "num_workers": 0}, "num_workers"),
    ({"experiment": "warp_drive"}, "experiment"),
])
def test_config_errors_name_the_field(tmp_path, tree, field):
    overrides = [f"{k}={json.dumps(v)}" for k, v in tree.items()]
    with pytest.raises(ConfigurationError, match=field):
        load_config(None, overrides)


def test_config_errors_for_unreadable_files(tmp_path):
    with pytest.raises(ConfigurationError):
        load_config(str(tmp_path / "missing.toml"))
    with pytest.raises(ConfigurationError):
        load_config(write_toml(tmp_path / "bad.toml", "experiment = "))


def test_config_dict_excludes_execution_details():
    cfg = ExperimentConfig(experiment="theory_dump", num_workers=3, output_dir="x")
    d = cfg.to_dict()
    assert "num_workers" not in d and "output_dir" not in d
    assert cfg.digest() == ExperimentConfig(experiment="theory_dump", num_workers=1, output_dir="y").digest()


# -- command line -------------------------------------------------------------------

def test_cli_theory_dump(tmp_path, capsys):
    out = tmp_path / "td"
    assert main(["theory_dump", "--output", str(out), "--set", "grid_points=11"]) == 0
    assert json.loads(capsys.readouterr().out)["files"] == ["results.csv", "summary.json"]
    assert sorted(p.name for p in out.iterdir()) == ["manifest.json", "results.csv", "summary.json"]
    rows = read_csv(out / "results.csv")
    assert rows[0] == ["x", "rho", "E", "eta", "re_m", "im_m"]
    assert len(rows) == 1 + 33
    assert float(rows[1][1]) == 0.0 and float(rows[6][1]) == pytest.approx(1 / np.pi)


def test_cli_config_error_exit_code(tmp_path, capsys):
    assert main(["resolvent_clt", "--output", str(tmp_path), "--set", "N=16"]) == 2
    assert "b_points" in capsys.readouterr().err
    assert main(["cumulant_check", "--output", str(tmp_path), "--set", "h_law=\"gaussian\"",
                 "--set", "function=\"tan\"", "--set", "order=1"]) == 2
    assert not any(tmp_path.iterdir())


def test_cli_numerical_error_exit_code(tmp_path, monkeypatch, capsys):
    def fail(cfg):
        raise NumericalError("quadrature budget exhausted", achieved_error=1e-3)

    monkeypatch.setitem(harness.DISPATCH, Experiment.THEORY_DUMP, fail)
    out = tmp_path / "fail"
    assert main(["theory_dump", "--output", str(out)]) == 3
    assert "achieved_error" in capsys.readouterr().err
    # nothing is written when the experiment fails
    assert not out.exists() or not any(out.iterdir())


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "mesowigner", "cumulant_check", "--output", str(tmp_path),
                           "--set", "h_law=\"rademacher\"", "--set", "function=\"cube\"", "--set", "order=3"],
                          capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    res = json.loads((tmp_path / "summary.json").read_text())["results"]
    assert res == {"lhs": 1.0, "rhs": 1.0, "residual": 0.0}


# -- runs -------------------------------------------------------------------------------

def resolvent_cfg(out, **kw):
    base = dict(experiment="resolvent_clt", N=48, b_points=((0, 1), (1, 1), (0, 2)), num_samples=64,
                num_workers=1, output_dir=str(out), persist_samples=True, test_functions=("cauchy",))
    base.update(kw)
    return ExperimentConfig(**base)


def test_resolvent_run_outputs(tmp_path):
    manifest = run(resolvent_cfg(tmp_path))
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert set(summary) == {"experiment", "config", "results", "errors_bars", "provenance"}
    res = summary["results"]
    for key in ("cov_empirical", "cov_theory", "pseudo_cov_empirical"):
        assert np.asarray(res[key]).shape == (3, 3, 2)
    assert res["cov_theory"][0][0] == [0.5, 0.0]
    assert summary["provenance"]["config_hash"] == manifest["config_hash"]
    assert sorted(manifest["files"]) == ["results.csv", "samples.jsonl", "summary.json"]
    lines = (tmp_path / "samples.jsonl").read_text().splitlines()
    assert len(lines) == 64 and json.loads(lines[7])["sample_index"] == 7


def test_rerun_is_byte_identical(tmp_path):
    run(resolvent_cfg(tmp_path / "a"))
    run(resolvent_cfg(tmp_path / "b", num_workers=2))
    for name in ("summary.json", "results.csv", "samples.jsonl"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_histogram_plot_density_integrates_to_one(tmp_path):
    x = np.random.default_rng(0).normal(size=100_000)
    summary = {"experiment": "resolvent_clt", "results": {"histogram": histogram_block(x, 1.0)}}
    path = emit_plot_data(json.loads(harness.dumps(summary)), "histogram_vs_gaussian", tmp_path)
    rows = np.array(read_csv(path)[1:], dtype=float)
    width = rows[:, 1] - rows[:, 0]
    assert abs(np.sum(rows[:, 3] * width) - 1) <= 1e-3
    assert abs(np.sum(rows[:, 2]) / x.size - 1) <= 1e-3


def test_heatmap_and_kind_mismatch(tmp_path):
    run(resolvent_cfg(tmp_path, persist_samples=False))
    path = emit_plot_data(tmp_path / "summary.json", "covariance_heatmap")
    assert len(read_csv(path)) == 1 + 9
    with pytest.raises(ConfigurationError):
        emit_plot_data(tmp_path / "summary.json", "rate_loglog")
    with pytest.raises(ConfigurationError):
        emit_plot_data(tmp_path / "summary.json", "scatter")
    with pytest.raises(ConfigurationError):
        emit_plot_data({"results": {}}, "histogram_vs_gaussian")


def test_bias_rate_run_and_loglog(tmp_path):
    cfg = ExperimentConfig(experiment="bias_rate", N_list=(16, 32, 64), num_samples=64, num_workers=1,
                           output_dir=str(tmp_path))
    run(cfg)
    header, rows = plot_rows(json.loads((tmp_path / "summary.json").read_text()), "rate_loglog")
    assert header == ["N", "log_bias", "fit_value"]
    N = [r[0] for r in rows]
    assert N == sorted(N) == [16, 32, 64]


def test_cumulant_and_gp_runs(tmp_path):
    run(ExperimentConfig(experiment="cumulant_check", h_law="gaussian", function="sin", order=1,
                         output_dir=str(tmp_path / "c")))
    res = json.loads((tmp_path / "c" / "summary.json").read_text())["results"]
    assert abs(res["residual"]) <= 1e-8
    run(ExperimentConfig(experiment="gp_sample", b_points=((0, 1), (0, 2)), test_functions=("cauchy",),
                         num_samples=2000, output_dir=str(tmp_path / "g")))
    res = json.loads((tmp_path / "g" / "summary.json").read_text())["results"]
    assert res["cov_theory"][1][1] == [pytest.approx(0.125), 0.0]
    assert res["gram"][0][0] == pytest.approx(0.25, abs=1e-8)
    assert abs(res["cov_empirical"][0][0][0] - 0.5) <= 4 * 0.5 / np.sqrt(2000)


def test_hs_check_and_linstat_runs(tmp_path):
    run(ExperimentConfig(experiment="hs_check", N=8, test_functions=("cauchy",), num_samples=2, quad_tol=1e-6,
                         output_dir=str(tmp_path / "h")))
    res = json.loads((tmp_path / "h" / "summary.json").read_text())["results"]
    assert res["passed"] and res["max_abs_difference"] <= 1e-6
    run(ExperimentConfig(experiment="linstat_clt", N=32, test_functions=("cauchy", "gauss"), num_samples=64,
                         num_workers=1, output_dir=str(tmp_path / "l")))
    summary = json.loads((tmp_path / "l" / "summary.json").read_text())
    assert summary["experiment"] == "linstat_clt"
