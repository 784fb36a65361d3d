import json
from pathlib import Path

import pytest

from homlab.cli import main
from homlab.harness import ConfigError, load_config, run_cell, run_property_suite

GOOD_CONFIG = """
[experiment]
dimension = 2
h = 0.25
r_list = 4 8
epsilon_list = 1.0
seeds = 0 1
nu_list = 0 p:3,4
x0_list = 0,0

[environment]
kind = checkerboard
a_range = 0.9 1.1
b_range = 0.0 0.05
c_range = 0.9 1.1
q = 0.05
c1 = 0.8
c2 = 1.2
seed = 3

[solver]
max_iters = 4000
grad_tol = 6.25e-5
restarts = 0

[output]
dir = {out}
format = both
"""


def write_config(tmp_path, text=GOOD_CONFIG, name="exp.ini"):
    out = tmp_path / "out"
    path = tmp_path / name
    path.write_text(text.format(out=out))
    return str(path), str(out)


def test_load_config_roundtrip(tmp_path):
    path, out = write_config(tmp_path)
    cfg = load_config(path)
    assert cfg.dimension == 2
    assert cfg.r_list == (4.0, 8.0)
    assert cfg.seeds == (0, 1)
    assert cfg.nu_list[0].nu == (0.0, 1.0)
    assert cfg.nu_list[1].integer_vector == (3, 4)
    assert cfg.env.kind == "checkerboard"
    assert cfg.solver.max_iters == 4000
    assert cfg.out_dir == out


def test_config_rejects_unresolvable_h(tmp_path):
    bad = GOOD_CONFIG.replace("epsilon_list = 1.0", "epsilon_list = 0.5")
    path, _ = write_config(tmp_path, bad)
    with pytest.raises(ConfigError):
        load_config(path)


def test_config_rejects_small_r(tmp_path):
    bad = GOOD_CONFIG.replace("r_list = 4 8", "r_list = 2 8")
    path, _ = write_config(tmp_path, bad)
    with pytest.raises(ConfigError):
        load_config(path)


def test_config_rejects_bad_environment(tmp_path):
    bad = GOOD_CONFIG.replace("a_range = 0.9 1.1", "a_range = 0 1.1")
    path, _ = write_config(tmp_path, bad)
    with pytest.raises(ConfigError):
        load_config(path)


def test_config_seed_override(tmp_path):
    path, _ = write_config(tmp_path)
    cfg = load_config(path, {"seed": 42})
    assert cfg.env.seed == 42


def test_run_cell_emits_deterministic_csv(tmp_path):
    path, out = write_config(tmp_path)
    cfg = load_config(path)
    run_cell(cfg)
    first = Path(out, "cell.csv").read_text().splitlines()
    run_cell(cfg)
    second = Path(out, "cell.csv").read_text().splitlines()
    # byte-identical up to the wall-clock column (the only timing field)
    strip = lambda lines: ["," .join(line.split(",")[:-1]) for line in lines]
    assert strip(first) == strip(second)
    assert first[0] == "nu_deg,r,seed,x0_index,m_hat,normalized,iters,grad_norm,wall_ms"
    assert len(first) == 1 + 2 * 2 * 2  # nu x r x seeds


def test_cli_cell_and_manifest(tmp_path):
    path, out = write_config(tmp_path)
    code = main(["cell", "--config", path])
    assert code == 0
    manifest = json.loads(Path(out, "manifest.json").read_text())
    assert manifest["command"] == "cell"
    assert len(manifest["records"]) == 8
    assert all("work_id" in rec and "seed" in rec for rec in manifest["records"])


def test_thread_count_does_not_change_results(tmp_path):
    path, out = write_config(tmp_path)
    strip = lambda text: ["," .join(line.split(",")[:-1]) for line in text.splitlines()]
    cfg = load_config(path, {"threads": 1})
    run_cell(cfg)
    serial = strip(Path(out, "cell.csv").read_text())
    cfg = load_config(path, {"threads": 4})
    run_cell(cfg)
    pooled = strip(Path(out, "cell.csv").read_text())
    assert serial == pooled


def test_cli_homogenize_and_sweep(tmp_path):
    text = GOOD_CONFIG.replace("seeds = 0 1", "seeds = 0").replace("nu_list = 0 p:3,4", "nu_list = 0 90")
    path, out = write_config(tmp_path, text)
    assert main(["homogenize", "--config", path]) == 0
    payload = json.loads(Path(out, "fhom.json").read_text())
    assert set(payload["f_hom"]) == {"0", "90"}
    for entry in payload["f_hom"].values():
        assert entry["estimate"] > 0

    assert main(["sweep", "--config", path]) == 0
    lines = Path(out, "sweep.csv").read_text().splitlines()
    assert lines[0] == "nu_deg,f_hom,stderr"
    assert len(lines) == 3


def test_cli_config_error_exit_code(tmp_path):
    path = tmp_path / "broken.ini"
    path.write_text("[experiment]\nh = 0.25\nepsilon_list = 0.5\n")
    assert main(["verify", "--config", str(path)]) == 2
    assert main(["cell", "--config", "/nonexistent.ini"]) == 2


def test_cli_sigma_writes_summary(tmp_path):
    text = GOOD_CONFIG.replace("epsilon_list = 1.0", "epsilon_list = 0.25").replace("h = 0.25", "h = 0.0625")
    path, out = write_config(tmp_path, text)
    assert main(["sigma", "--config", path]) == 0
    payload = json.loads(Path(out, "sigma.json").read_text())
    assert 0 < payload["sigma_minus"] <= payload["sigma_plus"]


def test_property_suite_small_config_passes(tmp_path):
    path, _ = write_config(tmp_path)
    cfg = load_config(path)
    results = run_property_suite(cfg)
    names = {r.name for r in results}
    assert {
        "gradient-consistency",
        "growth-sandwich",
        "growth-pointwise",
        "positivity",
        "mu-bounds",
        "subadditivity",
        "stationarity",
        "bounds",
        "monotonicity",
    } <= names
    failures = [r for r in results if not r.passed and not r.informational]
    assert failures == []


def test_property_suite_reports_positivity_outside_regime(tmp_path):
    text = GOOD_CONFIG.replace("q = 0.05", "q = 50.0").replace("b_range = 0.0 0.05", "b_range = 0.0 1.0")
    path, _ = write_config(tmp_path, text)
    cfg = load_config(path)
    result = next(r for r in run_property_suite(cfg) if r.name == "positivity")
    assert result.informational
    assert "outside regime" in result.detail
