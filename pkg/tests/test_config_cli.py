import json
import subprocess
import sys

import numpy as np
import pytest

from kifid import cli
from kifid.config import PRESETS, ConfigError, ExperimentConfig, load_config, parse_config, preset
from kifid.dynamics import TimeSeries
from kifid.experiments import cmd_fidelity, cmd_oracle_check, cmd_theory, sha256_file
from kifid.state import KickedIsingParams, configure_threads

SMALL = ["--sizes", "6", "8", "--t-max", "40", "--samples", "4", "--no-plot"]


# ---------------------------------------------------------------- config


def test_presets_carry_the_parameter_line():
    assert {k: (p.j_z, p.h_x, p.h_z) for k, p in PRESETS.items()} == {
        "integrable": (1.0, 1.4, 0.0),
        "intermediate": (1.0, 1.4, 0.4),
        "ergodic": (1.0, 1.4, 1.4),
    }


def test_defaults():
    cfg = ExperimentConfig()
    assert cfg.sizes == [12, 14, 16] and cfg.n_samples == 16 and cfg.t_max == 300
    assert cfg.delta(0.02, 24) == 0.02
    assert cfg.delta(0.04, 6) == pytest.approx(0.08)


def test_config_round_trip():
    cfg = preset("intermediate", sizes=[8, 10], seed=99, observable="Z:x0z", fidelity_mode="symmetrized")
    again = parse_config(cfg.to_json())
    assert again == cfg
    assert parse_config(again.to_json()).to_json() == cfg.to_json()


def test_manifest_is_a_valid_config(tmp_path):
    cfg = preset("ergodic", sizes=[6], t_max=10, n_samples=2, delta_primes=[0.04])
    cmd_fidelity(cfg, tmp_path, plot=False)
    assert load_config(tmp_path / "manifest.json") == cfg


def test_preset_key_in_document():
    cfg = parse_config('{"preset": "ergodic", "sizes": [8]}')
    assert cfg.h_z == 1.4 and cfg.sizes == [8]


@pytest.mark.parametrize(
    "text,line",
    [
        ('{\n  "sizes": [8],\n  "t_max": -3\n}', 3),
        ('{\n  "j_z": 1,\n\n  "mode": "sometimes"\n}', 4),
        ('{\n  "bogus": 1\n}', 2),
        ('{\n  "sizes": [8],\n  "t_max": 3,,\n}', 3),
        ('{\n  "preset": "chaotic"\n}', 2),
        ('{\n  "sizes": [14],\n  "mode": "exact_basis_sum"\n}', 3),
    ],
)
def test_config_errors_name_the_line(text, line):
    with pytest.raises(ConfigError) as err:
        parse_config(text)
    assert f"line {line}" in str(err.value.args[0])


def test_large_sizes_need_flag():
    with pytest.raises(ConfigError):
        ExperimentConfig(sizes=[18]).validate()
    ExperimentConfig(sizes=[18], allow_large=True).validate()


def test_bad_observable_rejected():
    with pytest.raises(ConfigError):
        ExperimentConfig(observable="Z:x0").validate()


# ---------------------------------------------------------------- runs


def _run(argv, capsys):
    code = cli.main(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


def test_correlations_writes_outputs(tmp_path, capsys):
    out = tmp_path / "c"
    code, stdout, _ = _run(["correlations", "--preset", "integrable", "--out", str(out), "--exact", "--sizes", "8", "--t-max", "30"], capsys)
    assert code in (0, 3)
    csv = out / "corr_integrable_L8.csv"
    png = out / "corr_integrable.png"
    assert csv.exists() and png.exists() and png.read_bytes()[:4] == b"\x89PNG"
    stats = json.loads((out / "corr_integrable_stats.json").read_text())
    assert stats["8"]["theory_D_per_site"] == pytest.approx(0.4851258895231711)
    assert set(stats["8"]) >= {"S_A", "D_A", "t_mix", "t_ave", "regime"}
    manifest = json.loads((out / "manifest.json").read_text())
    listed = {o["path"]: o["sha256"] for o in manifest["outputs"]}
    assert set(listed) == {p.name for p in out.iterdir()} - {"manifest.json"}
    for name, digest in listed.items():
        assert sha256_file(out / name) == digest
    assert manifest["factor_order"] == "kick-then-zz"
    assert str(csv) in stdout


def test_fidelity_zero_delta_is_flat(tmp_path):
    cfg = preset("ergodic", sizes=[6], t_max=20, n_samples=3, delta_primes=[0.0])
    res = cmd_fidelity(cfg, tmp_path, plot=False)
    s = TimeSeries.read_csv(tmp_path / "fid_ergodic_L6_d0.csv")
    assert np.all(s.values == 1.0)
    assert res.summary["L6_d0"]["plateau"] == 0.125


def test_fidelity_json_layout(tmp_path, capsys):
    code, _, _ = _run(["fidelity", "--preset", "integrable", "--out", str(tmp_path), *SMALL], capsys)
    doc = json.loads((tmp_path / "fid_integrable_fits.json").read_text())
    entry = doc["L8_d0.02"]
    assert {"regime", "tau", "t_star", "plateau", "fit", "theory"} <= set(entry)
    assert {"tau_fit", "rmse", "window"} <= set(entry["fit"]) or "error" in entry["fit"]
    assert "integrable" in entry["theory"]


def test_csv_byte_identical_across_runs_and_threads(tmp_path, capsys):
    a, b = tmp_path / "a", tmp_path / "b"
    _run(["--threads", "1", "fidelity", "--preset", "intermediate", "--out", str(a), *SMALL], capsys)
    _run(["--threads", "4", "fidelity", "--preset", "intermediate", "--out", str(b), *SMALL], capsys)
    configure_threads(None)
    names = sorted(p.name for p in a.glob("*.csv"))
    assert names and names == sorted(p.name for p in b.glob("*.csv"))
    for name in names:
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_rerun_from_manifest_reproduces(tmp_path, capsys):
    a = tmp_path / "a"
    _run(["correlations", "--preset", "ergodic", "--out", str(a), *SMALL], capsys)
    b = tmp_path / "b"
    _run(["correlations", "--config", str(a / "manifest.json"), "--out", str(b), "--no-plot"], capsys)
    for csv in a.glob("*.csv"):
        assert csv.read_bytes() == (b / csv.name).read_bytes()


def test_reproduce_writes_presets_and_script(tmp_path, capsys):
    code, _, _ = _run(["reproduce", "fig1", "--out", str(tmp_path), "--sizes", "6", "--t-max", "10", "--samples", "2", "--no-plot"], capsys)
    for name in PRESETS:
        assert (tmp_path / "fig1" / name / "manifest.json").exists()
    assert "plot for" in (tmp_path / "fig1" / "plot.gp").read_text()


# ---------------------------------------------------------------- exit codes


def test_exit_code_config_error(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text('{\n  "t_max": 0\n}')
    code, _, err = _run(["correlations", "--config", str(bad)], capsys)
    assert code == 2 and "line 2" in err
    code, _, _ = _run(["correlations", "--config", str(tmp_path / "missing.json")], capsys)
    assert code == 2
    code, _, _ = _run(["correlations", "--sizes", "20"], capsys)
    assert code == 2


def test_exit_code_unresolved(tmp_path, capsys):
    # at L=6 the finite-size plateau swamps the regime test
    code, _, err = _run(["correlations", "--preset", "ergodic", "--exact", "--sizes", "6", "--t-max", "30", "--out", str(tmp_path), "--no-plot"], capsys)
    assert code == 3 and "UNRESOLVED" in err


def test_oracle_check_exit_codes(capsys):
    code, out, _ = _run(["oracle-check", "--L", "5", "--t", "20", "--hz", "0.4"], capsys)
    assert code == 0 and json.loads(out)["passed"] is True
    code, out, _ = _run(["oracle-check", "--L", "5", "--t", "20", "--hz", "0.4", "--oracle-order", "zz-then-kick"], capsys)
    assert code == 4 and json.loads(out)["max_error"] > 1e-3
    code, _, _ = _run(["oracle-check", "--L", "10"], capsys)
    assert code == 2


def test_oracle_check_zero_delta():
    report = cmd_oracle_check(5, KickedIsingParams(1, 1.4, 1.4), 0.0, 15)
    assert report.passed


def test_theory_command(capsys):
    code, out, _ = _run(["theory", "--L", "24", "--delta-prime", "0.02"], capsys)
    doc = json.loads(out)
    assert code == 0
    assert doc["tau_ne"] == pytest.approx(14.65, abs=0.01)
    assert doc["t_star_ne"] == pytest.approx(59.8, abs=0.05)
    assert cmd_theory(KickedIsingParams(1, 1.4, 0), 20, 0.02)["plateau"] == 2**-10
    odd = cmd_theory(KickedIsingParams(np.pi / 4, np.pi / 4, 0), 12, 0.02, s_a=30.0, c_a=4.0)
    assert odd["D_sigma_x"] == pytest.approx(0, abs=1e-15)
    assert odd["tau_e"] > 0 and odd["delta_p"] > 0


def test_theory_singular_reported(capsys):
    code, out, _ = _run(["theory", "--hx", "0", "--hz", "0"], capsys)
    doc = json.loads(out)
    assert code == 0 and doc["D_sigma_x"] is None and doc["perturbed_fields"] is None


def test_console_script_help():
    res = subprocess.run([sys.executable, "-m", "kifid.cli", "--help"], capture_output=True, text=True)
    assert res.returncode == 0
    for sub in ("correlations", "fidelity", "theory", "oracle-check", "reproduce"):
        assert sub in res.stdout
