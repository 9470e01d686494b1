import csv
from math import pi

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from wpdsim import cli
from wpdsim.cli import ConfigError, RunConfig, defaults, load_config, main, parse_config_text, run_experiment, write_config


def test_empty_config_gives_defaults():
    cfg = parse_config_text("")
    assert cfg == defaults()
    assert cfg.device.chi_qs == pytest.approx(2 * pi * -1.64e6)
    assert cfg.hilbert.fock_dim == 40
    assert cfg.thetas == (pi / 4,)


def test_zero_chi_rejected():
    with pytest.raises(ConfigError, match="chi_mhz"):
        parse_config_text("[device]\nchi_mhz = 0\n")


def test_alpha_needs_larger_truncation():
    with pytest.raises(ConfigError, match="fock_dim"):
        parse_config_text("[protocol]\nalpha = 5\n")
    parse_config_text("[protocol]\nalpha = 5\n[hilbert]\nfock_dim = 64\n")


@pytest.mark.parametrize(
    "text, field",
    [
        ("[device]\nbogus = 1\n", "device.bogus"),
        ("[nowhere]\nx = 1\n", "nowhere"),
        ("[protocol]\nexperiment = teleport\n", "protocol.experiment"),
        ("[protocol]\nmode = fast\n", "protocol.mode"),
        ("[protocol]\ngate_timing = before\n", "protocol.mode"),
        ("[device]\nt1_us = -3\n", "device.t1_us"),
        ("[device]\nreadout_fidelity_e = 1.2\n", "device.readout_fidelity_e"),
        ("[hilbert]\nstrict = maybe\n", "hilbert.strict"),
    ],
)
def test_bad_fields_are_named(text, field):
    with pytest.raises(ConfigError, match=field.replace(".", r"\.")):
        parse_config_text(text)


def test_parse_error_reports_line():
    with pytest.raises(ConfigError, match="line 3"):
        parse_config_text("[device]\nchi_mhz = -1.64\nthis is not ini\n")
    with pytest.raises(ConfigError, match=r"line 2"):
        parse_config_text("[device]\nt1_us = twelve\n")


def test_missing_file():
    with pytest.raises(ConfigError):
        load_config("/nonexistent/config.ini")


@given(
    st.floats(-5, -0.1),
    st.floats(1, 100),
    st.lists(st.floats(0, 0.5), min_size=1, max_size=4),
    st.sampled_from(["ideal", "noisy"]),
    st.booleans(),
    st.integers(2, 200),
)
def test_round_trip(chi, t1, thetas, mode, confusion, points):
    cfg = defaults().with_overrides(
        device__chi_mhz=chi,
        device__t1_us=t1,
        protocol__theta=tuple(thetas),
        protocol__mode=mode,
        protocol__readout_confusion=confusion,
        protocol__phi_points=points,
    )
    assert parse_config_text(write_config(cfg)) == cfg


def test_config_files_load():
    from pathlib import Path

    for path in sorted(Path(__file__).parent.parent.joinpath("configs").glob("*.ini")):
        cfg = load_config(path)
        assert cfg.experiment in cli.EXPERIMENTS


def test_summary_format():
    res = cli.Results()
    res.add("a", 0.5, 0.5, 0.01)
    res.add("b", 0.7, 0.5, 0.01)
    res.add("c", 1.0)
    text = cli.emit_summary(res)
    lines = text.splitlines()
    assert lines[0] == "metric, value, target, tol, status"
    assert lines[1].endswith("PASS") and lines[2].endswith("FAIL") and lines[3].endswith("INFO")
    assert not res.ok
    with pytest.raises(ValueError):
        cli.emit_summary(cli.Results())


def _run(tmp_path, *args):
    return main([*args, "--output-dir", str(tmp_path)])


def test_ramsey_writes_one_csv_per_theta(tmp_path, capsys):
    ini = tmp_path / "r.ini"
    ini.write_text("[protocol]\ntheta = 0, 0.25, 0.5\n")
    assert _run(tmp_path, "ramsey", "--config", str(ini)) == 0
    names = sorted(p.name for p in tmp_path.glob("ramsey_theta_*.csv"))
    assert names == ["ramsey_theta_0p25pi.csv", "ramsey_theta_0p5pi.csv", "ramsey_theta_0pi.csv"]
    with open(tmp_path / "ramsey_theta_0p25pi.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == cli.CURVE_HEADER.split(",")
    assert len(rows) == 42
    # 12 significant digits
    assert all(len(r[2].replace(".", "").replace("-", "").lstrip("0").split("e")[0]) <= 12 for r in rows[1:])
    out = capsys.readouterr().out
    assert "[protocol]" in out and "metric, value" in out
    assert (tmp_path / "summary.txt").exists() and (tmp_path / "effective_config.ini").exists()
    assert load_config(tmp_path / "effective_config.ini")["protocol.theta"] == (0.0, 0.25, 0.5)


def test_outputs_are_byte_identical(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert _run(a, "delayed-choice") == 0
    assert _run(b, "delayed-choice", "--jobs", "2") == 0
    for f in a.iterdir():
        if f.name == "effective_config.ini":
            continue  # differs only in output_path
        assert f.read_bytes() == (b / f.name).read_bytes()


def test_env_var_sets_output_dir(tmp_path, monkeypatch):
    monkeypatch.setenv(cli.OUTPUT_ENV, str(tmp_path / "env"))
    assert main(["eraser"]) == 0
    assert (tmp_path / "env" / "eraser.csv").exists()


def test_exit_codes(tmp_path, capsys):
    bad = tmp_path / "bad.ini"
    bad.write_text("[device]\nchi_mhz = 0\n")
    assert _run(tmp_path, "ramsey", "--config", str(bad)) == 2
    assert "chi_mhz" in capsys.readouterr().err
    assert _run(tmp_path, "ramsey", "--jobs", "0") == 2
    # a tolerance failure is exit code 1: ideal Ramsey at a coarse truncation misses the exact law
    loose = tmp_path / "loose.ini"
    loose.write_text("[hilbert]\nfock_dim = 12\nstrict = false\n")
    assert _run(tmp_path / "o", "ramsey", "--config", str(loose)) == 1


def test_wigner_outputs(tmp_path):
    assert _run(tmp_path, "wigner") == 0
    text = (tmp_path / "summary.txt").read_text()
    assert "wigner_has_negativity, 1, 1, 0, PASS" in text
    with open(tmp_path / "wigner.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["x", "y", "W"] and len(rows) == 61 * 61 + 1
    assert min(float(r[2]) for r in rows[1:]) < 0
    rec = np.loadtxt(tmp_path / "wigner_reconstruction.csv", delimiter=",", skiprows=1)
    assert rec.shape == (400, 4)


def test_ideal_experiments_pass(tmp_path):
    for name in ("eraser-after-on", "which-path", "cat-prep"):
        assert _run(tmp_path / name, name) == 0, name
    joint = (tmp_path / "which-path" / "which_path_joint.csv").read_text().splitlines()
    assert joint[0] == "phi_rad,outcome_sequence,probability,mode"


def test_run_experiment_returns_results(tmp_path):
    cfg = defaults().with_overrides(protocol__experiment="cat-prep", protocol__output_path=str(tmp_path))
    res = run_experiment(cfg)
    assert res.ok and "cat_density.csv" in res.files
    assert isinstance(cfg, RunConfig)
