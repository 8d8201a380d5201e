import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from eulerlab import cli
from eulerlab.errors import BlowupError, ConfigError, ResolutionError
from eulerlab.grid import Grid2D, ScalarField2D, write_field_csv


def _summary(out):
    return json.loads((out / "summary.json").read_text())


@settings(max_examples=40, deadline=None)
@given(
    st.sampled_from(sorted(cli.COMMANDS)),
    st.floats(0.01, 0.99, allow_nan=False),
    st.integers(1, 50),
)
def test_config_round_trip_is_byte_identical(command, alpha, cadence):
    data = {"command": command}
    if command == "shear-flow":
        data["params"] = {"alpha": alpha}
    if command in cli.CHECKPOINTED:
        data["checkpoint_every"] = cadence
    text = cli.ExperimentConfig.from_dict(data).to_json()
    again = cli.ExperimentConfig.from_json(text)
    assert again.to_json() == text
    assert cli.ExperimentConfig.from_json(again.to_json()) == again


@pytest.mark.parametrize(
    "data",
    [
        {"command": "shear-flow", "colour": 1},
        {"command": "shear-flow", "params": {"beta": 1}},
        {"command": "inflate", "resolution": {"grid": 4}},
        {"command": "nope"},
        {"command": "shear-flow", "checkpoint_every": 3},
        {"command": "shear-flow", "deterministic": False},
        {"command": "inflate", "checkpoint_every": 0},
        {"command": "shear-flow", "params": {"alpha": "half"}},
    ],
)
def test_bad_configs_rejected(data):
    with pytest.raises(ConfigError):
        cli.ExperimentConfig.from_dict(data)


def test_flags_override_config(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(cli.ExperimentConfig.from_dict({"command": "shear-flow", "params": {"alpha": 0.25, "eps": 1e-6}}).to_json())
    args = cli.build_parser().parse_args(["shear-flow", "--config", str(path), "--alpha", "0.75"])
    cfg = cli.config_from_args(args)
    assert cfg.params["alpha"] == 0.75 and cfg.params["eps"] == 1e-6


def test_config_for_other_command_rejected(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(cli.ExperimentConfig.from_dict({"command": "norms"}).to_json())
    assert cli.main(["shear-flow", "--config", str(path), "--out", str(tmp_path / "o")]) == cli.EXIT_CONFIG


def test_shear_flow_example(tmp_path):
    out = tmp_path / "shear"
    code = cli.main(["shear-flow", "--alpha", "0.5", "--eps", "1e-3", "--times", "0.001,0.01,0.1,1", "--out", str(out)])
    assert code == 0
    s = _summary(out)
    assert all(abs(q - 2.0) < 1e-12 for q in s["quotient_at_points"])
    assert s["initial_gap"] <= 1e-3 and s["residual_max"] < 1e-10
    assert (out / "series.csv").read_text().startswith("t,")


def test_lemma51_example(tmp_path):
    out = tmp_path / "l51"
    assert cli.main(["lemma51-scan", "--M", "10", "--r", "2.5", "--q", "1.5", "--N", "4,8,16,32", "--out", str(out)]) == 0
    s = _summary(out)
    assert s["m_scaling_ratio"] == pytest.approx(4.0, abs=1e-10)
    rows = (out / "series.csv").read_text().splitlines()
    assert len(rows) == 5


def test_malformed_config_writes_nothing(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text('{"command": "shear-flow", "params": {"alpha": 0.5}, "extra": true}')
    out = tmp_path / "never"
    assert cli.main(["shear-flow", "--config", str(bad), "--out", str(out)]) == cli.EXIT_CONFIG
    assert not out.exists()
    bad.write_text("{not json")
    assert cli.main(["shear-flow", "--config", str(bad), "--out", str(out)]) == cli.EXIT_CONFIG
    assert not out.exists()


@pytest.mark.parametrize(
    "exc, code",
    [(ResolutionError("x"), cli.EXIT_RESOLUTION), (BlowupError("x"), cli.EXIT_BLOWUP), (ConfigError("x"), cli.EXIT_CONFIG)],
)
def test_exit_codes_are_distinct(monkeypatch, tmp_path, exc, code):
    def boom(config):
        raise exc

    monkeypatch.setitem(cli.RUNNERS, "shear-flow", boom)
    out = tmp_path / "o"
    assert cli.main(["shear-flow", "--out", str(out)]) == code
    assert not out.exists()


def test_output_root_from_environment(monkeypatch, tmp_path):
    monkeypatch.setenv(cli.OUTPUT_ROOT_ENV, str(tmp_path))
    assert cli.main(["lemma51-scan", "--N", "1,2"]) == 0
    assert (tmp_path / "lemma51-scan" / "summary.json").exists()


def test_norms_on_field_file(tmp_path):
    g = Grid2D(4.0, 128)
    x1, x2 = g.coords()
    path = tmp_path / "gauss.csv"
    write_field_csv(path, ScalarField2D(g, np.exp(-np.pi * (x1**2 + x2**2))))
    out = tmp_path / "n"
    assert cli.main(["norms", "--field", str(path), "--norm", "lp", "--p", "2", "--out", str(out)]) == 0
    assert _summary(out)["norm"]["value"] == pytest.approx(0.5**0.5, rel=1e-10)
    assert cli.main(["norms", "--field", str(path), "--norm", "sup", "--out", str(out)]) == 0
    assert _summary(out)["norm"]["value"] == pytest.approx(1.0)
    assert cli.main(["norms", "--field", str(tmp_path / "missing.csv"), "--out", str(tmp_path / "m")]) == cli.EXIT_CONFIG


def test_validate_finest_bump_warning(capsys):
    assert cli.main(["validate", "--N", "32", "--grid-n", "256"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert any(line.startswith("[WARNING] finest-bump") for line in lines)


def test_validate_nyquist_pass(capsys):
    argv = ["validate", "--N", "16", "--n", "8", "--with-beta", "true", "--grid-n", "4096", "--grid-half-width", "4"]
    assert cli.main(argv) == 0
    lines = capsys.readouterr().out.splitlines()
    nyq = [line for line in lines if "nyquist" in line]
    assert nyq and nyq[0].startswith("[OK")
    assert "k = 576" in nyq[0]


def test_validate_cfl_warning(capsys):
    assert cli.main(["validate", "--dt", "1000"]) == 0
    lines = capsys.readouterr().out.splitlines()
    cfl = [line for line in lines if "cfl" in line][0]
    assert cfl.startswith("[WARNING") and "suggested dt" in cfl
    assert any("MiB" in line for line in lines)


def test_validate_config_file(tmp_path, capsys):
    path = tmp_path / "inflate.json"
    path.write_text(cli.ExperimentConfig.from_dict({"command": "inflate", "params": {"N": 4}}).to_json())
    assert cli.main(["validate", str(path)]) == 0
    out = capsys.readouterr().out
    assert "finest-bump" in out and "wrote" not in out
    assert not (tmp_path / "inflate").exists()


def test_flow_sim_pair_writes_fields(tmp_path):
    out = tmp_path / "pair"
    argv = ["flow-sim", "--initial", "pair", "--T", "0.5", "--dt", "0.05", "--checkpoint-every", "5", "--fields", "--out", str(out)]
    assert cli.main(argv) == 0
    files = sorted(p.name for p in (out / "fields").iterdir())
    rows = (out / "series.csv").read_text().splitlines()
    assert files[0] == "state_0000.csv" and len(files) == len(rows) - 1 >= 2


def test_repeat_runs_are_byte_identical(tmp_path):
    for name in ("a", "b"):
        assert cli.main(["lemma53-scan", "--per-decade", "2", "--out", str(tmp_path / name)]) == 0
    for f in ("summary.json", "series.csv"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()
