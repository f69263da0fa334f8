import json
import time

import numpy as np
import pytest

from dqnn import channels as ch
from dqnn import cli, config, runner
from dqnn import network as nw
from dqnn import training as tr
import oracles

TINY = """
name = "tiny"
seed = 5
output_dir = "tiny_out"
record_wall_time = false

[network]
widths = [3, 1, 3]

[channel]
kind = "single_error_bitflip"
p = 0.2
qubits = 3

[dataset]
builder = "bitflip"
n_pairs = 8
p = 0.2

[validation]
N = 3

[[sessions]]
epochs = 2
learning_rate = 0.01
optimizer = "adam"
batch_size = 4

[[sessions]]
epochs = 1
learning_rate = 0.002
n_pairs = 6

[eval]
N = 3
cases = ["no_error", "flip_q1"]
"""


@pytest.fixture
def tiny(tmp_path, monkeypatch):
    monkeypatch.setenv(runner.OUTPUT_ROOT_ENV, str(tmp_path / "root"))
    path = tmp_path / "tiny.toml"
    path.write_text(TINY)
    return path


def test_presets_listed():
    assert {"bitflip_313", "ad_414_conj", "discover_131_conj",
            "discover_13131"} <= set(config.list_presets())


@pytest.mark.parametrize("name", config.list_presets())
def test_preset_smoke_run(name, tmp_path):
    cfg = config.load_config(name)
    start = time.perf_counter()
    res = runner.run_experiment(cfg, tmp_path / name, max_epochs=2)
    assert time.perf_counter() - start < 60
    assert len(res.record) == 2 * len(cfg.sessions)
    assert (tmp_path / name / "checkpoint.json").exists()
    assert 0 <= res.summary["mean_fidelity"] <= 1


def test_derived_seeds_and_override():
    cfg = config.parse_config(TINY)
    assert cfg.init_seed() == 5
    assert cfg.dataset_seed() == 6 and cfg.validation_seed() == 7
    assert cfg.session_seed(2) == 107 and cfg.dataset_seed(2) == 1007
    assert config.load_config(config.PRESET_DIR / "bitflip_313.toml", seed=9).init_seed() == 9


def test_invalid_config_reports_line_and_field(tmp_path, capsys):
    bad = TINY.replace('learning_rate = 0.002', 'learning_rate = -1')
    path = tmp_path / "bad.toml"
    path.write_text(bad)
    assert cli.main(["train", str(path)]) == cli.EXIT_CONFIG
    err = capsys.readouterr().err
    line = bad.splitlines().index("learning_rate = -1") + 1
    assert f"bad.toml:{line}" in err and "sessions.1.learning_rate" in err


def test_unknown_key_and_syntax_errors(tmp_path):
    with pytest.raises(config.ConfigError, match="optimiser"):
        config.parse_config(TINY.replace('optimizer = "adam"', 'optimiser = "adam"'))
    with pytest.raises(config.ConfigError, match="line"):
        config.parse_config(TINY + "\n[[sessions]\n")
    with pytest.raises(config.ConfigError, match="needs p"):
        config.parse_config(TINY.replace("p = 0.2\nqubits", "qubits"))


def test_train_outputs_are_deterministic(tiny, tmp_path, capsys):
    out_root = tmp_path / "root"
    assert cli.main(["train", str(tiny), "--output-dir", "a"]) == 0
    assert cli.main(["train", str(tiny), "--output-dir", "b"]) == 0
    names = ["record.csv", "mesh.csv", "mesh_case_no_error.csv", "checkpoint.json",
             "checkpoint_session1.json", "summary.txt"]
    for name in names:
        assert (out_root / "a" / name).read_bytes() == (out_root / "b" / name).read_bytes()
    assert "final validation cost" in capsys.readouterr().out


def test_seed_override_changes_run(tiny, tmp_path):
    assert cli.main(["train", str(tiny), "--output-dir", "a"]) == 0
    assert cli.main(["train", str(tiny), "--output-dir", "c", "--seed", "6"]) == 0
    root = tmp_path / "root"
    assert (root / "a" / "record.csv").read_bytes() != (root / "c" / "record.csv").read_bytes()


def test_numerical_failure_keeps_checkpoint(tiny, tmp_path, monkeypatch):
    real = tr.run_session
    calls = []

    def flaky(*args, **kwargs):
        calls.append(1)
        if len(calls) == 2:
            raise tr.NumericalFailure("boom")
        return real(*args, **kwargs)

    monkeypatch.setattr(runner, "run_session", flaky)
    assert cli.main(["train", str(tiny)]) == cli.EXIT_NUMERIC
    out = tmp_path / "root" / "tiny_out"
    spec, params = nw.load_checkpoint(out / "checkpoint.json")
    _, p1 = nw.load_checkpoint(out / "checkpoint_session1.json")
    assert np.array_equal(params, p1)
    assert len((out / "record.csv").read_text().splitlines()) == 3


def _write_ckpt(path, spec, params):
    nw.save_checkpoint(path, spec, params)
    return str(path)


def test_eval_zero_checkpoint_known_values(tmp_path, capsys):
    spec = nw.make_spec([3, 1, 3])
    ckpt = _write_ckpt(tmp_path / "zero.json", spec, np.zeros(spec.n_params))
    evalspec = tmp_path / "e.toml"
    evalspec.write_text('[eval]\nN = 4\nchannel = {kind = "single_error_bitflip", '
                        'p = 0.2, qubits = 3}\ncases = ["no_error"]\n')
    assert cli.main(["eval", ckpt, str(evalspec), "--output-dir", str(tmp_path / "o")]) == 0
    summary = dict(l.split("=", 1) for l in (tmp_path / "o" / "summary.txt").read_text().split())
    theta = np.arange(4) * np.pi / 4
    w = np.sin(theta) * (np.pi / 4) * (np.pi / 2) / (4 * np.pi)
    assert float(summary["case.no_error"]) == pytest.approx(4 * (w * np.cos(theta / 2) ** 2).sum())
    assert (tmp_path / "o" / "mesh_case_no_error.csv").exists()


def test_eval_error_codes(tmp_path):
    spec = nw.make_spec([3, 1, 3])
    ckpt = _write_ckpt(tmp_path / "c.json", spec, np.zeros(spec.n_params))
    good = tmp_path / "e.toml"
    good.write_text("[eval]\nN = 3\n")
    mismatch = tmp_path / "m.toml"
    mismatch.write_text('[eval]\nN = 3\nencode = "ad4"\n')
    assert cli.main(["eval", str(tmp_path / "nope.json"), str(good)]) == cli.EXIT_IO
    assert cli.main(["eval", ckpt, str(tmp_path / "nope.toml")]) == cli.EXIT_IO
    assert cli.main(["eval", ckpt, str(mismatch)]) == cli.EXIT_CONFIG
    corrupt = tmp_path / "corrupt.json"
    corrupt.write_text("{")
    assert cli.main(["eval", str(corrupt), str(good)]) == cli.EXIT_CONFIG


def test_extract_codeword_cli(tmp_path, capsys):
    spec = nw.make_spec([1, 3, 1], (), ch.single_error_bitflip(0.75), 1)
    ckpt = _write_ckpt(tmp_path / "enc.json", spec,
                       oracles.repetition_encoder_params(spec.n_params))
    assert cli.main(["extract-codeword", ckpt, "--N", "4"]) == 0
    out = capsys.readouterr().out
    assert "|0> -> (+1.0000+0.0000i)|0000>" in out
    assert "|1> -> (+1.0000+0.0000i)|0111>" in out
    assert "conditional fidelity flip_q2" in out
    wrong = _write_ckpt(tmp_path / "w.json", nw.make_spec([3, 1, 3]), np.zeros(304))
    assert cli.main(["extract-codeword", wrong]) == cli.EXIT_CONFIG


def test_oracle_cli(tmp_path, capsys):
    out = tmp_path / "o.csv"
    assert cli.main(["oracle", "--p", "0,0.2,0.5", "--out", str(out)]) == 0
    rows = [l.split(",") for l in out.read_text().splitlines()]
    assert rows[0][:2] == ["p", "oracle_failure"]
    assert float(rows[1][1]) == 0
    assert float(rows[2][1]) == pytest.approx(0.104, abs=1e-15)
    assert float(rows[3][1]) == 0.5
    with pytest.raises(SystemExit):
        cli.main(["oracle", "--p", "1.5"])


def test_config_json_written(tiny, tmp_path):
    assert cli.main(["train", str(tiny)]) == 0
    saved = json.loads((tmp_path / "root" / "tiny_out" / "config.json").read_text())
    assert saved["sessions"][1]["n_pairs"] == 6
