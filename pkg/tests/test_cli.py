import json
import shutil
import subprocess
import sys

import pytest

from pomclab.cli import EXIT_CONFIG, EXIT_IO, EXIT_NUMERIC, EXIT_OK, main
from pomclab.tables import read_table

from cli_configs import CONFIGS, EXPECTED_FILES


def _write(tmp_path, text, name="cfg.ini"):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return str(path)


def _data_files(out):
    return {p.name: p.read_bytes() for p in sorted(out.iterdir()) if p.name != "manifest.json"}


@pytest.mark.parametrize("command", sorted(CONFIGS))
def test_command_runs_and_is_deterministic(tmp_path, command):
    cfg = _write(tmp_path, CONFIGS[command])
    outs = []
    for i in range(2):
        out = tmp_path / f"run{i}"
        assert main([command, "--config", cfg, "--out", str(out)]) == EXIT_OK
        outs.append(_data_files(out))
    assert outs[0] == outs[1]
    expected = EXPECTED_FILES[command]
    assert sorted(outs[0]) == sorted(expected + [f.replace(".csv", ".jsonl") for f in expected])
    manifest = json.loads((tmp_path / "run0" / "manifest.json").read_text())
    assert manifest["seeds"]["master_seed"] == int(CONFIGS[command].split("seed = ")[1].split()[0])
    assert sorted(manifest["files"]) == sorted(outs[0])


def test_manifest_alone_reproduces_outputs(tmp_path):
    cfg = _write(tmp_path, CONFIGS["fit"])
    out = tmp_path / "a"
    assert main(["fit", "--config", cfg, "--out", str(out)]) == EXIT_OK
    manifest = json.loads((out / "manifest.json").read_text())
    replay = tmp_path / "replay.ini"
    replay.write_text(manifest["config"].replace(str(out), str(tmp_path / "b")))
    assert main(["fit", "--config", str(replay)]) == EXIT_OK
    assert _data_files(out) == _data_files(tmp_path / "b")


def test_fit_columns(tmp_path):
    out = tmp_path / "o"
    assert main(["fit", "--config", _write(tmp_path, CONFIGS["fit"]), "--out", str(out)]) == 0
    rows = read_table(out / "fit.csv")
    assert list(rows[0]) == ["replicate", "omega_hat", "a_hat", "b_hat", "r_hat", "loglik",
                             "delta_to_class"]
    assert [int(r["replicate"]) for r in rows] == [0, 1]


def test_fit_from_data_file(tmp_path):
    sim = tmp_path / "sim"
    text = CONFIGS["simulate"].replace('"nm(2)"', '"nbin"').replace("nm2-default", "nbin-default")
    text = text.replace("n = 50", "n = 200")
    assert main(["simulate", "--config", _write(tmp_path, text, "s.ini"), "--out", str(sim)]) == 0
    fit_text = CONFIGS["fit"] + f'data = "{sim / "simulate.csv"}"\n'
    out = tmp_path / "fit"
    assert main(["fit", "--config", _write(tmp_path, fit_text, "f.ini"), "--out", str(out)]) == 0
    assert len(read_table(out / "fit.csv")) == 1


def test_seed_override_changes_output(tmp_path):
    cfg = _write(tmp_path, CONFIGS["simulate"])
    main(["simulate", "--config", cfg, "--out", str(tmp_path / "a")])
    main(["simulate", "--config", cfg, "--out", str(tmp_path / "b"), "--seed", "99"])
    assert _data_files(tmp_path / "a") != _data_files(tmp_path / "b")
    m = json.loads((tmp_path / "b" / "manifest.json").read_text())
    assert m["seeds"]["master_seed"] == 99


def test_workers_do_not_change_results(tmp_path):
    cfg = _write(tmp_path, CONFIGS["consistency"])
    main(["consistency", "--config", cfg, "--out", str(tmp_path / "a"), "--workers", "1"])
    main(["consistency", "--config", cfg, "--out", str(tmp_path / "b"), "--workers", "2"])
    assert _data_files(tmp_path / "a") == _data_files(tmp_path / "b")


def _error_record(capsys):
    err = capsys.readouterr().err.strip().splitlines()
    assert len(err) == 1
    return json.loads(err[0])


@pytest.mark.parametrize("text", [
    "[experiment]\ncommand = \"fit\"\n",
    "garbage",
    CONFIGS["fit"].replace("replicates = 2", "replicates = 0"),
    CONFIGS["moment"].replace('"hmm1"', '"nbin"').replace("hmm1-default", "nbin-default"),
])
def test_config_errors(tmp_path, capsys, text):
    code = main(["fit", "--config", _write(tmp_path, text), "--out", str(tmp_path / "o")])
    assert code == EXIT_CONFIG
    rec = _error_record(capsys)
    assert rec["error"] == "config" and rec["exit_code"] == EXIT_CONFIG


def test_command_mismatch_and_missing_file(tmp_path, capsys):
    assert main(["moment", "--config", _write(tmp_path, CONFIGS["fit"])]) == EXIT_CONFIG
    _error_record(capsys)
    assert main(["fit", "--config", str(tmp_path / "missing.ini")]) == EXIT_CONFIG
    _error_record(capsys)
    assert main(["fit"]) == EXIT_CONFIG
    _error_record(capsys)


def test_numeric_error(tmp_path, capsys):
    # two excursions cannot support the tail diagnostic
    text = CONFIGS["return-tail"].replace("n_samples = 500", "n_samples = 2")
    code = main(["return-tail", "--config", _write(tmp_path, text), "--out", str(tmp_path / "o")])
    assert code == EXIT_NUMERIC
    assert _error_record(capsys)["type"] == "InsufficientData"


def test_io_error(tmp_path, capsys):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    code = main(["simulate", "--config", _write(tmp_path, CONFIGS["simulate"]),
                 "--out", str(blocker / "sub")])
    assert code == EXIT_IO
    assert _error_record(capsys)["error"] == "io"


@pytest.mark.skipif(shutil.which("pomclab") is None, reason="console script not installed")
def test_console_script(tmp_path):
    cfg = _write(tmp_path, CONFIGS["moment"])
    proc = subprocess.run(["pomclab", "moment", "--config", cfg, "--out", str(tmp_path / "o")],
                          capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    proc = subprocess.run([sys.executable, "-m", "pomclab.cli", "moment", "--config", "nope"],
                          capture_output=True, text=True)
    assert proc.returncode == EXIT_CONFIG
    assert json.loads(proc.stderr)["error"] == "config"


def test_hmm_runs_report_grid_truncation(tmp_path):
    out = tmp_path / "o"
    cfg = _write(tmp_path, CONFIGS["filter-forget"])
    assert main(["filter-forget", "--config", cfg, "--out", str(out)]) == EXIT_OK
    diag = json.loads((out / "manifest.json").read_text())["diagnostics"]
    assert 0 <= diag["grid_truncation_mass"] < 1e-3


def test_manifest_hashes_match_files(tmp_path):
    import hashlib

    out = tmp_path / "o"
    assert main(["simulate", "--config", _write(tmp_path, CONFIGS["simulate"]), "--out", str(out)]) == 0
    manifest = json.loads((out / "manifest.json").read_text())
    for name, digest in manifest["file_sha256"].items():
        assert hashlib.sha256((out / name).read_bytes()).hexdigest() == digest
    assert set(manifest["versions"]) == {"python", "numpy", "scipy"}
