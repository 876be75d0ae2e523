import json
import subprocess
import sys

import pytest

from emclbench.cli import EXIT_AUDIT, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC, EXIT_OK, main

TINY = {
    "dataset": {"kind": "synthetic", "tasks": 2, "samples_per_task": 30, "test_per_task": 10,
                "dim": 6, "num_classes": 3},
    "model": {"hidden_sizes": [5]},
    "algo": {"name": "sgd", "lr": 0.1},
}


def write(tmp_path, name, obj):
    p = tmp_path / name
    p.write_text(json.dumps(obj))
    return str(p)


def test_run_and_plotdata(tmp_path):
    cfg = write(tmp_path, "c.json", TINY)
    assert main(["run", "--config", cfg, "--out", str(tmp_path / "r")]) == EXIT_OK
    assert (tmp_path / "r" / "results.json").exists()
    out = tmp_path / "p.csv"
    assert main(["plotdata", str(tmp_path / "r"), "--out", str(out)]) == EXIT_OK
    assert out.read_text().splitlines()[0] == "tasks_seen,sgd"


def test_grid_accepts_file_or_inline_json(tmp_path):
    cfg = write(tmp_path, "c.json", TINY)
    grid = write(tmp_path, "g.json", {"lr": [0.05, 0.1]})
    assert main(["grid", "--config", cfg, "--grid", grid, "--out", str(tmp_path / "g1")]) == EXIT_OK
    assert main(["grid", "--config", cfg, "--grid", '{"lr": [0.1]}', "--out", str(tmp_path / "g2")]) == EXIT_OK
    assert (tmp_path / "g1" / "summary.csv").exists()
    assert main(["grid", "--config", cfg, "--grid", "{}", "--out", str(tmp_path / "g3")]) == EXIT_CONFIG
    assert main(["grid", "--config", cfg, "--grid", "[1]", "--out", str(tmp_path / "g3")]) == EXIT_CONFIG


def test_config_errors_exit_1(tmp_path):
    bad = write(tmp_path, "b.json", {**TINY, "unknown": True})
    assert main(["run", "--config", bad, "--out", str(tmp_path / "x")]) == EXIT_CONFIG
    assert main(["run", "--config", str(tmp_path / "missing.json"), "--out", "x"]) == EXIT_CONFIG
    (tmp_path / "junk.json").write_text("{not json")
    assert main(["run", "--config", str(tmp_path / "junk.json"), "--out", "x"]) == EXIT_CONFIG


def test_data_errors_exit_2(tmp_path):
    cfg = write(tmp_path, "d.json", {"dataset": {"kind": "idx", "paths": {
        "train_images": str(tmp_path / "nope"), "train_labels": str(tmp_path / "nope")}},
        "algo": {"name": "sgd"}})
    assert main(["run", "--config", cfg, "--out", str(tmp_path / "x")]) == EXIT_DATA
    (tmp_path / "img").write_bytes(b"\x00\x00\x08\x01rest")
    (tmp_path / "lab").write_bytes(b"\x00\x00\x08\x01")
    cfg = write(tmp_path, "e.json", {"dataset": {"kind": "idx", "paths": {
        "train_images": str(tmp_path / "img"), "train_labels": str(tmp_path / "lab")}},
        "algo": {"name": "sgd"}})
    assert main(["run", "--config", cfg, "--out", str(tmp_path / "x")]) == EXIT_DATA


def test_numeric_failure_exit_3(tmp_path, capsys):
    cfg = write(tmp_path, "n.json", {**TINY, "algo": {"name": "sgd", "lr": 1.7e308}})
    with pytest.warns(RuntimeWarning):
        code = main(["run", "--config", cfg, "--out", str(tmp_path / "x")])
    assert code == EXIT_NUMERIC
    assert "non-finite" in capsys.readouterr().err


def test_audits_pass_with_defaults_and_fail_when_strict(capsys):
    assert main(["gradcheck"]) == EXIT_OK
    assert main(["proxcheck", "--draws", "200"]) == EXIT_OK
    assert main(["importance-audit"]) == EXIT_OK
    report = json.loads(capsys.readouterr().out.split("\n}\n")[-2] + "\n}")
    assert report["spearman"] >= 0.8
    assert main(["importance-audit", "--min-spearman", "0.999"]) == EXIT_AUDIT
    assert main(["proxcheck", "--draws", "50", "--tol", "1e-30"]) == EXIT_AUDIT


def test_thread_cap_flag_and_env(tmp_path, monkeypatch):
    cfg = write(tmp_path, "c.json", TINY)
    assert main(["--threads", "1", "run", "--config", cfg, "--out", str(tmp_path / "a")]) == EXIT_OK
    monkeypatch.setenv("EMCLBENCH_THREADS", "2")
    assert main(["run", "--config", cfg, "--out", str(tmp_path / "b")]) == EXIT_OK
    monkeypatch.setenv("EMCLBENCH_THREADS", "lots")
    assert main(["run", "--config", cfg, "--out", str(tmp_path / "c")]) == EXIT_CONFIG


def test_module_entry_point(tmp_path):
    done = subprocess.run([sys.executable, "-m", "emclbench", "proxcheck", "--draws", "20"],
                          capture_output=True, text=True)
    assert done.returncode == 0
    assert json.loads(done.stdout)["passed"] is True
