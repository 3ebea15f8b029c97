import hashlib
import json
import subprocess
import sys

import pytest
import yaml

from tnqc import cli, data


def run(*argv):
    return cli.main([str(a) for a in argv])


def digest(path):
    return hashlib.sha256(path.read_bytes()).hexdigest()


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    out = tmp_path_factory.mktemp("ds")
    assert run("synth", "--n", 240, "--seed", 3, "--out", out) == 0
    return out / "synth.tnqc"


def test_synth_reproducible(tmp_path):
    for name in ("a", "b"):
        assert run("synth", "--n", 1000, "--seed", 7, "--out", tmp_path / name) == 0
    assert digest(tmp_path / "a" / "synth.tnqc") == digest(tmp_path / "b" / "synth.tnqc")


def test_output_dir_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv("TNQ_OUT", str(tmp_path / "env"))
    assert run("synth", "--n", 4, "--size", 9) == 0
    assert (tmp_path / "env" / "synth.tnqc").exists()


@pytest.mark.parametrize("arch", ["qmps", "qttn", "qmera"])
def test_xcheck(tmp_path, arch):
    assert run("xcheck", "--arch", arch, "--qubits", 4, "--out", tmp_path) == 0
    doc = json.loads((tmp_path / "xcheck.json").read_text())
    assert doc["passed"] and doc["max_abs_deviation"] < 1e-10


def test_xcheck_needs_quantum_arch(tmp_path):
    assert run("xcheck", "--arch", "mps", "--out", tmp_path) == cli.EXIT_USAGE


def test_effdim_self_test(tmp_path):
    assert run("effdim", "--arch", "qttn", "--qubits", 4, "--n", "1e6", "--draws", 20, "--out", tmp_path) == 0
    doc = json.loads((tmp_path / "effdim.json").read_text())
    assert doc["self_test"]["passed"] and doc["self_test"]["monotone_decreasing"]
    lines = (tmp_path / "effdim.csv").read_text().splitlines()
    assert lines[0].startswith("n,effective_dimension") and len(lines) == 14


def test_fisher(tmp_path):
    assert run("fisher", "--arch", "mera", "--size", 4, "--D", 2, "--chi", 2, "--draws", 30, "--out", tmp_path) == 0
    doc = json.loads((tmp_path / "fisher.json").read_text())
    assert doc["d"] == len(doc["eigenvalues"]) and min(doc["eigenvalues"]) >= -1e-10
    assert doc["n_draws"] == 30


def test_config_errors_list_every_field(tmp_path, capsys):
    cfg = {"arch": "peps", "model": {"D": 1, "chi": 0}, "data": {"pool": 0}, "train": {"batch_size": -4, "momentum": 1}}
    (tmp_path / "run.yaml").write_text(yaml.safe_dump(cfg))
    assert run("train", "--config", tmp_path / "run.yaml", "--out", tmp_path) == cli.EXIT_USAGE
    err = capsys.readouterr().err
    for field in ("arch", "model.D", "model.chi", "data.pool", "train.batch_size", "momentum"):
        assert field in err


def test_unknown_config_field(tmp_path, capsys):
    (tmp_path / "run.yaml").write_text("model:\n  depth: 3\n")
    assert run("xcheck", "--config", tmp_path / "run.yaml", "--out", tmp_path) == cli.EXIT_USAGE
    assert "model.depth" in capsys.readouterr().err


def test_flags_override_file(tmp_path):
    (tmp_path / "run.yaml").write_text("arch: qmps\nmodel:\n  qubits: 6\n")
    cfg = cli.load_config(tmp_path / "run.yaml", {"model.qubits": 4})
    assert (cfg["arch"], cfg["model"]["qubits"]) == ("qmps", 4)


def test_hybrid_data_defaults():
    assert cli.load_config(None, {"arch": "hybrid-mps"})["data"]["mode"] == "s_order"
    assert cli.load_config(None, {"arch": "hybrid-ttn"})["data"]["crop"] == 12


def test_defaults_not_mutated():
    before = json.dumps(cli.DEFAULT_CONFIG, sort_keys=True)
    cli.load_config(None, {"arch": "hybrid-ttn", "model.qubits": 8, "train.batch_size": 3})
    assert json.dumps(cli.DEFAULT_CONFIG, sort_keys=True) == before


def test_missing_files(tmp_path, capsys):
    missing = tmp_path / "nowhere.tnqc"
    assert run("train", "--arch", "mps", "--data", missing, "--out", tmp_path) == cli.EXIT_MISSING
    assert str(missing) in capsys.readouterr().err
    assert run("xcheck", "--config", tmp_path / "none.yaml", "--out", tmp_path) == cli.EXIT_MISSING


def test_malformed_dataset(tmp_path):
    (tmp_path / "bad.tnqc").write_bytes(b"NOPE" + bytes(40))
    assert run("train", "--arch", "mps", "--data", tmp_path / "bad.tnqc", "--out", tmp_path) == cli.EXIT_FORMAT


def test_train_eval_roc(tmp_path, dataset):
    c, q = tmp_path / "c", tmp_path / "q"
    assert run("train", "--arch", "mps", "--chi", 3, "--data", dataset, "--epochs", 3, "--batch-size", 20,
               "--lr-classical", 0.01, "--out", c, "--quiet") == 0
    assert run("train", "--arch", "qttn", "--data", dataset, "--epochs", 2, "--batch-size", 20, "--out", q, "--quiet") == 0
    summary = json.loads((c / "train_summary.json").read_text())
    assert summary["epochs_run"] == 3
    assert len((c / "train_log.csv").read_text().splitlines()) == 4

    assert run("eval", "--checkpoint", q / "checkpoint.json", "--split", "test", "--shots", 200, "--out", q) == 0
    report = json.loads((q / "eval.json").read_text())
    assert report["n_events"] == 48 and 0 <= report["auc"] <= 1
    assert report["shots"] == 200 and "shot_auc" in report

    assert run("roc", "--checkpoint", c / "checkpoint.json", "--compare", q / "checkpoint.json", "--split", "test",
               "--out", tmp_path / "roc") == 0
    assert (tmp_path / "roc" / "fpr_ratio.csv").read_text().startswith("signal_efficiency,ratio")
    doc = json.loads((tmp_path / "roc" / "roc.json").read_text())
    assert 0 <= doc["auc"] <= 1 and 0 <= doc["compare_auc"] <= 1


def test_shots_rejected_for_classical(tmp_path, dataset):
    assert run("train", "--arch", "mps", "--chi", 2, "--data", dataset, "--epochs", 1, "--out", tmp_path, "--quiet") == 0
    assert run("eval", "--checkpoint", tmp_path / "checkpoint.json", "--shots", 100, "--out", tmp_path) == cli.EXIT_USAGE


def test_train_reproducible(tmp_path, dataset):
    for name in ("a", "b"):
        assert run("train", "--arch", "qmps", "--data", dataset, "--epochs", 2, "--batch-size", 40, "--seed", 5,
                   "--out", tmp_path / name, "--quiet") == 0
    for f in ("train_log.csv", "checkpoint.json", "train_summary.json"):
        assert digest(tmp_path / "a" / f) == digest(tmp_path / "b" / f)


def test_default_training_schedule_runs(tmp_path, dataset):
    # batch 100, lr 1e-4 / 1e-2, decay 0.5 every 25 stalled epochs, early stop 50
    assert run("train", "--arch", "hybrid-ttn", "--chi", 2, "--data", dataset, "--epochs", 1, "--out", tmp_path, "--quiet") == 0
    ck = json.loads((tmp_path / "checkpoint.json").read_text())
    tc = ck["train_config"]
    assert (tc["batch_size"], tc["lr_classical"], tc["lr_quantum"]) == (100, 1e-4, 1e-2)
    assert (tc["decay_factor"], tc["decay_patience_epochs"], tc["early_stop_patience_epochs"]) == (0.5, 25, 50)


def test_preprocess_then_train(tmp_path, dataset):
    assert run("preprocess", "--input", dataset, "--out", tmp_path) == 0
    pre = data.read_dataset(tmp_path / "preprocessed.tnqc")
    assert (pre.height, pre.width) == (4, 4) and pre.scaler is not None
    assert run("train", "--arch", "ttn", "--chi", 2, "--data", tmp_path / "preprocessed.tnqc", "--epochs", 1,
               "--out", tmp_path, "--quiet") == 0


def test_preprocess_text_dump(tmp_path):
    rows = [" ".join(["0.1"] * 15 + ["1.0"] + ["0"] * 9) + " 1", " ".join(["0.2"] * 25) + " 0"]
    (tmp_path / "dump.txt").write_text("\n".join(rows) + "\n")
    assert run("preprocess", "--input", tmp_path / "dump.txt", "--text", "--height", 5, "--width", 5,
               "--crop", 0, "--pool", 2, "--out", tmp_path) == 0
    assert data.read_dataset(tmp_path / "preprocessed.tnqc").images.shape == (2, 2, 2)


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "tnqc", "--help"], capture_output=True, text=True)
    assert res.returncode == 0 and "xcheck" in res.stdout
