from __future__ import annotations

import json

import numpy as np
import pytest

from mshllm.cli import EXIT_CONFIG, EXIT_IO, EXIT_NUMERIC, EXIT_OK, main
from mshllm.data import load_csv

from .conftest import tiny_run_config


@pytest.fixture
def config_file(tmp_path):
    path = tmp_path / "run.json"
    path.write_text(tiny_run_config().to_json())
    return path


def test_synth_writes_csv_and_sidecar(tmp_path):
    out = tmp_path / "s.csv"
    argv = ["synth", "--out", str(out), "--length", "300", "--periods", "24", "--noise", "0", "--seed", "5"]
    assert main(argv) == EXIT_OK
    ds = load_csv(out, "hourly")
    assert ds.values.shape == (300, 2)
    meta = json.loads(out.with_suffix(".csv.json").read_text())
    assert meta["components"] == [[24.0, 1.0]] and meta["seed"] == 5
    first = out.read_bytes()
    assert main(argv) == EXIT_OK
    assert out.read_bytes() == first


def test_synth_amplitude_count_mismatch(tmp_path):
    argv = ["synth", "--out", str(tmp_path / "s.csv"), "--periods", "24", "48", "--amplitudes", "1"]
    assert main(argv) == EXIT_CONFIG


def test_train_eval_transfer_ablate(tmp_path, config_file, capsys):
    out = tmp_path / "run"
    assert main(["train", "--config", str(config_file), "--out", str(out)]) == EXIT_OK
    assert "smape" in capsys.readouterr().out
    ckpt = out / "model.npz"
    assert main(["eval", "--config", str(config_file), "--checkpoint", str(ckpt), "--out", str(tmp_path / "ev")]) == EXIT_OK
    assert (tmp_path / "ev" / "metrics.csv").read_text() .count("\n") > 3
    assert main(["transfer", "--config", str(config_file), "--target", str(config_file), "--checkpoint", str(ckpt)]) == EXIT_OK
    assert "zeroshot toy→toy" in capsys.readouterr().out
    assert main(["ablate", "--config", str(config_file), "--variant", "-w/o HM", "--out", str(tmp_path / "ab")]) == EXIT_OK


def test_seed_override_changes_results(tmp_path, config_file):
    main(["train", "--config", str(config_file), "--out", str(tmp_path / "a")])
    main(["train", "--config", str(config_file), "--seed", "9", "--out", str(tmp_path / "b")])
    assert (tmp_path / "a" / "metrics.csv").read_bytes() != (tmp_path / "b" / "metrics.csv").read_bytes()


def test_dump_prompts(config_file, capsys):
    assert main(["train", "--config", str(config_file), "--dump-prompts"]) == EXIT_OK
    text = capsys.readouterr().out
    assert "[data-correlated prompt]" in text and "[capability prompt]" in text


def test_config_error_exit_code(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"protocol": "nope"}))
    assert main(["train", "--config", str(bad)]) == EXIT_CONFIG


def test_mismatched_checkpoint_refused(tmp_path, config_file):
    main(["train", "--config", str(config_file), "--out", str(tmp_path / "a")])
    cfg = json.loads(config_file.read_text())
    cfg["model"]["heads"] = 1
    other = tmp_path / "other.json"
    other.write_text(json.dumps(cfg))
    assert main(["eval", "--config", str(other), "--checkpoint", str(tmp_path / "a" / "model.npz")]) == EXIT_CONFIG


def test_io_error_exit_code(tmp_path):
    cfg = tiny_run_config().to_dict()
    cfg["data"] = {"csv": str(tmp_path / "missing.csv"), "frequency": "hourly"}
    path = tmp_path / "c.json"
    path.write_text(json.dumps(cfg))
    assert main(["train", "--config", str(path)]) == EXIT_IO


def test_numeric_failure_exit_code(tmp_path):
    values = np.ones((400, 2))
    values[50, 0] = 1e308
    values[51, 0] = -1e308
    csv = tmp_path / "huge.csv"
    csv.write_text("a,b\n" + "\n".join(f"{x:.17g},{y:.17g}" for x, y in values))
    cfg = tiny_run_config().to_dict()
    cfg["data"] = {"csv": str(csv), "frequency": "hourly"}
    path = tmp_path / "c.json"
    path.write_text(json.dumps(cfg))
    assert main(["train", "--config", str(path)]) == EXIT_NUMERIC


def test_unknown_variant_rejected_by_parser(config_file):
    with pytest.raises(SystemExit) as exc:
        main(["ablate", "--config", str(config_file), "--variant", "-w/o X"])
    assert exc.value.code == 2
