"""End-to-end tests for the command-line surface."""

import json

import numpy as np
import pytest

from uqreg import cli
from uqreg.data import load_dataset

TINY_CONFIG = """
[synth]
n_stimuli = 60
feature_dim = 4
raters_per_stimulus = 10
seed = 3

[train]
hidden_sizes = [8]
batches_per_epoch = 4
batch_size = 8
max_epochs = 2
dropout_rate = 0.3
seed = 41

[ensemble]
n_seeds = 2
mc_draws = 5
runs = 1
"""


@pytest.fixture()
def config_path(tmp_path):
    path = tmp_path / "config.toml"
    path.write_text(TINY_CONFIG)
    return path


@pytest.fixture()
def synth_dir(tmp_path, config_path):
    out = tmp_path / "data"
    code = cli.main(["synth", "--config", str(config_path), "--out", str(out)])
    assert code == 0
    return out


def _data_args(synth_dir):
    return ["--features", str(synth_dir / "features.csv"),
            "--annotations", str(synth_dir / "annotations.csv"),
            "--splits", str(synth_dir / "splits.csv")]


class TestSynthCommand:
    def test_writes_ingestible_files_and_manifest(self, synth_dir):
        dataset = load_dataset(synth_dir / "features.csv",
                               synth_dir / "annotations.csv",
                               synth_dir / "splits.csv")
        assert len(dataset.targets) == 60
        manifest = json.loads((synth_dir / "manifest.json").read_text())
        assert manifest["command"] == "synth"
        assert manifest["tool_version"]
        written = {p.split("/")[-1] for p in manifest["outputs"]}
        assert {"features.csv", "annotations.csv", "splits.csv",
                "oracle.csv"} <= written

    def test_reproducible_files(self, tmp_path, config_path):
        a, b = tmp_path / "a", tmp_path / "b"
        assert cli.main(["synth", "--config", str(config_path), "--out", str(a)]) == 0
        assert cli.main(["synth", "--config", str(config_path), "--out", str(b)]) == 0
        assert (a / "features.csv").read_bytes() == (b / "features.csv").read_bytes()
        assert (a / "annotations.csv").read_bytes() == (b / "annotations.csv").read_bytes()


class TestTrainCommand:
    def test_missing_feature_file_exit_2(self, tmp_path, config_path, capsys):
        code = cli.main(["train", "--config", str(config_path),
                         "--out", str(tmp_path / "run"),
                         "--features", str(tmp_path / "missing.csv"),
                         "--annotations", str(tmp_path / "missing.csv"),
                         "--splits", str(tmp_path / "missing.csv")])
        assert code == 2
        assert "missing.csv" in capsys.readouterr().err

    def test_train_writes_checkpoint_and_report(self, tmp_path, config_path, synth_dir):
        out = tmp_path / "run"
        code = cli.main(["train", "--config", str(config_path), "--out", str(out),
                         "--dimension", "valence"] + _data_args(synth_dir))
        assert code == 0
        report = json.loads((out / "train_report_valence.json").read_text())
        assert len(report["val_losses"]) == 2
        assert report["improvement_rule"] == "strict_less_than"
        assert (out / "checkpoint_valence.json").exists()
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["seeds"] == [41]

    def test_fixed_seed_bit_reproducible(self, tmp_path, config_path, synth_dir):
        out1, out2 = tmp_path / "r1", tmp_path / "r2"
        args = ["train", "--config", str(config_path), "--seed", "41",
                "--dimension", "valence"] + _data_args(synth_dir)
        assert cli.main(args + ["--out", str(out1)]) == 0
        assert cli.main(args + ["--out", str(out2)]) == 0
        assert ((out1 / "checkpoint_valence.json").read_bytes()
                == (out2 / "checkpoint_valence.json").read_bytes())

    def test_both_dimensions_trained(self, tmp_path, config_path, synth_dir):
        out = tmp_path / "run"
        code = cli.main(["train", "--config", str(config_path),
                         "--out", str(out)] + _data_args(synth_dir))
        assert code == 0
        assert (out / "checkpoint_valence.json").exists()
        assert (out / "checkpoint_arousal.json").exists()

    def test_env_var_seed_override(self, tmp_path, config_path, synth_dir, monkeypatch):
        monkeypatch.setenv("UQR_SEED", "7")
        out = tmp_path / "run"
        code = cli.main(["train", "--config", str(config_path), "--out", str(out),
                         "--dimension", "valence"] + _data_args(synth_dir))
        assert code == 0
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["seeds"] == [7]


class TestBenchmarkCommand:
    def test_single_method_writes_sd_metrics(self, tmp_path, config_path, synth_dir):
        out = tmp_path / "bench"
        code = cli.main(["benchmark", "--config", str(config_path),
                         "--out", str(out), "--method", "kld",
                         "--dimension", "valence"] + _data_args(synth_dir))
        assert code == 0
        record = json.loads((out / "report.json").read_text())
        targets = {(c["method"], c["target"]) for c in record["cells"]}
        assert ("kld", "mean") in targets and ("kld", "sd") in targets
        assert (out / "scatter_kld_valence_sd.csv").exists()

    def test_all_methods_combined_table(self, tmp_path, config_path, synth_dir, capsys):
        out = tmp_path / "bench"
        code = cli.main(["benchmark", "--config", str(config_path),
                         "--out", str(out), "--method", "all",
                         "--dimension", "valence"] + _data_args(synth_dir))
        assert code == 0
        table = (out / "report.txt").read_text()
        for label in ("Random Seeds", "MC Dropout", "NLL Loss", "MSE Loss",
                      "KLD Loss"):
            assert label in table
        manifest = json.loads((out / "manifest.json").read_text())
        reqs = {r["method"]: r for r in manifest["run_requirements"]}
        assert reqs["seeds"]["training_runs"] == 2
        assert reqs["mc_dropout"]["inference_runs_per_stimulus"] == 5
        ensemble = json.loads((out / "ensemble_seeds_valence.json").read_text())
        assert ensemble["seeds"] == [41, 42]
        for name in ensemble["checkpoints"]:
            assert (out / name).exists()

    def test_seeds_with_single_member_rejected(self, tmp_path, synth_dir):
        cfg = tmp_path / "bad.toml"
        cfg.write_text(TINY_CONFIG.replace("n_seeds = 2", "n_seeds = 1"))
        code = cli.main(["benchmark", "--config", str(cfg),
                         "--out", str(tmp_path / "bench"), "--method", "seeds",
                         "--dimension", "valence"] + _data_args(synth_dir))
        assert code == 2

    def test_unknown_method_rejected(self, tmp_path, config_path, synth_dir, capsys):
        code = cli.main(["benchmark", "--config", str(config_path),
                         "--out", str(tmp_path / "bench"), "--method", "bayes"]
                        + _data_args(synth_dir))
        assert code == 2
        assert "bayes" in capsys.readouterr().err

    def test_rerun_idempotent_report(self, tmp_path, config_path, synth_dir):
        out = tmp_path / "bench"
        args = ["benchmark", "--config", str(config_path), "--out", str(out),
                "--method", "nll", "--dimension", "valence"] + _data_args(synth_dir)
        assert cli.main(args) == 0
        first = (out / "report.json").read_bytes()
        assert cli.main(args) == 0
        assert (out / "report.json").read_bytes() == first
