"""CLI surface: every subcommand end-to-end, plus exit-code contracts."""

import json

import numpy as np
import pytest

from unlbench.cli import main

pytestmark = pytest.mark.filterwarnings("ignore::RuntimeWarning")

MINI_DATA = {
    "ambient_dim": 16, "num_train_classes": 6, "per_class_train": 10,
    "per_class_test": 8, "class_noise_sigma": 0.25, "prototype_seed": 3,
    "downstream_specs": [
        {"name": "d", "num_classes": 3, "anchor_classes": [2, 5],
         "anchor_similarity": 0.9, "per_class": 18},
    ],
}


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """Data, checkpoints, and split produced through the CLI itself."""
    root = tmp_path_factory.mktemp("cli")
    cfg = {
        "version": 1,
        "data": MINI_DATA,
        "scenario": {"kind": "random", "n_forget": 2},
        "train": {"lr": 0.1, "epochs": 10, "batch_size": 16},
        "methods": [{"method": "PL", "base": {"lr": 0.02, "epochs": 3}}],
        "master_seed": 11,
        "repeats": 1,
        "output_dir": str(root / "out"),
        "probe_rows": 24,
    }
    (root / "config.json").write_text(json.dumps(cfg))
    (root / "traincfg.json").write_text(json.dumps(
        {"version": 1, "train": {"lr": 0.1, "epochs": 10, "batch_size": 16, "seed": 2}}
    ))
    assert main(["gen-data", "--config", str(root / "config.json"),
                 "--out", str(root / "data")]) == 0
    assert main(["train", "--data", str(root / "data" / "train"),
                 "--config", str(root / "traincfg.json"),
                 "--out", str(root / "ckpt" / "original")]) == 0
    assert main(["split", "--train", str(root / "data" / "train"),
                 "--test", str(root / "data" / "test"),
                 "--kind", "random", "--n", "2", "--seed", "4",
                 "--out", str(root / "split")]) == 0
    return root


def test_gen_data_writes_loadable_datasets(workspace):
    from unlbench.data import load_dataset
    train = load_dataset(workspace / "data" / "train")
    assert train.n == 60 and train.num_classes == 6
    down = load_dataset(workspace / "data" / "d")
    assert down.n == 54


def test_train_checkpoint_round_trips(workspace):
    from unlbench.model import load_checkpoint
    ckpt = load_checkpoint(workspace / "ckpt" / "original")
    assert ckpt.provenance["role"] == "original"
    assert ckpt.params.num_classes == 6


def test_split_directory_structure(workspace):
    from unlbench.data import load_split
    split = load_split(workspace / "split")
    assert len(split.forget_classes) == 2
    assert split.Df.n == 20


def test_unlearn_writes_checkpoint_and_config(workspace):
    out = workspace / "ckpt" / "pl"
    assert main(["unlearn", "--method", "PL",
                 "--original", str(workspace / "ckpt" / "original"),
                 "--split", str(workspace / "split"),
                 "--seed", "5", "--out", str(out)]) == 0
    from unlbench.model import load_checkpoint
    ckpt = load_checkpoint(out)
    assert ckpt.provenance["role"] == "unlearned:PL"
    saved = json.loads((out / "unlearn_config.json").read_text())
    assert saved["method"] == "PL" and saved["version"] == 1


def test_select_top_prints_ranking(workspace, capsys):
    assert main(["select-top", "--model", str(workspace / "ckpt" / "original"),
                 "--train", str(workspace / "data" / "train"),
                 "--downstream", str(workspace / "data" / "d"),
                 "--n", "2"]) == 0
    ranking = json.loads(capsys.readouterr().out)
    assert {e["class"] for e in ranking} == {2, 5}


def test_eval_emits_metrics_json(workspace, capsys):
    retr = workspace / "ckpt" / "retrained"
    assert main(["train", "--data", str(workspace / "split" / "Dr"),
                 "--config", str(workspace / "traincfg.json"),
                 "--out", str(retr)]) == 0
    capsys.readouterr()  # drop the train command's status line
    assert main(["eval", "--unlearned", str(workspace / "ckpt" / "pl"),
                 "--retrained", str(retr),
                 "--original", str(workspace / "ckpt" / "original"),
                 "--split", str(workspace / "split"),
                 "--downstreams", str(workspace / "data" / "d"),
                 "--seed", "3"]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert 0.0 <= doc["agl"] <= 1.0
    assert "d" in doc["repr_scores"]
    assert 0.0 <= doc["mia"] <= 1.0


def test_run_writes_reports(workspace, capsys):
    assert main(["run", "--config", str(workspace / "config.json")]) == 0
    out = workspace / "out"
    doc = json.loads((out / "report.json").read_text())
    methods = [r["method"] for r in doc["reports"]]
    assert methods == ["original", "retrained", "PL"]
    assert (out / "report.csv").exists()
    assert (out / "cka_scatter.csv").exists()


def test_sweep_both_kinds(workspace):
    cfg = json.loads((workspace / "config.json").read_text())
    cfg["sweep"] = {"method": "PL", "lr_grid": [0.01, 0.02], "epoch_grid": [1, 2],
                    "sigma_grid": [0.0, 0.5]}
    sweep_cfg = workspace / "sweep.json"
    sweep_cfg.write_text(json.dumps(cfg))
    out = workspace / "sweeps"
    assert main(["sweep", "--config", str(sweep_cfg), "--kind", "lr-epochs",
                 "--out", str(out)]) == 0
    assert main(["sweep", "--config", str(sweep_cfg), "--kind", "dp-noise",
                 "--out", str(out)]) == 0
    lr_csv = (out / "sweep_lr_epochs_PL.csv").read_text().splitlines()
    assert lr_csv[0] == "lr\\epochs,1,2" and len(lr_csv) == 3
    dp_csv = (out / "sweep_dp_noise_PL.csv").read_text().splitlines()
    assert dp_csv[0] == "sigma,knn_acc,cka_ur,cka_uo" and len(dp_csv) == 3


class TestExitCodes:
    def test_missing_config_file_is_config_error(self, capsys):
        assert main(["run", "--config", "/nonexistent/cfg.json"]) == 1
        assert "config error" in capsys.readouterr().err

    def test_invalid_json_is_config_error(self, tmp_path, capsys):
        bad = tmp_path / "bad.json"
        bad.write_text("{not json")
        assert main(["run", "--config", str(bad)]) == 1

    def test_missing_version_is_config_error(self, tmp_path):
        bad = tmp_path / "nover.json"
        bad.write_text(json.dumps({"data": {}}))
        assert main(["run", "--config", str(bad)]) == 1

    def test_unknown_method_is_config_error(self, workspace):
        assert main(["unlearn", "--method", "NOPE",
                     "--original", str(workspace / "ckpt" / "original"),
                     "--split", str(workspace / "split"),
                     "--out", "/tmp/x"]) == 1

    def test_bad_flag_is_config_error(self, capsys):
        assert main(["run", "--nope"]) == 1

    def test_runtime_failure_is_exit_two(self, workspace, tmp_path, capsys):
        # A corrupted checkpoint fails at load time, after config parsing.
        import shutil
        broken = tmp_path / "broken"
        shutil.copytree(workspace / "ckpt" / "original", broken)
        blob = bytearray((broken / "W1.ubm1").read_bytes())
        blob[-1] ^= 0xFF
        (broken / "W1.ubm1").write_bytes(bytes(blob))
        assert main(["unlearn", "--method", "PL",
                     "--original", str(broken),
                     "--split", str(workspace / "split"),
                     "--out", str(tmp_path / "out")]) == 2
        assert "error" in capsys.readouterr().err
