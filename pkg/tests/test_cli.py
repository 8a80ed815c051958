"""End-to-end runs of the command-line tools on small synthetic data."""

import numpy as np
import pandas as pd
import pytest

from trafficgc.checkpoint import read_checkpoint
from trafficgc.main import cli_main

SMALL = ["--seq-len", "4", "--k-hops", "2", "--max-epochs", "2", "--batch-size", "20", "--lr", "0.01"]


@pytest.fixture(scope="module")
def synthetic_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("synthetic")
    assert cli_main(["gen-synthetic", "--nodes", "5", "--steps", "160", "--seed", "2", "--out", str(out)]) == 0
    return out


@pytest.fixture(scope="module")
def trained_dir(synthetic_dir, tmp_path_factory):
    out = tmp_path_factory.mktemp("trained")
    assert cli_main(["train", "--data", str(synthetic_dir), "--out", str(out), *SMALL]) == 0
    return out


def test_gradcheck_command(capsys):
    assert cli_main(["gradcheck", "--n", "5", "--k", "2", "--t", "3", "--seed", "1", "--seeds", "1"]) == 0
    out = capsys.readouterr().out
    assert "max relative error" in out
    assert "PASS" in out


def test_train_requires_data(capsys):
    assert cli_main(["train", "--out", "somewhere"]) == 2
    assert "usage" in capsys.readouterr().err


def test_unknown_flag():
    assert cli_main(["gradcheck", "--frobnicate"]) == 2


def test_runtime_failure_exit_code(tmp_path, capsys):
    assert cli_main(["train", "--data", str(tmp_path / "absent"), "--out", str(tmp_path)]) == 1
    assert "error:" in capsys.readouterr().err


def test_gen_synthetic_files(synthetic_dir):
    for name in ("topology.csv", "node_ids.txt", "speeds.csv"):
        assert (synthetic_dir / name).exists()
    speeds = pd.read_csv(synthetic_dir / "speeds.csv")
    assert speeds.shape == (160, 6)


def test_prep_graph(synthetic_dir, tmp_path, capsys):
    assert cli_main(["prep-graph", "--data", str(synthetic_dir), "--out", str(tmp_path), "--k-hops", "2"]) == 0
    assert "K_max=" in capsys.readouterr().out
    for name in ("adjacency.csv", "distance.csv", "ffr.csv", "khop_1.csv", "khop_2.csv",
                 "mask_1.csv", "mask_2.csv"):
        assert (tmp_path / name).exists()
    mask = pd.read_csv(tmp_path / "mask_2.csv", index_col=0).to_numpy()
    assert np.array_equal(mask, mask.T)


def test_train_writes_checkpoint_and_report(trained_dir):
    checkpoint = read_checkpoint(trained_dir / "model.npz")
    assert checkpoint.kind == "tgc-lstm"
    assert checkpoint.meta["node_ids"] == ["S000", "S001", "S002", "S003", "S004"]
    assert checkpoint.meta["config"]["seq_len"] == 4
    report = pd.read_csv(trained_dir / "train_report.csv")
    assert 1 <= len(report) <= 2


def test_evaluate_compares_models(synthetic_dir, trained_dir, tmp_path):
    code = cli_main(["evaluate", "--data", str(synthetic_dir), *SMALL,
                     "--checkpoint", str(trained_dir / "model.npz"),
                     "--model", "lstm", "--model", "tgc-lstm",
                     "--out", str(tmp_path), "--series-node", "S001"])
    assert code == 0
    table = pd.read_csv(tmp_path / "metrics.csv")
    assert len(table) == 3
    assert table["model"].tolist()[1:] == ["lstm", "tgc-lstm"]
    assert (table["rmse"] >= table["mae"]).all()
    assert (tmp_path / "predictions_S001_lstm.csv").exists()


def test_evaluate_needs_a_model(synthetic_dir):
    assert cli_main(["evaluate", "--data", str(synthetic_dir), *SMALL]) == 1


def test_export_weights(trained_dir, tmp_path):
    out = tmp_path / "avg.csv"
    assert cli_main(["export-weights", "--checkpoint", str(trained_dir / "model.npz"), "--out", str(out)]) == 0
    frame = pd.read_csv(out, index_col=0)
    assert frame.columns.tolist() == ["S000", "S001", "S002", "S003", "S004"]


def test_export_weights_rejects_lstm(synthetic_dir, tmp_path):
    assert cli_main(["train", "--data", str(synthetic_dir), "--out", str(tmp_path),
                     "--model", "lstm", *SMALL]) == 0
    assert cli_main(["export-weights", "--checkpoint", str(tmp_path / "model.npz"),
                     "--out", str(tmp_path / "avg.csv")]) == 1


def test_sweep_k(synthetic_dir, tmp_path):
    assert cli_main(["sweep-k", "--data", str(synthetic_dir), *SMALL, "--k-list", "1,2",
                     "--out", str(tmp_path)]) == 0
    table = pd.read_csv(tmp_path / "sweep_k.csv")
    assert table["k_hops"].tolist() == [1, 2]
    assert table["weight_sparsity"].between(0, 1).all()
    for k in (1, 2):
        report = pd.read_csv(tmp_path / f"train_report_k{k}.csv")
        assert 1 <= len(report) <= 2
        assert report["train_loss"].notna().all()
