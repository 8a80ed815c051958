"""Tests for the forecast metrics and exporters."""

import math

import numpy as np
import pandas as pd
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from trafficgc.errors import NonFiniteError, ShapeError
from trafficgc.graph import SupportMask
from trafficgc.metrics import evaluate, export_avg_weights, export_predictions, metrics_table
from trafficgc.models import TGCLSTMCell, VanillaLSTMCell
from trafficgc.utils.helpers import make_rng, read_matrix_csv


def test_hand_example():
    result = evaluate([[58.0, 54.0]], [[60.0, 50.0]])
    assert result.mae == pytest.approx(3.0)
    assert result.mape == pytest.approx((2 / 60 + 4 / 50) / 2 * 100)
    assert result.mape == pytest.approx(5.6667, abs=1e-4)
    assert result.rmse == pytest.approx(math.sqrt(10.0))
    assert result.samples == 1


def test_perfect_forecast():
    y = make_rng(0).uniform(20, 70, size=(5, 3))
    result = evaluate(y, y)
    assert result.mae == 0.0 and result.mape == 0.0 and result.rmse == 0.0


def test_matches_naive_loops():
    rng = make_rng(1)
    y = rng.uniform(5, 70, size=(20, 4))
    p = y + rng.normal(scale=3.0, size=y.shape)
    abs_sum = pct_sum = sq_sum = 0.0
    for i in range(20):
        for j in range(4):
            abs_sum += abs(p[i, j] - y[i, j])
            pct_sum += abs(p[i, j] - y[i, j]) / y[i, j]
            sq_sum += (p[i, j] - y[i, j]) ** 2
    result = evaluate(p, y)
    assert result.mae == pytest.approx(abs_sum / 80, rel=1e-12)
    assert result.mape == pytest.approx(pct_sum / 80 * 100, rel=1e-12)
    assert result.rmse == pytest.approx(math.sqrt(sq_sum / 80), rel=1e-12)
    assert result.rmse >= result.mae
    assert_allclose(result.per_node_mae, np.abs(p - y).mean(axis=0))


def test_low_speeds_excluded_from_mape(caplog):
    result = evaluate([[10.0, 2.0]], [[0.5, 1.0]])
    assert math.isnan(result.mape)
    assert result.mape_excluded == 2
    assert "excluded from MAPE" in caplog.text

    result = evaluate([[10.0, 55.0]], [[0.5, 50.0]])
    assert result.mape == pytest.approx(10.0)
    assert result.mape_excluded == 1


def test_errors():
    with pytest.raises(ShapeError):
        evaluate(np.zeros((2, 3)), np.zeros((3, 2)))
    with pytest.raises(ValueError):
        evaluate(np.zeros((0, 3)), np.zeros((0, 3)))
    with pytest.raises(NonFiniteError):
        evaluate([[np.nan]], [[1.0]])


def test_metrics_table():
    first = evaluate([[58.0, 54.0]], [[60.0, 50.0]])
    second = evaluate([[60.0, 50.0]], [[60.0, 50.0]])
    table = metrics_table([("lstm", first), ("tgc-lstm", second)])
    assert table["model"].tolist() == ["lstm", "tgc-lstm"]
    assert list(table.columns) == ["model", "mae", "mae_std", "mape", "rmse", "samples", "mape_excluded"]
    assert table.loc[1, "mae"] == 0.0


def test_avg_weights_zero_model():
    cell = TGCLSTMCell([SupportMask(1, np.ones((3, 3))), SupportMask(2, np.ones((3, 3)))])
    result = export_avg_weights(cell)
    assert_array_equal(result.values, 0.0)
    assert not result.support.any()


def test_avg_weights_single_hop_mask(tmp_path):
    mask = np.array([[1.0, 1.0, 0.0], [1.0, 1.0, 1.0], [0.0, 1.0, 1.0]])
    cell = TGCLSTMCell([SupportMask(1, mask)])
    cell.tgc.weights[0].value = mask.copy()
    path = tmp_path / "avg.csv"
    result = export_avg_weights(cell, path, ["a", "b", "c"])
    assert_array_equal(result.values, mask)
    values, ids = read_matrix_csv(path, row_labels=True)
    assert ids == ["a", "b", "c"]
    assert_array_equal(values, mask)


def test_avg_weights_averages_hops():
    cell = TGCLSTMCell([SupportMask(1, np.eye(2)), SupportMask(2, np.ones((2, 2)))])
    cell.tgc.weights[0].value = np.array([[2.0, 0.0], [0.0, 4.0]])
    cell.tgc.weights[1].value = np.array([[0.0, 6.0], [2.0, 0.0]])
    assert_array_equal(export_avg_weights(cell).values, [[1.0, 3.0], [1.0, 2.0]])


def test_avg_weights_requires_tgc_layer():
    with pytest.raises(ValueError):
        export_avg_weights(VanillaLSTMCell(3))


def test_export_predictions(tmp_path):
    predictions = np.array([[50.0, 51.0], [52.0, 53.0]])
    targets = np.array([[49.0, 50.0], [55.0, 56.0]])
    path = export_predictions(predictions, targets, ["a", "b"], tmp_path / "series.csv", node="b")
    frame = pd.read_csv(path)
    assert frame.columns.tolist() == ["step", "target", "prediction"]
    assert frame["prediction"].tolist() == [51.0, 53.0]
    assert frame["target"].tolist() == [50.0, 56.0]

    stamps = pd.date_range("2015-01-01", periods=2, freq="5min")
    path = export_predictions(predictions, targets, ["a", "b"], tmp_path / "ts.csv", 0, stamps)
    assert pd.read_csv(path).columns[0] == "timestamp"

    with pytest.raises(ValueError):
        export_predictions(predictions, targets, ["a", "b"], tmp_path / "x.csv", node=5)
