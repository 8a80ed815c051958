"""Tests for configuration defaults, the TOML reader and flag precedence."""

import pytest

from trafficgc.config import (
    GraphConfig, ModelConfig, TrainConfig, apply_overrides, config_fields, load_config, parse_split
)
from trafficgc.errors import ConfigError
from trafficgc.main import build_parser, resolve_config


def test_defaults():
    config = ModelConfig()
    assert config.seq_len == 10
    assert config.split == (0.7, 0.1, 0.2)
    assert config.graph.k_hops == 3
    assert config.graph.horizon_steps == 3
    assert config.train.batch_size == 10
    assert config.train.lambda1 == 0.01 and config.train.lambda2 == 0.01
    assert config.train.optimizer.learning_rate == 1e-5
    assert config.train.optimizer.alpha == 0.99
    assert config.train.grad_clip == 5.0


def test_horizon_override():
    assert GraphConfig(k_hops=2, m_steps=4).horizon_steps == 4


def test_load_config(tmp_path):
    path = tmp_path / "run.toml"
    path.write_text('batch-size = 40\nlr = 0.001\nsplit = "0.6,0.2,0.2"\n\n[graph]\nk_hops = 2\n')
    config = load_config(path)
    assert config.train.batch_size == 40
    assert config.train.optimizer.learning_rate == 0.001
    assert config.split == (0.6, 0.2, 0.2)
    assert config.graph.k_hops == 2


def test_unknown_key(tmp_path):
    path = tmp_path / "run.toml"
    path.write_text("hidden_size = 12\n")
    with pytest.raises(ConfigError, match="hidden_size"):
        load_config(path)


def test_malformed_toml(tmp_path):
    path = tmp_path / "run.toml"
    path.write_text("batch_size = = 3\n")
    with pytest.raises(ConfigError):
        load_config(path)


@pytest.mark.parametrize("value", ["0.5,0.5", "0.7,0.2,0.2", "a,b,c", "0.8,0.3,-0.1"])
def test_bad_split(value):
    with pytest.raises(ConfigError):
        parse_split(value)


@pytest.mark.parametrize("kwargs", [
    {"batch_size": 0}, {"patience": 0}, {"lambda1": -1.0}, {"max_epochs": 0},
])
def test_train_config_validation(kwargs):
    with pytest.raises(ConfigError):
        TrainConfig(**kwargs)


def test_overrides_skip_none():
    config = apply_overrides(ModelConfig(), {"seq-len": None, "alpha": 0.9})
    assert config.seq_len == 10
    assert config.train.optimizer.alpha == 0.9


def test_flags_beat_config_file(tmp_path):
    path = tmp_path / "run.toml"
    path.write_text("batch_size = 40\nk_hops = 2\n")
    args = build_parser().parse_args(
        ["train", "--data", "d", "--out", "o", "--config", str(path), "--batch-size", "7", "--model", "lstm"]
    )
    config = resolve_config(args)
    assert config.train.batch_size == 7
    assert config.graph.k_hops == 2
    assert config.model == "lstm"


def test_config_fields_flat():
    flat = config_fields(ModelConfig())
    assert flat["model"] == "tgc-lstm"
    assert flat["learning_rate"] == 1e-5
    assert flat["split"] == "0.7,0.1,0.2"
    assert "optimizer" not in flat
