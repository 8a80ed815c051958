"""Check that every public module imports and exposes what the CLI needs."""

import importlib

import pytest

MODULES = [
    "trafficgc",
    "trafficgc.utils.constants",
    "trafficgc.utils.helpers",
    "trafficgc.errors",
    "trafficgc.config",
    "trafficgc.graph",
    "trafficgc.numeric",
    "trafficgc.models",
    "trafficgc.data",
    "trafficgc.checkpoint",
    "trafficgc.training",
    "trafficgc.metrics",
    "trafficgc.gradcheck",
    "trafficgc.experiment",
    "trafficgc.main",
]


@pytest.mark.parametrize("name", MODULES)
def test_module_imports(name):
    assert importlib.import_module(name) is not None


def test_public_names():
    import trafficgc
    for name in trafficgc.__all__:
        assert hasattr(trafficgc, name), name


def test_example_config_loads():
    from pathlib import Path

    from trafficgc.config import load_config
    config = load_config(Path(__file__).parent / "forecaster.toml")
    assert config.graph.k_hops == 3
    assert config.train.batch_size == 10
