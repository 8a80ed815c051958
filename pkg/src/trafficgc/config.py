"""Configuration dataclasses and the TOML config-file reader.

Precedence is dataclass defaults < config file < explicit command-line flags.
Config keys mirror the long flag names; hyphens and underscores are
interchangeable (`batch-size = 10` and `batch_size = 10` are the same key).
"""

import logging

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from dataclasses import dataclass, field, fields, replace
from typing import Any, Dict, Mapping, Optional, Tuple

from .errors import ConfigError
from .utils.constants import (
    DEFAULT_ALPHA, DEFAULT_BATCH_SIZE, DEFAULT_DELTA_T_MIN, DEFAULT_EPSILON,
    DEFAULT_FREE_FLOW_MPH, DEFAULT_GRAD_CLIP, DEFAULT_K_HOPS, DEFAULT_LAMBDA1,
    DEFAULT_LAMBDA2, DEFAULT_LEARNING_RATE, DEFAULT_M_STEPS, DEFAULT_MAX_EPOCHS,
    DEFAULT_PATIENCE, DEFAULT_SEED, DEFAULT_SEQ_LEN, DEFAULT_SPLIT
)
from .utils.helpers import PathLike

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class OptimizerConfig:
    """RMSProp hyperparameters."""

    learning_rate: float = DEFAULT_LEARNING_RATE
    alpha: float = DEFAULT_ALPHA
    epsilon: float = DEFAULT_EPSILON

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ConfigError(f"learning rate must be positive, got {self.learning_rate}")
        if not 0 < self.alpha < 1:
            raise ConfigError(f"alpha must lie in (0, 1), got {self.alpha}")
        if self.epsilon < 0:
            raise ConfigError(f"epsilon must be nonnegative, got {self.epsilon}")


@dataclass(frozen=True)
class TrainConfig:
    """Training recipe: batching, penalties, early stopping and the optimizer."""

    batch_size: int = DEFAULT_BATCH_SIZE
    lambda1: float = DEFAULT_LAMBDA1
    lambda2: float = DEFAULT_LAMBDA2
    max_epochs: int = DEFAULT_MAX_EPOCHS
    patience: int = DEFAULT_PATIENCE
    seed: int = DEFAULT_SEED
    grad_clip: Optional[float] = DEFAULT_GRAD_CLIP
    shuffle: bool = True
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)

    def __post_init__(self):
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be at least 1, got {self.batch_size}")
        if self.patience < 1:
            raise ConfigError(f"patience must be at least 1, got {self.patience}")
        if self.lambda1 < 0 or self.lambda2 < 0:
            raise ConfigError("lambda1 and lambda2 must be nonnegative")
        if self.max_epochs < 1:
            raise ConfigError(f"max_epochs must be at least 1, got {self.max_epochs}")


@dataclass(frozen=True)
class GraphConfig:
    """Inputs to the FFR and support-mask construction."""

    k_hops: int = DEFAULT_K_HOPS
    m_steps: Optional[int] = DEFAULT_M_STEPS
    delta_t_min: float = DEFAULT_DELTA_T_MIN
    free_flow: float = DEFAULT_FREE_FLOW_MPH

    def __post_init__(self):
        if self.k_hops < 1:
            raise ConfigError(f"k_hops must be at least 1, got {self.k_hops}")
        if self.m_steps is not None and self.m_steps < 1:
            raise ConfigError(f"m_steps must be at least 1, got {self.m_steps}")
        if not self.delta_t_min > 0:
            raise ConfigError(f"delta_t_min must be positive, got {self.delta_t_min}")
        if not self.free_flow > 0:
            raise ConfigError(f"free_flow must be positive, got {self.free_flow}")

    @property
    def horizon_steps(self) -> int:
        """FFR horizon m, following K unless overridden."""
        return self.m_steps if self.m_steps is not None else self.k_hops


@dataclass(frozen=True)
class ModelConfig:
    """Everything needed to build, train and evaluate one model."""

    model: str = "tgc-lstm"
    seq_len: int = DEFAULT_SEQ_LEN
    split: Tuple[float, float, float] = DEFAULT_SPLIT
    graph: GraphConfig = field(default_factory=GraphConfig)
    train: TrainConfig = field(default_factory=TrainConfig)


# Flat key -> (section, field) routing shared by the config file and the CLI
_ROUTES = {
    "model": ("model", "model"),
    "seq_len": ("model", "seq_len"),
    "split": ("model", "split"),
    "k_hops": ("graph", "k_hops"),
    "m_steps": ("graph", "m_steps"),
    "delta_t_min": ("graph", "delta_t_min"),
    "free_flow": ("graph", "free_flow"),
    "batch_size": ("train", "batch_size"),
    "lambda1": ("train", "lambda1"),
    "lambda2": ("train", "lambda2"),
    "max_epochs": ("train", "max_epochs"),
    "patience": ("train", "patience"),
    "seed": ("train", "seed"),
    "grad_clip": ("train", "grad_clip"),
    "lr": ("optimizer", "learning_rate"),
    "learning_rate": ("optimizer", "learning_rate"),
    "alpha": ("optimizer", "alpha"),
    "epsilon": ("optimizer", "epsilon"),
}

CONFIG_KEYS = tuple(sorted(_ROUTES))


def _normalize_key(key: str) -> str:
    return key.strip().replace("-", "_")


def parse_split(value: Any) -> Tuple[float, float, float]:
    """Accept '0.7,0.1,0.2' or a 3-sequence; fractions must be positive and sum to 1."""
    if isinstance(value, str):
        parts = [p for p in value.split(",") if p.strip()]
    else:
        parts = list(value)
    try:
        split = tuple(float(p) for p in parts)
    except (TypeError, ValueError):
        raise ConfigError(f"split must be three numbers, got {value!r}") from None
    if len(split) != 3 or any(f <= 0 for f in split) or abs(sum(split) - 1.0) > 1e-9:
        raise ConfigError(f"split must be three positive fractions summing to 1, got {value!r}")
    return split


def apply_overrides(config: ModelConfig, overrides: Mapping[str, Any]) -> ModelConfig:
    """Return a copy of config with flat key overrides applied.

    Args:
        config: Base configuration
        overrides: Flat mapping such as {"batch-size": 40, "lr": 1e-3};
            None values are skipped

    Returns:
        New ModelConfig
    """
    sections: Dict[str, Dict[str, Any]] = {"model": {}, "graph": {}, "train": {}, "optimizer": {}}
    for raw_key, value in overrides.items():
        if value is None:
            continue
        key = _normalize_key(raw_key)
        if key not in _ROUTES:
            raise ConfigError(f"unknown config key {raw_key!r}; known keys: {', '.join(CONFIG_KEYS)}")
        section, name = _ROUTES[key]
        if name == "split":
            value = parse_split(value)
        sections[section][name] = value

    try:
        optimizer = replace(config.train.optimizer, **sections["optimizer"])
        train = replace(config.train, optimizer=optimizer, **sections["train"])
        graph = replace(config.graph, **sections["graph"])
        return replace(config, graph=graph, train=train, **sections["model"])
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


def load_config(path: PathLike, base: Optional[ModelConfig] = None) -> ModelConfig:
    """Read a TOML `key = value` config file on top of base (or the defaults)."""
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None

    flat: Dict[str, Any] = {}
    for key, value in data.items():
        # Tables are accepted as grouping only: [train] batch_size = 10
        if isinstance(value, dict):
            flat.update(value)
        else:
            flat[key] = value
    logger.debug("Loaded %d config keys from %s", len(flat), path)
    return apply_overrides(base or ModelConfig(), flat)


def config_fields(config: ModelConfig) -> Dict[str, Any]:
    """Flat view of the effective configuration for reports."""
    flat = {"model": config.model, "seq_len": config.seq_len,
            "split": ",".join(str(f) for f in config.split)}
    for section in (config.graph, config.train):
        for f in fields(section):
            if f.name != "optimizer":
                flat[f.name] = getattr(section, f.name)
    for f in fields(config.train.optimizer):
        flat[f.name] = getattr(config.train.optimizer, f.name)
    return flat
