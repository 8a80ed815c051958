"""Model snapshots and their on-disk container.

A checkpoint file is an uncompressed ``.npz`` archive holding a format tag and
version, the model kind, a JSON metadata string, the graph-derived structure
arrays (``structure.<key>``) and, for every parameter, its values
(``value.<name>``) and RMSProp state (``rms.<name>``).
"""

import json
import logging
import zipfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Optional

import numpy as np

from .errors import CheckpointError, ShapeError
from .models import MODEL_CLASSES, ModelKind, RecurrentForecaster
from .utils.constants import CHECKPOINT_FORMAT, CHECKPOINT_VERSION
from .utils.helpers import PathLike

logger = logging.getLogger(__name__)


@dataclass(eq=False)
class Checkpoint:
    """Frozen copy of a model's parameters and optimizer state.

    Attributes:
        kind: Model kind string ("tgc-lstm", "lstm", "lsgc-lstm")
        structure: Arrays needed to rebuild the model (masks, Laplacian, N)
        values: Parameter values by name
        rms_states: RMSProp state by name
        meta: Free-form JSON-serializable metadata (config, node ids, scale)
    """

    kind: str
    structure: Dict[str, np.ndarray]
    values: Dict[str, np.ndarray]
    rms_states: Dict[str, np.ndarray]
    meta: Dict[str, Any] = field(default_factory=dict)

    @classmethod
    def capture(cls, model: RecurrentForecaster, meta: Optional[Dict[str, Any]] = None) -> "Checkpoint":
        params = model.parameters()
        return cls(
            kind=model.kind,
            structure={k: np.array(v) for k, v in model.structure().items()},
            values={p.name: p.value.copy() for p in params},
            rms_states={p.name: p.rms_state.copy() for p in params},
            meta=dict(meta or {}),
        )

    def restore(self, model: RecurrentForecaster) -> RecurrentForecaster:
        """Copy the stored state into model (which must have the same structure)."""
        if model.kind != self.kind:
            raise CheckpointError(f"checkpoint holds a {self.kind} model, got {model.kind}")
        params = model.named_parameters()
        if set(params) != set(self.values):
            raise CheckpointError(f"parameter names differ: {sorted(set(params) ^ set(self.values))}")
        for name, param in params.items():
            if param.shape != self.values[name].shape:
                raise ShapeError(f"{name}: checkpoint shape {self.values[name].shape}, model shape {param.shape}")
        for key, value in model.structure().items():
            if key in self.structure and not np.array_equal(value, self.structure[key]):
                raise CheckpointError(f"model {key!r} differs from the checkpoint's")

        for name, param in params.items():
            param.value = self.values[name].copy()
            param.rms_state = self.rms_states[name].copy()
            param.apply_mask()
            param.zero_grad()
        return model

    def build(self) -> RecurrentForecaster:
        """Instantiate a new model from the stored structure and state."""
        try:
            cls = MODEL_CLASSES[ModelKind(self.kind)]
            model = cls.from_structure(self.structure)
        except (KeyError, ValueError) as exc:
            raise CheckpointError(f"cannot rebuild {self.kind!r} model: {exc}") from None
        try:
            return self.restore(model)
        except ShapeError as exc:
            raise CheckpointError(str(exc)) from None


def save_checkpoint(source, path: PathLike, meta: Optional[Dict[str, Any]] = None) -> Path:
    """Write a model or Checkpoint to path.

    The archive is written next to the target and moved into place, so an
    interrupted save never leaves a half-written checkpoint under path.

    Args:
        source: RecurrentForecaster or Checkpoint
        path: Destination file
        meta: Metadata to merge into the stored meta

    Returns:
        The written path
    """
    checkpoint = source if isinstance(source, Checkpoint) else Checkpoint.capture(source)
    merged = {**checkpoint.meta, **(meta or {})}

    arrays = {
        "format": np.array(CHECKPOINT_FORMAT),
        "version": np.array(CHECKPOINT_VERSION),
        "kind": np.array(checkpoint.kind),
        "meta": np.array(json.dumps(merged, sort_keys=True)),
    }
    for key, value in checkpoint.structure.items():
        arrays[f"structure.{key}"] = value
    for name, value in checkpoint.values.items():
        arrays[f"value.{name}"] = value
        arrays[f"rms.{name}"] = checkpoint.rms_states[name]

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    partial = path.with_name(path.name + ".partial")
    with open(partial, "wb") as fh:
        np.savez(fh, **arrays)
    partial.replace(path)
    logger.info("Checkpoint written to %s (%s, %d parameters)", path, checkpoint.kind, len(checkpoint.values))
    return path


def read_checkpoint(path: PathLike) -> Checkpoint:
    """Parse a checkpoint file without building a model."""
    try:
        with np.load(path, allow_pickle=False) as archive:
            arrays = {key: archive[key] for key in archive.files}
    except (zipfile.BadZipFile, EOFError, ValueError, OSError, KeyError) as exc:
        raise CheckpointError(f"{path}: unreadable checkpoint ({exc})") from None

    try:
        fmt = str(arrays["format"])
        version = int(arrays["version"])
        kind = str(arrays["kind"])
        meta = json.loads(str(arrays["meta"]))
    except (KeyError, ValueError, TypeError) as exc:
        raise CheckpointError(f"{path}: missing or corrupt header ({exc})") from None
    if fmt != CHECKPOINT_FORMAT:
        raise CheckpointError(f"{path}: not a checkpoint (format {fmt!r})")
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(f"{path}: checkpoint version {version}, expected {CHECKPOINT_VERSION}")

    structure, values, rms = {}, {}, {}
    for key, value in arrays.items():
        prefix, _, name = key.partition(".")
        if prefix == "structure":
            structure[name] = value
        elif prefix == "value":
            values[name] = value
        elif prefix == "rms":
            rms[name] = value
    if set(values) != set(rms):
        raise CheckpointError(f"{path}: values and RMSProp states cover different parameters")
    return Checkpoint(kind, structure, values, rms, meta)


def load_checkpoint(path: PathLike, model: Optional[RecurrentForecaster] = None) -> RecurrentForecaster:
    """Load a checkpoint into a new model, or into model after validating shapes.

    Raises:
        CheckpointError: Corrupt, truncated or wrong-version file
        ShapeError: model's parameter shapes differ from the stored ones
    """
    checkpoint = read_checkpoint(path)
    if model is None:
        model = checkpoint.build()
    else:
        checkpoint.restore(model)
    logger.debug("Loaded %s checkpoint from %s", checkpoint.kind, path)
    return model
