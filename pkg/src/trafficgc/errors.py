"""Exception hierarchy for the forecaster."""


class TrafficGCError(Exception):
    """Root of every error raised by trafficgc."""


class GraphValidationError(TrafficGCError, ValueError):
    """Malformed traffic graph: self-loops, duplicate edges, bad lengths or speeds."""


class ShapeError(TrafficGCError, ValueError):
    """Operand shapes do not conform."""


class NonFiniteError(TrafficGCError, ArithmeticError):
    """A NaN or infinity reached a checked boundary."""

    def __init__(self, component: str, message: str = ""):
        self.component = component
        super().__init__(message or f"non-finite values in {component}")


class DatasetError(TrafficGCError):
    """Speed or topology file could not be ingested."""


class CheckpointError(TrafficGCError):
    """Checkpoint file is corrupt, truncated or from another version."""


class TapeConsumedError(TrafficGCError):
    """A forward tape was passed to backward a second time."""


class TrainingDivergedError(TrafficGCError):
    """Loss became non-finite during training."""

    def __init__(self, batch_index: int, epoch: int, value: float):
        self.batch_index = batch_index
        self.epoch = epoch
        self.value = value
        super().__init__(
            f"non-finite loss {value!r} at epoch {epoch}, batch {batch_index}"
        )


class ConfigError(TrafficGCError):
    """Configuration file or flag value is invalid."""
