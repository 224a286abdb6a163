"""Exception types shared across the package."""


class IdcloopError(Exception):
    """Base class for all package errors."""


class ShapeError(IdcloopError, ValueError):
    """Tensor shapes do not satisfy an operation's contract."""


class BatchTooSmallError(IdcloopError, ValueError):
    """Batch statistics need at least two samples."""


class InvalidRateError(IdcloopError, ValueError):
    """Dropout rate outside [0, 1)."""


class InvalidTargetError(IdcloopError, ValueError):
    """Targets are not valid one-hot rows."""


class DatasetError(IdcloopError):
    """Problems with dataset scanning, balancing, or splitting."""


class DecodeError(IdcloopError):
    """Image file could not be decoded."""


class SizeError(IdcloopError):
    """Decoded image has the wrong spatial size."""


class ConfigError(IdcloopError, ValueError):
    """Run configuration is invalid or contains unknown keys."""


class StateError(IdcloopError):
    """On-disk artifacts disagree with each other or with the configuration."""


class DivergedError(IdcloopError):
    """Training produced a non-finite loss.

    ``history`` carries the epochs completed before the failure so callers
    can still persist a partial training record.
    """

    def __init__(self, epoch: int, batch: int, history=None):
        self.epoch = epoch
        self.batch = batch
        self.history = history
        super().__init__(f"non-finite loss at epoch {epoch}, batch {batch}")


class CheckpointError(IdcloopError):
    """Base class for checkpoint load failures."""


class CheckpointMagicError(CheckpointError):
    """File does not start with the expected magic bytes."""


class CheckpointVersionError(CheckpointError):
    """Unsupported checkpoint format version."""


class CheckpointTruncatedError(CheckpointError):
    """File ends before the declared content."""


class CheckpointTensorCountError(CheckpointError):
    """Declared tensor count disagrees with the file content."""


class CheckpointCRCError(CheckpointError):
    """Stored CRC-32 does not match the file content."""


class CheckpointConfigHashError(CheckpointError):
    """Checkpoint belongs to a different model configuration."""


class ServiceError(IdcloopError):
    """Base class for review-service errors; carries an API error code."""

    code = "internal"
    http_status = 500


class NotFoundError(ServiceError):
    code = "not_found"
    http_status = 404


class ConflictError(ServiceError):
    code = "conflict"
    http_status = 409


class ValidationError(ServiceError):
    code = "validation"
    http_status = 422


class NotReadyError(ServiceError):
    code = "service_not_ready"
    http_status = 503
