"""Exception types shared across the library.

Every error raised on a user-facing path derives from SgBridgeError so the
CLI can convert any library failure into a named message and a nonzero exit.
"""


class SgBridgeError(Exception):
    """Base class for all sgbridge errors."""


class DimensionError(SgBridgeError):
    """Tensor shapes do not match an operation's contract."""


class EmptyInputError(SgBridgeError):
    """An operation received an empty point set / row set."""


class LabelError(SgBridgeError):
    """A class index or target entry lies outside the valid range."""


class NumericError(SgBridgeError):
    """A forward or backward pass produced a non-finite value."""


class SceneFormatError(SgBridgeError):
    """A scene file failed to parse or validate; message names file/field."""


class DegenerateSceneError(SgBridgeError):
    """A scene has too few segments to build a relation graph."""


class VocabError(SgBridgeError):
    """A vocabulary name or size does not match what the artifact expects."""


class ConfigError(SgBridgeError):
    """A run configuration is invalid or references missing inputs."""


class ValidationError(SgBridgeError):
    """Input data violates a documented constraint (e.g. negative weight)."""


class CheckpointError(SgBridgeError):
    """A checkpoint file is corrupt, truncated, or version-mismatched."""


class TrainingDivergedError(SgBridgeError):
    """Training hit a non-finite loss; message names the epoch."""
