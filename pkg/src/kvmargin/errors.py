"""Exception hierarchy shared by every kvmargin module.

All exceptions raised on bad inputs derive from :class:`KvmError`, so callers
can catch one type at a boundary (the CLI maps them to exit code 1).  Anything
*not* in this hierarchy escaping a public function is a bug, not a data
problem.
"""


class KvmError(Exception):
    """Base class for all data and validation failures."""


class DimensionError(KvmError):
    """Point clouds or tensors with incompatible ambient dimensions."""


class DataError(KvmError):
    """Non-finite values, negative weights, or otherwise malformed numerics."""


class SizeError(KvmError):
    """An input exceeds a hard size limit (e.g. brute-force support > 8)."""


class SampleSizeError(KvmError):
    """Too few samples for the requested estimator (m < 2k, empty class...)."""


class SchemaError(KvmError):
    """Structural problems: missing fields, mismatched keys, bad shapes."""


class LabelError(KvmError):
    """A label outside [0, num_classes)."""


class ClassCountError(KvmError):
    """Fewer than two classes where a margin is requested."""


class DegenerateNormalizerError(KvmError):
    """A margin normalizer evaluated to zero (point-mass features etc.)."""


class DomainError(KvmError):
    """A scalar argument outside its mathematical domain."""


class InsufficientDataError(KvmError):
    """Not enough comparable model pairs to score a collection."""


class IoError(KvmError):
    """Missing files or unreadable paths during dump I/O."""


class CorruptionError(KvmError):
    """Checksum mismatch or truncated tensor file."""


class GeometryError(KvmError):
    """Synthetic-data constraints that cannot be satisfied (center packing)."""
