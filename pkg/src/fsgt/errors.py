"""Exception hierarchy shared across the toolkit.

The CLI maps these onto exit codes: ConfigError -> 2, DataError -> 3,
NoFittableStepsError -> 4.
"""


class FsgtError(Exception):
    pass


class ConfigError(FsgtError):
    pass


class DataError(FsgtError):
    pass


class SnapshotFormatError(DataError):
    """Snapshot file pair is structurally invalid (length, schema, keys)."""


class SnapshotCorruptError(DataError):
    """Snapshot data bytes do not match the manifest checksum."""


class CascadeNumericsError(DataError):
    """A relaxation step produced non-finite values."""


class NoFittableStepsError(FsgtError):
    """The fit stage found no step with enough clean scales."""
