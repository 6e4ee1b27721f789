"""Exception types shared across the package."""


class DataError(ValueError):
    """Invalid or inconsistent data: bad shapes, misaligned ids, out-of-range values."""


class FileFormatError(DataError):
    """A binary artifact file violates its on-disk contract."""


class BadMagicError(FileFormatError):
    """File does not start with the expected magic bytes."""


class VersionMismatchError(FileFormatError):
    """File declares an unsupported format version."""


class TruncatedFileError(FileFormatError):
    """File ends before the declared payload is complete."""
