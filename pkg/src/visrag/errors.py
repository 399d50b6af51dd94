"""Exception hierarchy shared across the package."""

from __future__ import annotations


class VisragError(Exception):
    """Base class for all errors raised by visrag."""


# document model
class BundleError(VisragError):
    """A document bundle could not be loaded."""


class MissingFileError(BundleError):
    pass


class HashMismatchError(BundleError):
    pass


class SchemaError(BundleError):
    pass


class UnknownImageError(VisragError, KeyError):
    pass


# providers
class ProviderUnavailableError(VisragError):
    """Backend refused, timed out, or answered with something unusable."""


class DimensionMismatchError(VisragError, ValueError):
    pass


class EmptyPayloadError(VisragError, ValueError):
    pass


# fusion / index
class MissingModalityError(VisragError, ValueError):
    pass


class UnknownSchemeError(VisragError, KeyError):
    pass


class IndexFormatError(VisragError):
    """Index file is structurally invalid."""


class FormatVersionMismatchError(IndexFormatError):
    pass


class ChecksumMismatchError(IndexFormatError):
    pass


class IndexIOError(VisragError, OSError):
    pass


# scoring / evaluation
class EmptyQueryError(VisragError, ValueError):
    pass


class MissingComponentError(VisragError, ValueError):
    pass


class CorpusMismatchError(VisragError, ValueError):
    pass


class EmptyRunError(VisragError, ValueError):
    pass


class ZeroBaselineError(VisragError, ZeroDivisionError):
    pass


class UnknownFormatError(VisragError, ValueError):
    pass

