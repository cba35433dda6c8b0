"""Converter exception hierarchy."""


class ConvertError(Exception):
    """Base class for all converter errors."""


class DownloadError(ConvertError):
    """A source file could not be fetched; safe to retry."""


class SourceFormatError(ConvertError):
    """A downloaded/cached source file does not parse."""


class ValidationError(ConvertError):
    """An emitted file or its statistics failed verification."""
