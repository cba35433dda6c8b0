"""Standalone converter from public graph benchmarks to the .sgr1 format."""

from .convert import DatasetManifest, convert, convert_raw
from .errors import (ConvertError, DownloadError, SourceFormatError,
                     ValidationError)
from .sgr1 import SgrPayload, read_sgr1, write_sgr1
from .sources import DATASETS, RawDataset, load_raw
from .verify import verify

__all__ = [
    "ConvertError",
    "DATASETS",
    "DatasetManifest",
    "DownloadError",
    "RawDataset",
    "SgrPayload",
    "SourceFormatError",
    "ValidationError",
    "convert",
    "convert_raw",
    "load_raw",
    "read_sgr1",
    "verify",
    "write_sgr1",
]
