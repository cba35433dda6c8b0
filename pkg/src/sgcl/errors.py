"""Exception hierarchy shared by all engine modules."""


class SgclError(Exception):
    """Base class for all engine errors."""


class ShapeError(SgclError):
    """Operand dimensions do not chain."""


class ConfigError(SgclError):
    """Invalid hyperparameter, flag, or config file."""


class FormatError(SgclError):
    """On-disk artifact failed validation (bad magic, CRC, truncation, CSR invariants)."""

    def __init__(self, message: str, offset: int | None = None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class NumericError(SgclError):
    """Domain violation, divergence, or solver non-convergence."""


class ContractError(SgclError):
    """An API precondition was violated (e.g. backward on a non-scalar loss)."""


class InsufficientSamplesError(SgclError):
    """Statistic requires more rows than were provided."""


class DegenerateBatchError(SgclError):
    """Contrastive batch too small to form negatives."""


class ProtocolError(SgclError):
    """Evaluation protocol cannot run (e.g. labels missing)."""
