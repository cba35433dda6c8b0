"""Rule-guided graph contrastive learning engine.

From-scratch stack: CSR linear algebra, a tape autodiff core, a GCN encoder
with InfoNCE plus two structural rule losses, and the downstream evaluation
protocols (linear probe, clustering, error profiling).
"""

__version__ = "0.1.0"

from .errors import (
    ConfigError,
    ContractError,
    DegenerateBatchError,
    FormatError,
    InsufficientSamplesError,
    NumericError,
    ProtocolError,
    SgclError,
    ShapeError,
)

__all__ = [
    "ConfigError",
    "ContractError",
    "DegenerateBatchError",
    "FormatError",
    "InsufficientSamplesError",
    "NumericError",
    "ProtocolError",
    "SgclError",
    "ShapeError",
    "__version__",
]
