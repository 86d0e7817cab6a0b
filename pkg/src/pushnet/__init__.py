"""Push-based sparse graph propagation and node classification.

Feature mass is pushed along the most relevant edges until convergence;
equivalently, one synchronous propagation with precomputed sparse
restart-walk matrices. The hot push kernels live in a compiled extension
with a bit-identical pure-Python fallback (see ``pushnet.backend_name``).
"""

from ._backend import available_backends, default_backend
from .appr import (
    ApprColumn,
    ApprMatrix,
    ApprParams,
    build_appr_matrix,
    exact_ppr_oracle,
    reverse_push_column,
    sum_scales,
)
from .errors import (
    ConfigurationError,
    DomainError,
    NumericalError,
    ParseError,
    PushnetError,
)
from .graph import (
    Graph,
    NormalizationKind,
    l1_normalize_features,
    largest_connected_component,
    load_edge_list,
    normalize_adjacency,
    row_l1_normalize,
)
from .lpmp import LpmpResult, lpmp_propagate
from .neural import Model, ModelSpec
from .propagation import Aggregator, PropagationCache, ScaleSet, propagate, scale_aggregate

__version__ = "0.1.0"


def backend_name() -> str:
    """Name of the kernel backend selected at import time."""
    return default_backend()


__all__ = [
    "__version__",
    "backend_name",
    "available_backends",
    "Graph",
    "NormalizationKind",
    "load_edge_list",
    "largest_connected_component",
    "normalize_adjacency",
    "row_l1_normalize",
    "l1_normalize_features",
    "ApprParams",
    "ApprColumn",
    "ApprMatrix",
    "reverse_push_column",
    "exact_ppr_oracle",
    "build_appr_matrix",
    "sum_scales",
    "LpmpResult",
    "lpmp_propagate",
    "Aggregator",
    "ScaleSet",
    "PropagationCache",
    "propagate",
    "scale_aggregate",
    "Model",
    "ModelSpec",
    "PushnetError",
    "ParseError",
    "DomainError",
    "ConfigurationError",
    "NumericalError",
]
