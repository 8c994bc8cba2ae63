"""intentgraft: entangled-intent dataset synthesis and PU multi-label training.

The package covers the full desk-scale pipeline: corpus ingestion and fixture
generation, version-conflict / merge-friction label transformations, a hashed
n-gram linear classifier with four loss regimes, set-based evaluation metrics,
label co-occurrence analysis with density clustering, and an in-context-learning
evaluation harness.
"""

__version__ = "0.1.0"

from intentgraft.errors import (
    DivergenceError,
    IntentgraftError,
    ParseError,
    PlanError,
    TransportError,
    ValidationError,
)

__all__ = [
    "__version__",
    "IntentgraftError",
    "ParseError",
    "ValidationError",
    "PlanError",
    "DivergenceError",
    "TransportError",
]
