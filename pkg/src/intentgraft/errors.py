"""Exception hierarchy shared across the pipeline.

The CLI maps these onto its exit-code contract: validation problems
(ValidationError and subclasses, ParseError) exit 2, I/O problems exit 1,
numerical divergence exits 3.
"""

from __future__ import annotations


class IntentgraftError(Exception):
    """Base class for all errors raised by this package."""


class ParseError(IntentgraftError):
    """A file or label string could not be parsed; carries location context."""


class ValidationError(IntentgraftError):
    """A value violates a documented invariant."""


class PlanError(ValidationError):
    """A transformation plan is internally inconsistent or does not fit the corpus."""


class DivergenceError(IntentgraftError):
    """Training produced a non-finite loss."""


class TransportError(IntentgraftError):
    """A completion transport failed to produce a response."""
