"""Exception hierarchy shared across the pipeline.

The CLI maps these onto exit codes: validation failures exit 1, I/O errors
exit 2 (plain OSError), numerical failures exit 3.
"""

from __future__ import annotations


class PipelineError(Exception):
    """Base class for all errors raised by this package."""


class ParseError(PipelineError):
    """Input document is not well-formed (syntax, layout, arity)."""


class ValidationError(PipelineError):
    """Input is well-formed but violates a contract; lists offenders."""


class EmptySceneError(PipelineError):
    """A scene with no boxes and no false positives cannot yield negatives."""


class NumericalError(PipelineError):
    """Numerical contract violation (zero norm, divergence, non-finite loss)."""


class TrainingDiverged(NumericalError):
    """Training produced a non-finite loss; carries the offending batch."""

    def __init__(self, batch_index: int, message: str = "") -> None:
        self.batch_index = batch_index
        super().__init__(message or f"non-finite loss at batch {batch_index}")
