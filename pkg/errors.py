"""Exceptions raised by the fusion toolkit.

Each one subclasses a builtin so callers that only know about
`ValueError`/`RuntimeError` keep working. The CLI layer is the only place
that catches them.
"""
from __future__ import annotations
from typing import Optional


class ConfigError(ValueError):
    """Invalid run configuration or variant/data mismatch."""


class DataFormatError(ValueError):
    """An input table violates its schema.

    `file` and `row` (1-based data row, header excluded) are kept on the
    exception so the CLI error record can point at the offending line.
    """

    def __init__(self, message: str, file: Optional[str] = None, row: Optional[int] = None):
        self.file = file
        self.row = row
        where = ""
        if file is not None:
            where = f"{file}"
            if row is not None:
                where += f" row {row}"
            where += ": "
        super().__init__(where + message)


class CorruptStateError(RuntimeError):
    """A parameter state produced a non-finite latent mean."""


class DegenerateStateError(RuntimeError):
    """Every category weight of a Gibbs row sits at the clamp floor."""


class NotApplicableError(ValueError):
    """The requested metric is undefined for this model variant."""


class SolverError(RuntimeError):
    """A cutoff construction failed its residual check."""


class StudyAbortedError(RuntimeError):
    """A replicate failed; completed replicates stay in the study checkpoint."""
