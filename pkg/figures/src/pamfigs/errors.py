"""Exception hierarchy for the figure renderer.

Exit-code mapping used by the CLI:
  2  spec-file problems (parse errors, unknown kinds, missing inputs)
  3  data problems (schema mismatches, empty tables, overlay disagreement)
"""

from __future__ import annotations


class PamfigsError(Exception):
    """Base class; carries the CLI exit code."""

    exit_code = 3


class SpecError(PamfigsError):
    """The figure spec is missing, unparsable, or self-inconsistent."""

    exit_code = 2

    def __init__(self, problems):
        if isinstance(problems, str):
            problems = [problems]
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


class SchemaError(PamfigsError):
    """An input CSV does not match the layout its figure kind expects."""


class EmptyDataError(PamfigsError):
    """An input CSV parsed cleanly but carries no data rows."""


class OverlayMismatchError(PamfigsError):
    """A re-implemented overlay formula disagrees with its oracle table."""
