"""Exception hierarchy shared by all modules.

Exit-code mapping used by the CLI:
  2  configuration / parameter / format problems (user input)
  3  numeric trouble (non-convergence, accuracy, stiffness, degenerate data)
  4  resource limits (memory budget, dense caps, truncation caps)
"""

from __future__ import annotations


class PamlabError(Exception):
    """Base class; carries the CLI exit code."""

    exit_code = 3


class InvalidParameterError(PamlabError, ValueError):
    """A parameter is outside its documented range."""

    exit_code = 2


class ConfigError(PamlabError):
    """Experiment configuration is invalid; message lists every violation."""

    exit_code = 2

    def __init__(self, problems):
        if isinstance(problems, str):
            problems = [problems]
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


class FormatError(PamlabError):
    """A file could not be parsed; message carries position information."""

    exit_code = 2


class WindowError(PamlabError):
    """A lattice window is too small for the requested computation."""

    exit_code = 2


class ResourceError(PamlabError):
    """A configured memory or size budget would be exceeded."""

    exit_code = 4


class ConvergenceError(PamlabError):
    """An iterative solver ran out of iterations; carries the best residual."""

    def __init__(self, message, residual=None, trace=None):
        super().__init__(message)
        self.residual = residual
        self.trace = trace


class AccuracyError(PamlabError):
    """A certified error bound exceeds the requested tolerance."""


class StiffnessError(PamlabError):
    """Adaptive time stepping underflowed the minimum step size."""


class DegenerateInputError(PamlabError):
    """Input is structurally degenerate (empty list, zero mass, ...)."""


class DivergentIntegralError(PamlabError):
    """An exponential-moment formula was evaluated outside its domain."""


class InsufficientDataError(PamlabError):
    """Too few usable data points for the requested fit or estimate."""


class InsufficientTruncationError(PamlabError):
    """A point-process sample window cannot certify the requested quantity.

    Raised when an achieved maximizer sits too close to the truncation
    boundary, or when the closed-form mass of the uncaptured region exceeds
    the certification tolerance.  The caller is expected to enlarge the
    window and retry; ``theta_sampler`` does this automatically.
    """

    def __init__(self, message, void_mass=None, boundary_margin=None):
        super().__init__(message)
        self.void_mass = void_mass
        self.boundary_margin = boundary_margin


class TruncationCapError(ResourceError):
    """The adaptive truncation ladder hit its configured cap."""


class StatisticalPowerError(PamlabError):
    """Too few Monte Carlo replicas to resolve the requested quantile."""


class InternalConsistencyError(PamlabError):
    """Two routes that must agree did not; signals a solver failure."""
