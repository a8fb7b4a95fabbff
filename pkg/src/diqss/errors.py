"""Exception hierarchy shared by all diqss modules."""


class DiqssError(Exception):
    """Base class for every error raised by this package."""


class ParameterError(DiqssError, ValueError):
    """An input parameter lies outside its admissible domain."""


class StateError(DiqssError, ValueError):
    """A quantum state violates normalization or shape invariants."""


class DomainError(DiqssError, ValueError):
    """A formula was evaluated outside the domain where it is real-valued."""


class SolverError(DiqssError, RuntimeError):
    """The constrained correlation optimization has no feasible point."""


class ThresholdNotFoundError(DiqssError, RuntimeError):
    """A root bracket shows no sign change."""


class ConfigError(DiqssError, ValueError):
    """A run configuration is malformed (unknown key, bad value, bad axis)."""
