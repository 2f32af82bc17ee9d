"""Exception hierarchy shared by every module."""


class AHNError(Exception):
    """Base class for all errors raised by ahncut."""


class ParameterError(AHNError, ValueError):
    """A numeric parameter is outside its admissible range."""


class StructureError(AHNError, ValueError):
    """Sizes or indices do not match the network they refer to."""


class InvalidLabeling(AHNError, ValueError):
    """A labeling assigns a forbidden label (e.g. Free on the base level)."""


class OracleInfeasible(AHNError):
    """Exact enumeration would exceed the configured assignment budget."""


class NonSubmodularError(AHNError):
    """A pairwise boolean term cannot be represented by a graph cut."""


class InfeasibleError(AHNError):
    """Every assignment activates a prohibited state."""


class ParseError(AHNError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
