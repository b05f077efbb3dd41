"""Exception hierarchy shared by every symctl module."""


class SymctlError(Exception):
    """Base class for all symctl errors."""


# linear algebra
class LinAlgError(SymctlError):
    pass


class SingularMatrix(LinAlgError):
    pass


class NotSymmetric(LinAlgError):
    pass


class NotHurwitz(LinAlgError):
    pass


class RankDeficient(LinAlgError):
    pass


# composite function
class CompositeError(SymctlError):
    pass


class InvalidInterval(CompositeError):
    pass


class InvalidRho(CompositeError):
    pass


class NonMonotone(CompositeError):
    pass


class NegativeArgument(CompositeError, ValueError):
    pass


# simulation
class NonFiniteState(SymctlError):
    pass


class Diverged(SymctlError):
    """Raised when a state norm leaves the admissible range.

    ``t_last`` is the last time at which the state was finite and below the
    divergence threshold; ``trajectory`` holds whatever was recorded up to it.
    """

    def __init__(self, message, t_last, trajectory=None):
        super().__init__(message)
        self.t_last = t_last
        self.trajectory = trajectory


class GridMismatch(SymctlError):
    pass


class InvalidD(SymctlError, ValueError):
    pass


# configuration
class ConfigError(SymctlError):
    pass


class ParseError(ConfigError):
    def __init__(self, message, line=None, path=None):
        where = ""
        if path is not None:
            where += f"{path}:"
        if line is not None:
            where += f"{line}: "
        elif where:
            where += " "
        super().__init__(where + message)
        self.line = line
        self.path = path


class ValidationError(ConfigError, ValueError):
    pass
