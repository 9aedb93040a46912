"""Exception hierarchy shared by every module."""


class GuessworkError(Exception):
    """Base class for all library errors."""


class InvalidDistribution(GuessworkError, ValueError):
    pass


class DimensionMismatch(GuessworkError, ValueError):
    pass


class LengthMismatch(DimensionMismatch):
    pass


class NegativeEntry(GuessworkError, ValueError):
    pass


class EmptyBall(GuessworkError):
    """Some source symbol has no reproduction symbol within the threshold."""

    def __init__(self, symbol):
        self.symbol = symbol
        super().__init__(f"distortion ball of source symbol {symbol!r} is empty")


class AlphaOutOfRange(GuessworkError, ValueError):
    pass


class RhoNonpositive(GuessworkError, ValueError):
    pass


class RhoTooLarge(GuessworkError, ValueError):
    pass


class InstanceTooLarge(GuessworkError):
    pass


class ZeroBallMass(GuessworkError):
    """The strategy puts no mass on a required ball, so the moment is infinite."""

    def __init__(self, symbol=None):
        self.symbol = symbol
        if symbol is None:
            msg = "ball mass is zero: guessing never terminates"
        else:
            msg = f"strategy puts zero mass on the ball of {symbol!r}: infinite moment"
        super().__init__(msg)


class NoFeasibleChannel(GuessworkError):
    pass


class NonConvergence(GuessworkError):
    """An iterative solver hit its iteration cap.

    ``certificate`` carries the best result found so far, if any.
    """

    def __init__(self, message, residual=None, certificate=None):
        self.residual = residual
        self.certificate = certificate
        super().__init__(message)


class InfiniteExponent(GuessworkError):
    pass


class ConfigError(GuessworkError, ValueError):
    pass


class CapTooLowWarning(UserWarning):
    """More than 1% of simulated trials hit the guess cap."""


class GreedyBoundWarning(UserWarning):
    """The exhaustive search was skipped; the greedy value is only an upper bound."""
