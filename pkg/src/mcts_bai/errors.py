"""Exception and warning types raised across the package."""


class MctsBaiError(Exception):
    """Base class for all errors raised by mcts_bai."""


class TreeSpecError(MctsBaiError, ValueError):
    """A tree specification is malformed."""


class NotALeaf(MctsBaiError, ValueError):
    pass


class NotInternal(MctsBaiError, ValueError):
    pass


class InfiniteComplexity(MctsBaiError, ArithmeticError):
    """Some leaf has a zero effective gap, so the complexity term diverges."""


class InfiniteBound(MctsBaiError, ArithmeticError):
    pass


class InvalidRegime(MctsBaiError, ValueError):
    """Parameters fall outside the range where a formula is defined."""


class DegenerateRegime(InvalidRegime):
    pass


class DomainError(MctsBaiError, ValueError):
    pass


class OrderingViolated(MctsBaiError, ValueError):
    """Depth-two means do not satisfy the ordering required by the sparse program."""


class NotDepthTwo(MctsBaiError, ValueError):
    pass


class NonConvergence(MctsBaiError, RuntimeError):
    """The lower-bound solver hit its iteration budget.

    The partial solution is attached as ``solution``.
    """

    def __init__(self, message, solution=None):
        super().__init__(message)
        self.solution = solution


class EpsilonZeroUnsupported(MctsBaiError, ValueError):
    pass


class SingleAction(MctsBaiError, ValueError):
    """The root has a single child; there is nothing to identify."""


class AmbiguousBestAction(UserWarning):
    """Two depth-one children tie for the best value."""
