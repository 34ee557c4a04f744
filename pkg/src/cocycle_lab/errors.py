"""Exception hierarchy shared by every module."""


class CocycleLabError(Exception):
    """Base class for all library errors."""


class InadmissibleError(CocycleLabError, ValueError):
    """A word or point violates the transition matrix, or is absent from a table."""


class PreconditionError(CocycleLabError, ValueError):
    """Inputs do not satisfy an operation's stated precondition."""


class NotFiberBunched(CocycleLabError):
    """Raised when a cocycle fails the fiber bunching inequality.

    Attributes
    ----------
    witness : object
        Table word (or description) where the bound fails.
    value : float
        The offending value of ``||A|| ||A^-1|| theta^eta``.
    """

    def __init__(self, witness, value):
        self.witness = witness
        self.value = value
        super().__init__(f"not fiber bunched: ||A|| ||A^-1|| theta^eta = {value:.6g} >= 1 at {witness!r}")


class SupportCollision(CocycleLabError):
    """An edited cylinder contains a point whose matrix must stay unchanged."""

    def __init__(self, message, points=()):
        self.points = tuple(points)
        super().__init__(message)


class TruncationError(CocycleLabError, RuntimeError):
    """A series or enumeration could not be truncated within its caps."""


class ScenarioError(CocycleLabError):
    """Malformed scenario or certificate file."""

    def __init__(self, message, line=None):
        self.line = line
        prefix = f"line {line}: " if line is not None else ""
        super().__init__(prefix + message)
