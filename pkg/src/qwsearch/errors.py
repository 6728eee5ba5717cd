"""Exception hierarchy shared by the toolkit."""


class QWSearchError(Exception):
    """Base class for all toolkit errors."""


class InvalidParameterError(QWSearchError, ValueError):
    pass


class DomainError(QWSearchError, ValueError):
    pass


class ErgodicityError(QWSearchError):
    """Raised when a chain is not irreducible and aperiodic.

    ``components`` holds the strongly connected components of the
    positive-entry digraph when they are the cause.
    """

    def __init__(self, message, components=None):
        super().__init__(message)
        self.components = components or []


class ReversibilityError(QWSearchError):
    pass


class SingularityError(QWSearchError):
    pass


class LocalityError(QWSearchError):
    def __init__(self, message, violations=None):
        super().__init__(message)
        self.violations = violations or []


class DegenerateBlockError(QWSearchError):
    pass


class VerificationError(QWSearchError):
    pass


class CircuitError(QWSearchError):
    pass


class CapacityError(QWSearchError):
    pass


class BudgetExceededError(QWSearchError):
    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace or []


class InvalidStateError(QWSearchError):
    pass
