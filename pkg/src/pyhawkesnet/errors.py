"""Exception hierarchy shared by every pyhawkesnet module."""


class HawkesNetError(Exception):
    pass


class DomainError(HawkesNetError, ValueError):
    """Input outside the model's assumptions or an operation's domain."""


class KernelDomainError(DomainError):
    pass


class UnsupportedPointwiseError(DomainError):
    pass


class SubcriticalityError(DomainError):
    """Λ·max-row-sum(A_N) >= 1: the resolvent is not guaranteed to exist."""


class DegenerateGraphError(DomainError):
    pass


class HorizonTooShortError(DomainError):
    pass


class GridError(DomainError):
    pass


class AssumptionViolation(DomainError):
    pass


class LogRangeError(DomainError, IndexError):
    pass


class ConfigError(DomainError):
    pass


class EventBudgetExceeded(DomainError):
    def __init__(self, message: str, partial=None):
        super().__init__(message)
        self.partial = partial


class FormatError(HawkesNetError):
    """A graph, event or config file could not be parsed."""


class ValidationFailed(HawkesNetError):
    def __init__(self, message: str, report=None):
        super().__init__(message)
        self.report = report


class ReplicaQuotaExceeded(HawkesNetError):
    def __init__(self, message: str, failures=None):
        super().__init__(message)
        self.failures = failures or []


EXIT_OK = 0
EXIT_DOMAIN = 1
EXIT_IO = 2
EXIT_VALIDATION = 3


def exit_code_for(exc: BaseException) -> int:
    if isinstance(exc, (ValidationFailed, ReplicaQuotaExceeded)):
        return EXIT_VALIDATION
    if isinstance(exc, DomainError):
        return EXIT_DOMAIN
    if isinstance(exc, (FormatError, OSError)):
        return EXIT_IO
    return EXIT_DOMAIN
