"""Exception types shared across the package."""


class DomainError(ValueError):
    """An input is outside the mathematical domain of an operation."""


class NoMatchableProjectsError(DomainError):
    """Total required match is zero, so the pool scaling constant is undefined."""


class LedgerFormatError(DomainError):
    """A ledger file is structurally unusable (e.g. missing header columns)."""


class BudgetBreachError(DomainError):
    """A simulated agent tried to emit more than its remaining budget."""
