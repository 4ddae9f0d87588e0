"""Exception types shared across the package."""


class InvalidSpecError(ValueError):
    """An environment, config or manifest failed validation."""


class ContractViolation(ValueError):
    """A caller broke an operation's precondition."""


class NumericalFailure(FloatingPointError):
    """A non-finite value appeared in an update.

    ``diagnostics`` carries whatever context the raiser had at hand
    (episode index, offending array summary, ...).
    """

    def __init__(self, message: str, **diagnostics):
        self.diagnostics = diagnostics
        if diagnostics:
            detail = ", ".join(f"{k}={v!r}" for k, v in diagnostics.items())
            message = f"{message} ({detail})"
        super().__init__(message)
