class DegenerateUpdateError(ValueError):
    """A Bayes update left no posterior mass."""


class BudgetExceededError(RuntimeError):
    """An exact computation would exceed its configured size budget."""


class CalibrationError(ValueError):
    """A calibration target cannot be met; ``best`` holds the closest value found."""

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best
