"""Exception hierarchy shared by every module."""


class SkmError(Exception):
    """Base class for all library errors."""


class InvalidInputError(SkmError, ValueError):
    """Input violates a precondition (bad shape, out-of-range index, ...)."""


class NumericalError(SkmError, ArithmeticError):
    """An iterate or an evaluation became non-finite."""


class OracleFailure(SkmError, RuntimeError):
    """A reference solver did not converge within its iteration budget."""


class BudgetExceeded(SkmError):
    """Exact enumeration would need more paths than the allowed budget."""

    def __init__(self, required, budget):
        self.required = required
        self.budget = budget
        super().__init__(
            f"enumeration needs {required} paths but the budget is {budget}"
        )
