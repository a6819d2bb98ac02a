"""Exception types shared across the package.

The CLI maps these onto exit codes: usage problems exit 1, data and
identification problems exit 2, optimizer non-convergence exits 3.
"""


class CausalSfaError(Exception):
    """Base class for all package-specific errors."""


class DomainError(CausalSfaError, ValueError):
    """A numeric argument or parameter is outside its valid domain."""


class SchemaError(CausalSfaError, KeyError):
    """A dataset is missing a required column or a column has the wrong type."""

    def __str__(self) -> str:  # KeyError quotes its message; undo that
        return self.args[0] if self.args else ""


class IdentificationError(CausalSfaError, ValueError):
    """The data cannot identify the requested quantity (empty cell, weak jump, ...)."""


class EvaluationError(CausalSfaError, ValueError):
    """An objective or derivative evaluation produced a non-finite value."""


class CollinearityError(CausalSfaError, ValueError):
    """A design matrix is rank deficient; names the offending columns."""

    def __init__(self, columns: list[str]):
        self.columns = list(columns)
        super().__init__(f"collinear design columns: {', '.join(self.columns)}")


class ConvergenceError(CausalSfaError, RuntimeError):
    """An optimization failed in a way that cannot be reported as a flagged result."""
