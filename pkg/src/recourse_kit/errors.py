"""Exception types shared across the package."""


class GraphCycleError(ValueError):
    """The causal graph contains a directed cycle."""

    def __init__(self, node: int):
        self.node = node
        super().__init__(f"causal graph has a cycle through node {node}")


class SingularDesignError(ValueError):
    """Least-squares design matrix is rank deficient and ridge fallback is disabled."""


class InfeasibleQueryError(RuntimeError):
    """No admissible counterfactual flips the classifier to the requested class."""


class SubsetBudgetError(ValueError):
    """Too many mutable features for exhaustive intervention-subset search."""


class EmptyFeasibleSetError(RuntimeError):
    """No grid point satisfies the target-class constraint."""


class DataFormatError(ValueError):
    """A data file or record does not match the expected layout."""

    def __init__(self, message: str, row: int | None = None):
        self.row = row
        if row is not None:
            message = f"row {row}: {message}"
        super().__init__(message)


class ConstantColumnError(ValueError):
    """A numeric column has zero variance and cannot be standardized."""
