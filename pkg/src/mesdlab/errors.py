"""Exception and warning types shared across the package."""


class ConstraintError(ValueError):
    """A parameter combination violates the admissible region.

    Raised when (theta, alpha) fail the scan constraint
    sin^2(alpha/2) <= sin^2((alpha - 2*theta)/2), or when (c, epsilon)
    fall outside epsilon <= c <= 1 - epsilon.
    """


class ConfigError(ValueError):
    """A run configuration is malformed (unknown keys, bad values)."""


class ConvergenceError(RuntimeError):
    """An iterative solver failed to converge.

    Carries the last objective value seen in ``last_value``.
    """

    def __init__(self, message: str, last_value: float = float("nan")):
        super().__init__(message)
        self.last_value = last_value


class InfeasibleError(RuntimeError):
    """The operational-equivalence constraints admit no mixture.

    ``violation`` holds the smallest constraint violation found.
    """

    def __init__(self, message: str, violation: float = float("nan")):
        super().__init__(message)
        self.violation = violation


class SingularTransformError(RuntimeError):
    """The gauge-fixing basis change is singular (rank-deficient effects)."""


class IllConditionedError(RuntimeError):
    """A linear system is too ill-conditioned to solve meaningfully."""


class BootstrapError(RuntimeError):
    """Too many bootstrap replicates failed to process."""


class RankDeficiencyWarning(UserWarning):
    """Fitted state or effect set spans fewer dimensions than the model."""


class ConstraintWarning(UserWarning):
    """Extracted parameters violate the admissible region beyond tolerance."""
