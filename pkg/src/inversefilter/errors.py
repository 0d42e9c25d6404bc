"""Exception hierarchy.

Everything raised on purpose derives from :class:`InverseFilterError`; the CLI
maps :class:`ConfigError` to exit code 2 and :class:`NumericalFailure`
subclasses to exit code 3.
"""


class InverseFilterError(Exception):
    pass


class ConfigError(InverseFilterError, ValueError):
    """Malformed or inconsistent experiment configuration."""


class ValidationError(InverseFilterError, ValueError):
    """An input violates a domain invariant (simplex, PSD, monotonicity...)."""


class NumericalFailure(InverseFilterError, ArithmeticError):
    pass


class ImpossibleObservationError(NumericalFailure):
    """Every state assigns (numerically) zero likelihood to an observation."""


class ImpossibleActionError(NumericalFailure):
    """The observed action has zero probability under every tracked belief."""


class SingularMatrixError(NumericalFailure):
    """An innovation or gain matrix could not be inverted."""


class CapacityError(InverseFilterError, RuntimeError):
    """The exact belief tree would exceed its configured depth cap."""


class DegeneracyError(NumericalFailure):
    """All importance weights vanished.

    Carries the time index, the largest weight before normalisation and the
    effective sample size of the previous cloud.
    """

    def __init__(self, k, max_weight, ess):
        self.k = k
        self.max_weight = max_weight
        self.ess = ess
        super().__init__(
            f"particle weights degenerate at k={k} (max weight {max_weight:.3g}, "
            f"previous ESS {ess:.3g})"
        )


class OptimizationFailure(NumericalFailure):
    """The objective was non-finite at every probe point."""


class UnreliableEstimateError(NumericalFailure):
    """A Monte Carlo Fisher information estimate came out non-positive."""
