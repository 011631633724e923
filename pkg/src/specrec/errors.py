"""Exception hierarchy for specrec."""


class SpecrecError(Exception):
    """Base class for all specrec errors."""


class ConfigurationError(SpecrecError, ValueError):
    """Invalid model, experiment or simulator configuration."""


class DomainError(SpecrecError, ValueError):
    """An action or argument outside the domain of a transition operation."""


class ReducibleChainError(SpecrecError, ValueError):
    """A transition matrix whose states are not all mutually reachable."""

    def __init__(self, unreachable: list[int]):
        self.unreachable = unreachable
        super().__init__(f"Chain is reducible; states not mutually reachable: {unreachable}")


class ChainConsistencyError(SpecrecError, RuntimeError):
    """A computed matrix or distribution violates its probability invariants."""


class ConvergenceError(SpecrecError, RuntimeError):
    """An iterative solver did not converge within its iteration budget."""

    def __init__(self, message: str, residual: float):
        self.residual = residual
        super().__init__(f"{message} (span residual {residual:.3e})")


class NoFeasibleCandidateError(SpecrecError, RuntimeError):
    """A search iteration produced no candidate with a finite score."""
