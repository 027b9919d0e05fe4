"""Exception hierarchy shared across the solver modules."""


class EllcertError(Exception):
    """Base class for all structured solver errors."""


class ExprSyntaxError(EllcertError):
    def __init__(self, message: str, position: int):
        super().__init__(f"{message} (at position {position})")
        self.position = position


class UnknownIdentifierError(EllcertError):
    def __init__(self, name: str, position: int = -1):
        super().__init__(f"unknown identifier '{name}'")
        self.name = name
        self.position = position


class UnboundVariableError(EllcertError):
    def __init__(self, name: str):
        super().__init__(f"unbound variable '{name}'")
        self.name = name


class ExprDomainError(EllcertError):
    """Evaluation left the real domain (sqrt of negative, division by zero, ...)."""


class EmptyDomainError(EllcertError):
    pass


class ThresholdViolationError(EllcertError):
    """A coupling constant is at or above its admissible threshold."""


class ContractionBreachError(EllcertError):
    """A measured contraction ratio exceeded its theoretical bound."""


class NonConvergenceError(EllcertError):
    def __init__(self, message: str, residual: float = float("nan"), trace=None):
        super().__init__(message)
        self.residual = residual
        self.trace = trace


class NonSPDError(EllcertError):
    """Negative curvature encountered: the operator is not positive definite."""


class NegativeBetaError(EllcertError):
    def __init__(self, location, value: float):
        super().__init__(f"boundary weight is negative ({value}) at face midpoint {location}")
        self.location = location
        self.value = value


class OrderingViolationError(EllcertError):
    pass


class DomainMismatchError(EllcertError):
    pass


class InfeasibleError(EllcertError):
    pass


class PreconditionError(EllcertError):
    """A documented precondition of an operation does not hold."""


class ConfigError(EllcertError):
    pass
