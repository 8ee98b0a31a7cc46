"""Exception types shared across the package."""


class ShapeError(ValueError):
    """Operands live in different algebras or have incompatible shapes."""


class DomainError(ValueError):
    """A group element is not a member of the group at hand."""


class ParameterError(ValueError):
    """A numeric parameter (stage, grid factor, amplification) is out of range."""


class ContractViolation(RuntimeError):
    """An operation that requires a completely positive map received one that is not."""


class StepRejected(ValueError):
    """A connecting map failed c.p.c. verification while building a system."""

    def __init__(self, message, step=None, min_choi_eigenvalue=None, unit_norm=None):
        super().__init__(message)
        self.step = step
        self.min_choi_eigenvalue = min_choi_eigenvalue
        self.unit_norm = unit_norm


class ConfigError(ValueError):
    """Malformed or unknown configuration."""


class PreconditionError(ValueError):
    """An input violates a documented mathematical precondition."""
