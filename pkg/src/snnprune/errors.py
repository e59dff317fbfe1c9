"""Exception hierarchy shared across the package."""


class SnnPruneError(Exception):
    """Base class for all package errors."""


class ContractViolation(SnnPruneError, ValueError):
    """An argument broke a documented precondition (shape, range, mask)."""


class NumericalError(SnnPruneError, ArithmeticError):
    def __init__(self, message: str, layer_index: int | None = None):
        super().__init__(message)
        self.layer_index = layer_index


class TrainingDiverged(NumericalError):
    """Loss became non-finite during training."""


class DegenerateDesignError(SnnPruneError, ValueError):
    """Regression design matrix is rank deficient."""


class ConfigError(SnnPruneError, ValueError):
    pass


class MissingArtifactError(SnnPruneError, FileNotFoundError):
    pass


class NoFeasiblePolicy(SnnPruneError):
    pass
