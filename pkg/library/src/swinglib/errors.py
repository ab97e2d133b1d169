class SwingLibError(Exception):
    pass


class CaseParseError(SwingLibError):
    """Case text could not be read or does not match the case-file schema."""


class CaseValidationError(SwingLibError, ValueError):
    """Case parsed but violates a physical or structural invariant."""


class InvalidParameterError(SwingLibError, ValueError):
    pass


class PowerFlowError(SwingLibError):
    pass


class NonConvergenceError(PowerFlowError):
    def __init__(self, message: str, iterations: int, residual_norm: float):
        super().__init__(message)
        self.iterations = iterations
        self.residual_norm = residual_norm


class SingularJacobianError(PowerFlowError):
    pass


class AssumptionViolationError(SwingLibError):
    pass


class ModelKindError(SwingLibError, ValueError):
    """State tag does not match the requested model, or epsilon is not positive."""


class IntegrationError(SwingLibError):
    pass


class StiffnessError(IntegrationError):
    pass


class TrajectoryRangeError(SwingLibError, ValueError):
    pass


class EigenSolverError(SwingLibError):
    pass
