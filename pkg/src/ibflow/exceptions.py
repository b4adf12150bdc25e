"""Error types shared across the package."""


class ParameterError(ValueError):
    """An argument violates a documented precondition."""


class ScopeError(ParameterError):
    """A configuration falls outside the regime a guarantee covers."""


class OverflowGuardError(ParameterError):
    """A dual point is too large to map back through sinh without overflow."""


class SingularSystemError(RuntimeError):
    """The sample matrix is rank deficient (or otherwise unusable)."""


class DuplicateSamplesError(SingularSystemError):
    """Two samples are bitwise identical, so the dual system is singular."""


class FlowBlowupError(RuntimeError):
    """The integrated state became non-finite."""

    def __init__(self, t: float):
        super().__init__(f"flow state became non-finite at t={t:.6g}")
        self.t = t
