"""Exception hierarchy.

Every error carries a stable class name; the CLI prints that name as the
diagnostic so callers can match on it.
"""


class ErrcalError(Exception):
    """Base class for all library errors."""

    @property
    def diagnostic(self) -> str:
        return type(self).__name__


class InsufficientData(ErrcalError):
    pass


class NotSymmetric(ErrcalError):
    pass


class NearSingular(ErrcalError):
    def __init__(self, name: str, cond: float):
        self.name = name
        self.cond = cond
        super().__init__(f"matrix '{name}' is near singular (condition estimate {cond:.3g})")


class RankDeficient(ErrcalError):
    pass


class InvalidScenario(ErrcalError):
    pass


class DegenerateNuisance(ErrcalError):
    def __init__(self, component: int, value: float):
        self.component = component
        self.value = value
        super().__init__(
            f"implied Var(X) diagonal entry {component} is {value:.4g} <= 0 "
            "(error variance exceeds observed variance)"
        )


class LayoutError(ErrcalError):
    pass


class PsiNotRoot(ErrcalError):
    pass


class UnstableBootstrap(ErrcalError):
    pass


class AllReplicatesFailed(ErrcalError):
    pass
