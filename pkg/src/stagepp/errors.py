"""Exception hierarchy shared by all modules."""


class StageppError(Exception):
    """Base class for every error raised by the package."""


class ConfigError(StageppError, ValueError):
    """Invalid parameters, presets or command options."""


class DomainError(StageppError, ValueError):
    """Input outside the domain of a formula (e.g. division by a zero density)."""


class NumericalError(StageppError, RuntimeError):
    """Base class for numerical failures."""


class NoConvergence(NumericalError):
    pass


class SingularJacobian(NumericalError):
    pass


class StepUnderflow(NumericalError):
    pass


class NonFinite(NumericalError):
    pass


class NoOscillation(NumericalError):
    pass


class SeedNotConverged(NumericalError):
    pass


class StallAtFold(NumericalError):
    pass


class NoSecondBranch(NumericalError):
    pass


class NotAHopfPoint(NumericalError):
    pass


class TransformationSingular(NumericalError):
    pass


class DegenerateGeometry(NumericalError):
    pass


class NotAFold(NumericalError):
    pass


class SeedNotFold(NumericalError):
    pass


class SeedNotHopf(NumericalError):
    pass
