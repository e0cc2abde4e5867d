"""Exception hierarchy.  CLI exit codes key off these classes."""


class VlasovWaveError(Exception):
    pass


class InvalidParameter(VlasovWaveError, ValueError):
    pass


class UnsupportedDimension(InvalidParameter):
    pass


class DivergentConstant(InvalidParameter):
    """kappa or the tail constant does not exist for the requested dimension."""


class OutOfRangeExponent(InvalidParameter):
    pass


class MissingHistory(VlasovWaveError):
    pass


class ExtendTable(VlasovWaveError):
    """A kernel table is too short for the requested evaluation."""


class OutOfDomain(VlasovWaveError):
    def __init__(self, message, radius=None):
        super().__init__(message)
        self.radius = radius


class ConfigError(VlasovWaveError):
    pass


class HypothesisViolation(ConfigError):
    def __init__(self, tag, message):
        super().__init__(f"({tag}) {message}")
        self.tag = tag


class SolverAbort(VlasovWaveError):
    def __init__(self, message, record=None):
        super().__init__(message)
        self.record = record or {}


class UndefinedDistance(VlasovWaveError):
    pass
