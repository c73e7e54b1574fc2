"""Exception hierarchy.

``ConfigError`` subclasses map to CLI exit code 2, ``NumericalError``
subclasses to exit code 3.
"""


class ResilientSEError(Exception):
    pass


class ConfigError(ResilientSEError):
    pass


class NumericalError(ResilientSEError):
    pass


# lti
class NotSemistable(NumericalError):
    pass


class IllConditioned(NumericalError):
    pass


class NotStable(NumericalError):
    pass


class SolveFailed(NumericalError):
    pass


class NotPSD(NumericalError):
    pass


# grid / files
class DisconnectedNetwork(ConfigError):
    pass


class UnknownBus(ConfigError):
    pass


class UnknownQuantity(ConfigError):
    pass


class ParseError(ConfigError):
    def __init__(self, message, line=None, path=None):
        where = ""
        if path is not None:
            where += f"{path}:"
        if line is not None:
            where += f"{line}:"
        super().__init__(f"{where} {message}" if where else message)
        self.line = line
        self.path = path


class ValidationError(ConfigError):
    pass


class ConfigInvalid(ConfigError):
    pass


# clustering
class ZeroRow(NumericalError):
    pass


class DegenerateCluster(NumericalError):
    pass


class AllMeasurementsAttacked(ConfigError):
    pass


class UncoveredCluster(NumericalError):
    pass


# observer / sim
class NotDetectable(NumericalError):
    pass


class GridMismatch(ConfigError):
    pass


class UnstableStep(NumericalError):
    pass
