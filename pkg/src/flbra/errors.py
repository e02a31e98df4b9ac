"""Exception hierarchy for the simulator."""


class FlbraError(Exception):
    """Base class for every error raised by this package."""


class InvalidMeasurementError(FlbraError, ValueError):
    """A link measurement is non-finite or outside its physical range."""


class GeometryError(FlbraError, ValueError):
    """Non-positive distance or otherwise impossible node geometry."""


class ScenarioError(FlbraError, ValueError):
    """A scenario cannot be laid out on its grid."""


class ConfigError(FlbraError, ValueError):
    pass


class StatisticsError(FlbraError, ValueError):
    pass


class ConsistencyError(FlbraError, RuntimeError):
    """Internal invariant violated (e.g. a path uses a link that does not exist)."""


class SetupIncompleteError(FlbraError, RuntimeError):
    """FLBRA discovery ran out of rounds before the frontier emptied.

    The partial routing table, discovery state and number of rounds executed
    are kept on the exception so callers can inspect or continue from them.
    """

    def __init__(self, message, table=None, net_info=None, rounds=0):
        super().__init__(message)
        self.table = table
        self.net_info = net_info
        self.rounds = rounds
