"""Exception hierarchy.

Every error carries an ``exit_code`` so the CLI can map error families to
distinct process exit statuses.
"""


class CrahnError(Exception):
    exit_code = 1


# configuration / IO
class ConfigParse(CrahnError):
    exit_code = 3


class ConfigInvalid(CrahnError):
    exit_code = 4

    def __init__(self, field, message):
        self.field = field
        super().__init__(f"{field}: {message}")


class IoError(CrahnError):
    exit_code = 5

    def __init__(self, path, message):
        self.path = str(path)
        super().__init__(f"{path}: {message}")


# engine
class SchedulingInPast(CrahnError):
    exit_code = 10


# neural / detection
class DimensionMismatch(CrahnError, ValueError):
    exit_code = 6


class EmptyDataset(CrahnError, ValueError):
    exit_code = 6


class TooFewReadings(CrahnError, ValueError):
    exit_code = 6


# spectrum
class NoIdleChannel(CrahnError):
    exit_code = 7


class TraceTooShort(CrahnError, ValueError):
    exit_code = 7


class NegativeDuration(CrahnError, ValueError):
    exit_code = 7


# net
class NotANeighbor(CrahnError):
    exit_code = 8


class XmlMalformed(CrahnError, ValueError):
    exit_code = 9


class XmlInvalidStatus(XmlMalformed):
    exit_code = 9
