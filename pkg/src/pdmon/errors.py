"""Exception hierarchy shared across the toolkit."""


class MonitorError(Exception):
    """Base class for every error raised by pdmon."""


class SchemaError(MonitorError):
    """Invalid schema definition."""


class SchemaMismatch(MonitorError):
    """Data columns do not match the schema."""


class NonFiniteValue(MonitorError):
    """A numeric cell holds NaN or infinity."""


class NonBinaryLabel(MonitorError):
    """A label or prediction cell is not 0/1."""


class ParseError(MonitorError):
    """A cell could not be parsed; carries row/column position."""

    def __init__(self, message, row=None, column=None):
        super().__init__(message)
        self.row = row
        self.column = column


class UnknownNullModel(MonitorError):
    pass


class TooFewSamples(MonitorError):
    pass


class EmptySample(TooFewSamples):
    pass


class DegenerateVariance(MonitorError):
    """Zero sample variance where a log or ratio needs it positive."""


class DegeneratePoints(MonitorError):
    """All pooled points coincide; graph statistic undefined."""


class BandwidthUndefined(MonitorError):
    pass


class UnsmoothedZeroBin(MonitorError):
    pass


class StatisticFailure(MonitorError):
    """The wrapped statistic raised on one of the permuted splits."""

    def __init__(self, message, permutation_index):
        super().__init__(message)
        self.permutation_index = permutation_index


class MissingColumn(MonitorError):
    pass


class UndefinedMetric(MonitorError):
    """Metric denominator is zero."""


class NoFeasibleSubgroup(MonitorError):
    pass


class ConfigError(MonitorError):
    pass


class SmallSampleAssumptionViolated(UserWarning):
    """Normal approximation conditions fail; the bootstrap path is used instead."""


class IoError(MonitorError):
    """A data or config file could not be read."""
