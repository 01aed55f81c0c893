"""Exception types shared across the package."""


class FairselectError(Exception):
    """Base class for all package-specific errors."""


class ConfigError(FairselectError):
    """A run configuration is malformed or internally inconsistent."""


class DatasetError(FairselectError):
    """Base class for dataset construction and ingestion problems."""


class MissingColumnError(DatasetError):
    """A column named in the schema is absent from the CSV header."""


class NonNumericCellError(DatasetError):
    """A feature cell could not be parsed as a number."""


class MissingValueError(DatasetError):
    """A required cell is empty; missing values are not imputed."""


class LabelRangeError(DatasetError):
    """A label cell is not an integer in [0, class_count)."""


class EmptyFileError(DatasetError):
    """The CSV contains no data rows."""


class EmptyGroupError(DatasetError):
    """An operation requires both sensitive groups to be represented."""


class DegenerateSplitError(DatasetError):
    """A requested split would leave one side without any instances."""


class DegenerateThresholdError(FairselectError):
    """The selection count does not exceed the variance bound, so the
    concentration margin is undefined."""


class MetricUndefinedError(FairselectError):
    """A fairness metric's conditioning event has no support."""
