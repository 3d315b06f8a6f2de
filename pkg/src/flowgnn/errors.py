"""Exception types shared across the package."""


class FlowGnnError(Exception):
    """Base class for all package-specific failures."""


class SchemaError(FlowGnnError):
    """A schema file or CSV header does not match expectations."""


class RowError(FlowGnnError):
    """A single CSV row could not be parsed; carries the 1-based line number."""

    def __init__(self, line_no: int, message: str):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


class EmptyDatasetError(FlowGnnError):
    """The input contained no data rows."""


class CapacityError(FlowGnnError):
    """A graph or neighborhood would exceed its configured memory cap."""


class ConfigError(FlowGnnError):
    """A run configuration, manifest, or checkpoint is invalid or inconsistent."""
