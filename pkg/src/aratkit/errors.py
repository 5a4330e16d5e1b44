"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: DataError (and subclasses) means the
inputs were structurally bad (exit 3), anything else raised from pipeline
code is a runtime failure (exit 4).
"""


class AratkitError(Exception):
    """Base class for all package errors."""


class DataError(AratkitError):
    """Invalid input data: manifests, sequence files, labels, shapes."""


class ConfigError(DataError):
    """Invalid preprocessing or run configuration."""
