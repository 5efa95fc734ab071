"""Exception types shared across the package.

The CLI maps these onto exit codes: configuration problems exit with 2,
runtime failures (training divergence, bad data) with 3.
"""


class ConfigurationError(ValueError):
    """Invalid spec, ratios, identifiers, or incompatible options."""


class DataError(ValueError):
    """Dataset is missing something an operation requires (e.g. feedback)."""


class TrainingError(RuntimeError):
    """Optimization failed; message carries epoch/loss diagnostics."""
