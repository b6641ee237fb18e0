"""Shared exception types.

Contract violations (bad shapes, bad arguments, mismatched plans) raise
:class:`ContractError` so callers can distinguish usage bugs from runtime
conditions such as a diverging training run or a malformed input file.
"""


class ContractError(ValueError):
    """An operation was called in violation of its documented contract."""


class ConfigError(ValueError):
    """A config file or override string could not be parsed or validated."""


class TrainingError(RuntimeError):
    """Training diverged or produced non-finite values; message carries diagnostics."""


class DegenerateInputError(ValueError):
    """Input is structurally valid but degenerate (e.g. all points identical)."""
