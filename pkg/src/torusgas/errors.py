"""Error types shared across the package.

The CLI maps ConfigError to exit code 2 and InvariantViolation to exit
code 1; everything else is a plain bug.
"""


class ConfigError(ValueError):
    """Bad user input: malformed config, invalid kernel, wrong grid shapes."""


class InvariantViolation(RuntimeError):
    """A runtime check that should hold by construction failed."""
