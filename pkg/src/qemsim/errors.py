"""Exception types shared across the package.

The CLI maps these onto process exit codes (config 2, numeric 3, I/O 4).
"""


class ConfigError(ValueError):
    """Invalid configuration, profile, or override value."""


class NumericError(RuntimeError):
    """A numerical routine failed to converge to its stated tolerance."""


class FitError(RuntimeError):
    """A least-squares recovery was rank-deficient or otherwise ill-posed."""


class SamplingError(RuntimeError):
    """A measurement was requested on a branch with zero probability."""
