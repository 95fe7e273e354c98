class ConfigError(ValueError):
    """User-facing configuration problem (bad file, bad value, missing path)."""


class InvariantError(RuntimeError):
    """An internal invariant was violated. Always a bug."""
