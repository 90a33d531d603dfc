"""Exception types shared across the toolkit."""


class ValidationError(ValueError):
    """Input data violates a documented format or invariant."""


class ConfigError(ValueError):
    """A configuration is incomplete or inconsistent."""
