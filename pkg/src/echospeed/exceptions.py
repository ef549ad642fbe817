"""Exception types shared across the toolkit."""


class ConfigError(ValueError):
    """Invalid configuration value or combination."""


class SchemaError(ValueError):
    """A structured input file (scene, suite) is malformed or incomplete."""


class NoPeakError(RuntimeError):
    """No usable first peak exists; the caller should report no estimate."""
