"""Exception types shared across the package."""


class RwpotError(Exception):
    pass


class ConfigError(RwpotError):
    """Invalid configuration / parameter ordering; CLI exit code 2."""


class ResourceCapError(RwpotError):
    """A volume or step budget was exceeded; CLI exit code 3."""


class StatisticalError(RwpotError):
    """An estimate failed outright (e.g. every replica censored); exit code 4."""


class DegenerateTruncationError(ConfigError):
    """Truncation cutoff leaves no mass below it, E[V | V < c] undefined."""


class DegenerateScaleError(ConfigError):
    """I_{eps,lambda} = 0, the coarse-graining scale is undefined."""


class InsufficientDataError(StatisticalError):
    """Conditioning event too rare for the requested estimate."""
