"""Exception hierarchy shared by the services and the command-line surface."""

from __future__ import annotations


class OffloadError(Exception):
    """Base class for every error raised by the toolkit."""


class ConfigError(OffloadError, ValueError):
    """Scenario configuration could not be parsed or validated."""


class MissingKeyError(ConfigError):
    """A required configuration key is absent."""

    def __init__(self, key: str) -> None:
        super().__init__(f"missing required config key: {key}")
        self.key = key


class OutOfRangeError(ConfigError):
    """A configuration value lies outside its admissible range."""


class NonPositiveError(ConfigError):
    """A configuration value that must be strictly positive is not."""

    def __init__(self, key: str, value: object) -> None:
        super().__init__(f"{key} must be > 0, got {value!r}")
        self.key = key
        self.value = value


class DomainError(OffloadError, ValueError):
    """A numerical routine was called outside its mathematical domain."""


class ConvergenceError(OffloadError, RuntimeError):
    """An iterative numerical routine exhausted its budget."""


class NoSignChangeError(OffloadError, ValueError):
    """A root bracket does not enclose a sign change."""


class NoFeasibleMError(OffloadError, RuntimeError):
    """No number of random-access channels keeps the system stable."""


class InsufficientSamplesError(OffloadError, RuntimeError):
    """Too few successful devices were observed for an empirical estimate."""


class UnknownPresetError(OffloadError, LookupError):
    """The requested experiment preset does not exist."""
