"""Exception types shared across the toolkit."""

from __future__ import annotations


class SeqdynError(Exception):
    """Base class for toolkit errors."""


class ResourceLimitError(SeqdynError):
    """A configured cap (breakpoints, interval fragments, preimages) was exceeded."""


class UnsupportedRepresentationError(SeqdynError):
    """The requested exact operation needs a representation the input does not have."""


class MinorationError(SeqdynError):
    """A pushforward density dropped below the minoration threshold."""


class ConfigError(SeqdynError):
    """Invalid experiment configuration.

    Collects every violated field so a bad config is reported in one shot.
    """

    def __init__(self, violations: list[str]):
        self.violations = list(violations)
        super().__init__("invalid config: " + "; ".join(self.violations))
