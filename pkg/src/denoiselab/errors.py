"""Exception types shared across the toolkit.

Each failure category gets its own class so callers (and the CLI exit-code
mapping) can tell them apart.
"""


class ToolkitError(Exception):
    """Base class for all toolkit errors."""


class FormatError(ToolkitError):
    """Malformed file: bad magic, unparseable header, truncated payload."""


class DimensionMismatchError(ToolkitError):
    """Shapes or declared dimensions disagree."""


class ValueRangeError(ToolkitError):
    """A value is outside its documented range."""


class DivergenceError(ToolkitError):
    """Training loss blew up; carries the step at which it was detected."""

    def __init__(self, message: str, step: int | None = None):
        super().__init__(message)
        self.step = step


class PluginError(ToolkitError):
    """Base class for external denoiser plugin failures."""


class PluginProtocolError(PluginError):
    """The child process violated the wire protocol."""


class PluginExitError(PluginError):
    """The child process exited while a reply was pending."""


class PluginTimeoutError(PluginError):
    """The child process did not reply within the deadline."""
