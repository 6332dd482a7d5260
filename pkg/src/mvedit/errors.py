"""Error taxonomy shared by the library and the CLI.

Exit-code mapping used by the CLI: 0 ok, 2 configuration error,
3 data error, 4 backend/transport error.
"""


class MVEditError(Exception):
    """Base class for all package errors."""

    exit_code = 1


class ConfigurationError(MVEditError):
    """Invalid parameters, incompatible shapes, or bad configuration."""

    exit_code = 2


class DataError(MVEditError):
    """Malformed or inconsistent input data (rasters, manifests, files)."""

    exit_code = 3


class BackendError(MVEditError):
    """Base for editor-backend failures."""

    exit_code = 4


class TransportError(BackendError):
    """Backend unreachable, timed out, or returned a transport-level failure."""


class ProtocolError(BackendError):
    """Backend reachable but its message violates the wire protocol.

    ``field`` carries the offending field path (e.g. ``"schedule/0/mask_png"``).
    """

    def __init__(self, message, field=None):
        super().__init__(message)
        self.field = field
