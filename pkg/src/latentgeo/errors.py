"""Exception taxonomy shared across the package.

CLI exit codes map onto these groups: configuration/usage errors exit 1,
generator/transport errors exit 2, data/pairing errors exit 3.
"""


class DimensionMismatchError(ValueError):
    """Shapes or lengths disagree with a declared contract."""


class ContractError(ValueError):
    """An input violates a stated precondition (non-unit vector, K=0, ...)."""


class UndefinedStatisticError(ValueError):
    """The requested statistic has no defined value (zero variance, ...)."""


class EvaluationError(RuntimeError):
    """A generator produced unusable output.

    ``column`` identifies the offending finite-difference column (None for
    the base evaluation); ``step`` the trajectory index, when applicable.
    """

    def __init__(self, message, column=None, step=None):
        super().__init__(message)
        self.column = column
        self.step = step


class ConfigError(ValueError):
    """A run configuration is invalid or inconsistent."""


class PairingError(ValueError):
    """Records that must share seeds across conditions do not pair up."""


class ProtocolError(RuntimeError):
    """Base class for wire-protocol failures."""


class VersionMismatchError(ProtocolError):
    """Handshake succeeded structurally but versions disagree."""


class TransportTimeoutError(ProtocolError):
    """The peer did not answer within the configured timeout."""


class MalformedFrameError(ProtocolError):
    """A frame or handshake violates the wire format."""


class ServerDisconnectedError(ProtocolError):
    """The connection closed mid-handshake or mid-frame."""


class RemoteGeneratorError(ProtocolError):
    """The server answered with an error frame; carries its message."""
