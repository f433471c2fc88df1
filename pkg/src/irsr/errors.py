"""Exception hierarchy for the irsr package.

Every failure mode named by an operation contract gets its own class so
callers (and the CLI) can distinguish them without string matching.
"""


class IrsrError(Exception):
    """Base class for all package errors."""


class ImageError(IrsrError):
    """Invalid image data or unsupported pixel layout."""


class ImageReadError(ImageError):
    """File missing, unreadable, or not a decodable image."""


class ImageWriteError(ImageError):
    """Destination not writable or encoder failure."""


class UnsupportedFormatError(ImageError):
    """Readable file, but a depth/layout/container we do not handle."""


class DimensionError(IrsrError):
    """An operation's dimension contract was violated."""


class ManifestError(IrsrError):
    """Dataset directory empty, stems duplicated, or pairing incomplete."""


class ConfigError(IrsrError):
    """Malformed pipeline or tiling configuration."""


class BackendError(IrsrError):
    """Base class for restorer backend failures."""


class UnknownBackendError(BackendError):
    """Backend kind not recognized."""


class HandshakeError(BackendError):
    """External backend handshake missing, malformed, or mismatched."""


class ProtocolError(BackendError):
    """Wire protocol violation: bad header, payload underrun, bad dtype."""


class BackendTimeoutError(BackendError):
    """External backend did not answer within the deadline."""


class BackendExitError(BackendError):
    """External backend process terminated unexpectedly."""


class BackendDimensionError(BackendError):
    """Backend returned an image that violates its declared scale."""


class TileRestoreError(BackendError):
    """A tile failed to restore; carries the failing tile's LR origin."""

    def __init__(self, message: str, origin: tuple[int, int]):
        super().__init__(message)
        self.origin = origin


class BranchError(IrsrError):
    """A pipeline branch failed; carries the branch name."""

    def __init__(self, message: str, branch: str):
        super().__init__(message)
        self.branch = branch
