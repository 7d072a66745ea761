"""Exception types shared across the toolkit.

Invalid arguments raise plain ``ValueError``; everything that can fail for
non-caller reasons (corrupt files, dead backends, missing pipeline stages)
gets a distinct type so the CLI can map it to an exit code.
"""


class LatentWalkError(Exception):
    """Base class for toolkit-specific failures."""


class StoreError(LatentWalkError):
    """Latent store file is unreadable or malformed."""


class BadMagicError(StoreError):
    pass


class VersionMismatchError(StoreError):
    pass


class TruncatedFileError(StoreError):
    pass


class NonFiniteDataError(StoreError):
    pass


class ZeroVarianceError(LatentWalkError):
    """Input set has no variance in any direction."""


class BackendError(LatentWalkError):
    """Generator/embedder backend failed to answer a request."""


class SpawnError(BackendError):
    """External backend process could not be started."""


class HandshakeError(BackendError):
    """External backend answered the handshake with an incompatible reply."""


class ZeroEmbeddingError(BackendError):
    """Latent maps to the zero vector; its embedding direction is undefined."""


class ProtocolError(BackendError):
    """Wire frame from the external backend was malformed."""


class ConfigError(LatentWalkError):
    """Run configuration is missing, unparseable, or invalid."""


class DependencyError(LatentWalkError):
    """A pipeline stage was invoked before its prerequisites exist."""


class DataError(LatentWalkError):
    """Manifest or score data violates its schema (duplicate ids, bad ranges)."""


class DegenerateDistributionError(DataError):
    """Sample set has zero spread; no density estimate exists."""


class DisjointSupportError(DataError):
    """Two density curves share no grid overlap; divergence is undefined."""
