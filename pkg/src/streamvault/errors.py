"""Exception hierarchy.

Every error raised by this package derives from StreamVaultError so callers
can catch at whatever granularity they need. The CLI maps these onto its
exit-code contract (permission -> 3, I/O -> 4).
"""


class StreamVaultError(Exception):
    """Base class for all package errors."""


# --- stream core ---------------------------------------------------------

class RecordOutOfRange(StreamVaultError):
    """A record timestamp falls outside the chunk window being sealed."""


class UnsortedInput(StreamVaultError):
    """Records handed to the chunk builder are not strictly increasing."""


class BadTag(StreamVaultError):
    """AEAD authentication failed: payload or header was tampered with."""


class BadSignature(StreamVaultError):
    """A digital signature did not verify."""


class WrongEpochKey(StreamVaultError):
    """The supplied stream key belongs to a different epoch than the chunk."""


class BeforeStreamStart(StreamVaultError):
    """Timestamp precedes the first chunk window of the stream."""


class CorruptCompressedData(StreamVaultError):
    """Compressed payload could not be decoded."""


class MalformedChunk(StreamVaultError):
    """Chunk bytes do not parse as the SVC1 wire format."""


# --- crypto --------------------------------------------------------------

class EpochOutOfRange(StreamVaultError):
    """Requested epoch is outside [0, max_epochs] or ahead of the holder."""


class InvalidCiphertext(StreamVaultError):
    """Wrapped key or envelope failed to decode or decrypt."""


class TokenMismatch(StreamVaultError):
    """Re-encryption token does not match the ciphertext's target key."""


class NotCurrentlyGranted(StreamVaultError):
    """Revocation target is not in the current grant set."""


# --- ledger --------------------------------------------------------------

class MalformedTx(StreamVaultError):
    """Transaction bytes do not parse."""


class HeightGap(StreamVaultError):
    """Block applied out of order against the state machine."""


class UnknownStream(StreamVaultError):
    """Stream id has no confirmed registration."""


class LedgerUnavailable(StreamVaultError):
    """Chain adapter could not accept a transaction."""


# --- storage -------------------------------------------------------------

class NotStreamOwner(StreamVaultError):
    """Put signature does not verify under the registered stream owner."""


class KeyExists(StreamVaultError):
    """Append-only violation: key already holds different bytes."""


class ValueTooLarge(StreamVaultError):
    """Value exceeds the node's max_value_size."""


class PermissionDenied(StreamVaultError):
    """Ledger state does not allow the requester to read this stream."""


class NotFound(StreamVaultError):
    """No value stored under the requested key."""


class StaleChallenge(StreamVaultError):
    """Read auth proof references an expired, unknown, or reused challenge."""


class StorageUnavailable(StreamVaultError):
    """Backend I/O failure."""


# --- dht -----------------------------------------------------------------

class PartitionedOverlay(StreamVaultError):
    """No live nodes reachable to serve the operation."""


# --- gateway -------------------------------------------------------------

class LateRecord(StreamVaultError):
    """Record arrived after its window sealed or beyond the lateness bound."""


class WindowOverflow(StreamVaultError):
    """Open window hit the per-stream record cap before sealing."""


class MissingKeyEpoch(StreamVaultError):
    """Caller's key material does not cover an epoch needed by the query."""
