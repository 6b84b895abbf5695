"""Stream data model: records, sealed chunks, hash chaining, lookup.

A stream is an append-only sequence of timestamped records, split into
fixed time windows of ``delta`` milliseconds starting at ``t0``. Each
non-empty window becomes one chunk: records are encoded, compressed, then
AEAD-encrypted (AES-256-GCM) with the header as associated data, and the
whole thing is signed by the stream owner. Chunks carry a hash pointer to
the previous *emitted* chunk, so a single anchored digest pins the entire
prefix.

Wire format SVC1 (all integers big-endian):

    magic     4  b"SVC1"
    vercodec  1  high nibble format version (1), low nibble codec id
    stream_id      32
    chunk_index     8
    start_ts        8
    end_ts          8
    prev_chunk_hash 32   all-zero for the first emitted chunk
    epoch           4
    record_count    4
    payload_len     4
    payload         var  ciphertext || 16-byte GCM tag
    signature      64    Ed25519 over SHA-256(header || payload)

The header is bytes [0, 101) and doubles as the AEAD associated data. The
chunk digest used for chain pointers and ledger anchors is SHA-256 of the
full serialized chunk. The GCM nonce is derived from
(stream_id, chunk_index, epoch), which is unique per key because an epoch
never seals the same index twice.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass, field

from cryptography.exceptions import InvalidTag
from cryptography.hazmat.primitives.ciphers.aead import AESGCM

from . import keys
from .errors import (
    BadSignature,
    BadTag,
    BeforeStreamStart,
    CorruptCompressedData,
    MalformedChunk,
    RecordOutOfRange,
    UnsortedInput,
    WrongEpochKey,
)
from .hashing import ZERO32, be32, be64, read_be, sha256

MAGIC = b"SVC1"
FORMAT_VERSION = 1
CODEC_NONE = 0
CODEC_ZLIB = 1
HEADER_SIZE = 101
NONCE_SIZE = 12
GCM_TAG_SIZE = 16


@dataclass(frozen=True)
class DataRecord:
    """One sensor reading: millisecond timestamp plus opaque payload."""
    timestamp: int
    value: bytes


@dataclass
class StreamMeta:
    """Stream identity and chunking parameters.

    ``epoch`` is the current key epoch and the only mutable field; it only
    ever moves forward (rotation or revocation).
    """
    stream_id: bytes
    owner_id: bytes
    t0: int
    delta: int
    epoch: int = 0
    checkpoint_interval: int = 10
    max_chunk_records: int = 65536

    def __post_init__(self):
        if self.delta <= 0:
            raise ValueError("delta must be positive")
        if self.checkpoint_interval <= 0:
            raise ValueError("checkpoint_interval must be positive")


@dataclass(frozen=True)
class StreamKey:
    """Epoch-tagged symmetric key; the tag is what WrongEpochKey checks."""
    epoch: int
    key: bytes


@dataclass(frozen=True)
class ChunkHeader:
    stream_id: bytes
    chunk_index: int
    start_ts: int
    end_ts: int
    prev_chunk_hash: bytes
    epoch: int
    record_count: int
    codec: int = CODEC_ZLIB

    def to_bytes(self) -> bytes:
        return (MAGIC
                + bytes([(FORMAT_VERSION << 4) | self.codec])
                + self.stream_id
                + be64(self.chunk_index)
                + be64(self.start_ts)
                + be64(self.end_ts)
                + self.prev_chunk_hash
                + be32(self.epoch)
                + be32(self.record_count))

    @classmethod
    def from_bytes(cls, data: bytes) -> "ChunkHeader":
        if len(data) < HEADER_SIZE or data[:4] != MAGIC:
            raise MalformedChunk("bad magic")
        version, codec = data[4] >> 4, data[4] & 0x0F
        if version != FORMAT_VERSION:
            raise MalformedChunk(f"unsupported format version {version}")
        stream_id = data[5:37]
        index, off = read_be(data, 37, 8)
        start_ts, off = read_be(data, off, 8)
        end_ts, off = read_be(data, off, 8)
        prev = data[off:off + 32]
        epoch, off = read_be(data, off + 32, 4)
        count, off = read_be(data, off, 4)
        return cls(stream_id, index, start_ts, end_ts, prev, epoch, count, codec)


@dataclass(frozen=True)
class SealedChunk:
    header: ChunkHeader
    payload: bytes
    signature: bytes

    def to_bytes(self) -> bytes:
        return (self.header.to_bytes() + be32(len(self.payload))
                + self.payload + self.signature)

    @classmethod
    def from_bytes(cls, data: bytes) -> "SealedChunk":
        header = ChunkHeader.from_bytes(data)
        plen, off = read_be(data, HEADER_SIZE, 4)
        payload = data[off:off + plen]
        signature = data[off + plen:]
        if len(payload) != plen or len(signature) != keys.SIGNATURE_SIZE:
            raise MalformedChunk("truncated chunk")
        return cls(header, payload, signature)

    def digest(self) -> bytes:
        return sha256(self.to_bytes())


# --- record block codec ----------------------------------------------------

def encode_records(records: list[DataRecord]) -> bytes:
    parts = [be32(len(records))]
    for rec in records:
        parts.append(be64(rec.timestamp))
        parts.append(be32(len(rec.value)))
        parts.append(rec.value)
    return b"".join(parts)


def decode_records(block: bytes) -> list[DataRecord]:
    try:
        count, off = read_be(block, 0, 4)
        records = []
        for _ in range(count):
            ts, off = read_be(block, off, 8)
            vlen, off = read_be(block, off, 4)
            value = block[off:off + vlen]
            if len(value) != vlen:
                raise ValueError("truncated value")
            off += vlen
            records.append(DataRecord(ts, value))
        if off != len(block):
            raise ValueError("trailing bytes")
        return records
    except ValueError as exc:
        raise MalformedChunk(f"bad record block: {exc}") from exc


# --- compression ------------------------------------------------------------

def compress(block: bytes, codec: int = CODEC_ZLIB) -> bytes:
    if codec == CODEC_ZLIB:
        return zlib.compress(block, 6)
    if codec == CODEC_NONE:
        return block
    raise ValueError(f"unknown codec {codec}")


def decompress(block: bytes, codec: int = CODEC_ZLIB) -> bytes:
    if codec == CODEC_ZLIB:
        try:
            return zlib.decompress(block)
        except zlib.error as exc:
            raise CorruptCompressedData(str(exc)) from exc
    if codec == CODEC_NONE:
        return block
    raise ValueError(f"unknown codec {codec}")


# --- lookup arithmetic --------------------------------------------------------

def chunk_index_for(t_i: int, meta: StreamMeta) -> int:
    """Index of the chunk window containing timestamp t_i."""
    if t_i < meta.t0:
        raise BeforeStreamStart(f"{t_i} precedes stream start {meta.t0}")
    return (t_i - meta.t0) // meta.delta


def window_bounds(meta: StreamMeta, chunk_index: int) -> tuple[int, int]:
    start = meta.t0 + chunk_index * meta.delta
    return start, start + meta.delta


def chunk_key(meta: StreamMeta, chunk_index: int) -> bytes:
    """Deterministic 256-bit storage key for a chunk.

    Digest of <stream-ID, owner-ID, timestamp-hash> where timestamp-hash
    is the digest of the window start as an 8-byte big-endian integer.
    """
    start, _ = window_bounds(meta, chunk_index)
    return sha256(meta.stream_id + meta.owner_id + sha256(be64(start)))


def _nonce(stream_id: bytes, chunk_index: int, epoch: int) -> bytes:
    return sha256(stream_id + be64(chunk_index) + be32(epoch))[:NONCE_SIZE]


# --- seal / open -------------------------------------------------------------

def build_chunk(meta: StreamMeta, records: list[DataRecord], prev_hash: bytes,
                stream_key: StreamKey, signer: keys.SigningKey,
                codec: int = CODEC_ZLIB) -> SealedChunk:
    """Compress, encrypt, and sign one window's records into a chunk."""
    if not records:
        raise ValueError("records must be non-empty")
    if signer.id != meta.owner_id:
        raise ValueError("signer is not the stream owner")
    for prev, cur in zip(records, records[1:]):
        if cur.timestamp <= prev.timestamp:
            raise UnsortedInput("timestamps must be strictly increasing")
    index = chunk_index_for(records[0].timestamp, meta)
    start, end = window_bounds(meta, index)
    if records[-1].timestamp >= end:
        raise RecordOutOfRange(
            f"records span past window [{start}, {end})")

    header = ChunkHeader(meta.stream_id, index, start, end, prev_hash,
                         stream_key.epoch, len(records), codec)
    header_bytes = header.to_bytes()
    block = compress(encode_records(records), codec)
    nonce = _nonce(meta.stream_id, index, stream_key.epoch)
    payload = AESGCM(stream_key.key).encrypt(nonce, block, header_bytes)
    signature = signer.sign(sha256(header_bytes + payload))
    return SealedChunk(header, payload, signature)


def verify_owner(chunk: SealedChunk, owner_pub: bytes) -> bool:
    """Signature-only check, usable without the stream key."""
    message = sha256(chunk.header.to_bytes() + chunk.payload)
    return keys.verify(owner_pub, chunk.signature, message)


def open_chunk(chunk: SealedChunk, stream_key: StreamKey,
               owner_pub: bytes) -> list[DataRecord]:
    """Authenticate and decrypt a chunk, returning its records.

    The AEAD tag is checked first (header tampering surfaces as BadTag
    since the header is associated data), then the owner signature.
    """
    header_bytes = chunk.header.to_bytes()
    if stream_key.epoch != chunk.header.epoch:
        raise WrongEpochKey(
            f"chunk epoch {chunk.header.epoch}, key epoch {stream_key.epoch}")
    nonce = _nonce(chunk.header.stream_id, chunk.header.chunk_index,
                   chunk.header.epoch)
    try:
        block = AESGCM(stream_key.key).decrypt(nonce, chunk.payload,
                                               header_bytes)
    except InvalidTag as exc:
        raise BadTag("chunk failed authenticated decryption") from exc
    if not verify_owner(chunk, owner_pub):
        raise BadSignature("owner signature does not verify")
    records = decode_records(decompress(block, chunk.header.codec))
    if len(records) != chunk.header.record_count:
        raise MalformedChunk("record count disagrees with header")
    return records


def verify_chain(chunks: list[SealedChunk], anchor: bytes) -> bool:
    """Check hash-pointer links and that the last digest equals the anchor.

    Indices must be strictly increasing but not necessarily consecutive:
    empty windows emit no chunk, so the pointer always names the previous
    *emitted* chunk. A chunk at index 0 must carry the all-zero pointer.
    """
    if not chunks:
        return False
    prev_digest = None
    prev_index = -1
    for chunk in chunks:
        if chunk.header.chunk_index <= prev_index:
            return False
        if prev_digest is not None and chunk.header.prev_chunk_hash != prev_digest:
            return False
        if chunk.header.chunk_index == 0 and chunk.header.prev_chunk_hash != ZERO32:
            return False
        prev_index = chunk.header.chunk_index
        prev_digest = chunk.digest()
    return prev_digest == anchor
