"""Digest and canonical-encoding helpers.

Identifiers throughout the system are 32-byte SHA-256 digests. Wire formats
use fixed-width big-endian integers with fields concatenated in declared
order and no padding, so digests of concatenations are unambiguous.
"""

import hashlib

DIGEST_SIZE = 32
ZERO32 = b"\x00" * 32


def sha256(data: bytes) -> bytes:
    return hashlib.sha256(data).digest()


def digest(*parts: bytes) -> bytes:
    """SHA-256 over the concatenation of fixed-width parts."""
    h = hashlib.sha256()
    for part in parts:
        h.update(part)
    return h.digest()


def be64(value: int) -> bytes:
    return value.to_bytes(8, "big")


def be32(value: int) -> bytes:
    return value.to_bytes(4, "big")


def be16(value: int) -> bytes:
    return value.to_bytes(2, "big")


def read_be(data: bytes, offset: int, width: int) -> tuple[int, int]:
    """Decode a big-endian integer, returning (value, next_offset)."""
    end = offset + width
    if end > len(data):
        raise ValueError("truncated integer field")
    return int.from_bytes(data[offset:end], "big"), end
