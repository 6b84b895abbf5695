"""Ed25519 signing identities.

The digest of a verification key is the principal's pseudo-identity: it is
what appears on the ledger, in chunk keys, and in audit events. Raw key
bytes only travel where a signature must actually be checked.
"""

from __future__ import annotations

from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives import serialization
from cryptography.hazmat.primitives.asymmetric.ed25519 import (
    Ed25519PrivateKey,
    Ed25519PublicKey,
)

from .hashing import sha256

SIGNATURE_SIZE = 64
PUBKEY_SIZE = 32

_RAW = serialization.Encoding.Raw
_RAW_PUB = serialization.PublicFormat.Raw
_RAW_PRIV = serialization.PrivateFormat.Raw
_NOENC = serialization.NoEncryption()


class SigningKey:
    """An Ed25519 keypair plus its derived pseudo-identity."""

    def __init__(self, private: Ed25519PrivateKey):
        self._private = private
        self.public_bytes = private.public_key().public_bytes(_RAW, _RAW_PUB)
        self.id = sha256(self.public_bytes)

    @classmethod
    def generate(cls) -> "SigningKey":
        return cls(Ed25519PrivateKey.generate())

    @classmethod
    def from_seed(cls, seed: bytes) -> "SigningKey":
        """Deterministic keypair from 32 bytes of seed material."""
        if len(seed) != 32:
            seed = sha256(seed)
        return cls(Ed25519PrivateKey.from_private_bytes(seed))

    def private_bytes(self) -> bytes:
        return self._private.private_bytes(_RAW, _RAW_PRIV, _NOENC)

    def sign(self, message: bytes) -> bytes:
        return self._private.sign(message)


def pseudo_id(public_bytes: bytes) -> bytes:
    return sha256(public_bytes)


def verify(public_bytes: bytes, signature: bytes, message: bytes) -> bool:
    """True iff signature is valid; malformed keys/signatures count as invalid."""
    try:
        Ed25519PublicKey.from_public_bytes(public_bytes).verify(signature, message)
        return True
    except (InvalidSignature, ValueError):
        return False
