"""ElGamal-style proxy re-encryption for stream-key distribution.

A 32-byte secret (in this system: a key-regression member state) is
KEM-wrapped rather than encoded into the group: we ElGamal-encrypt a random
group element, derive a masking key from its encoding by hashing, and XOR
the secret with the mask. The two group elements of the ElGamal layer are

    mask = m_hat * pk^r        rand = g^r

so a holder of the matching secret exponent d recovers m_hat as
mask / rand^d.

Re-encryption follows the classic bidirectional construction: a token
scalar t applied to ``rand`` retargets the ciphertext from one secret
exponent to another without touching the plaintext. Because the grantor
only knows the grantee's *public* key, tokens are built non-interactively
by retargeting to a fresh ephemeral exponent e (t = sk_a / e) and sealing
e under the grantee's public key inside the token; the sealed exponent
rides along with re-encrypted ciphertexts. ``token_between`` exposes the
underlying two-secret form for the interactive setting.

Bidirectionality caveat, inherited from the scheme: a grantee who combines
its own secret with a token can recover the grantor-side exponent. That is
contained here exactly as the surrounding protocol demands it: wrapping
keys are ONE-TIME pairs that never protect anything except the current
member state, which the grantee is entitled to anyway. The KEM layer has
no integrity of its own; a forged wrapped key yields garbage material that
fails chunk authentication downstream.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from .errors import InvalidCiphertext, TokenMismatch
from .hashing import be16, sha256
from . import group as groups

_KDF_PREFIX = b"\x02"  # keyreg uses \x00 and \x01
MATERIAL_SIZE = 32


def key_id(grp, pk) -> bytes:
    """Pseudo-identity of a wrapping public key."""
    return sha256(bytes([grp.group_id]) + grp.encode(pk))


@dataclass(frozen=True)
class KeyPair:
    group_name: str
    sk: int
    pk: object
    pk_id: bytes

    @property
    def group(self):
        return groups.by_name(self.group_name)


def generate_keypair(grp, rng=None) -> KeyPair:
    sk = grp.random_scalar(rng)
    pk = grp.exp(grp.generator(), sk)
    return KeyPair(grp.name, sk, pk, key_id(grp, pk))


@dataclass(frozen=True)
class KemEnvelope:
    """ElGamal KEM of 32 opaque bytes under some public key."""
    mask: object
    rand: object
    boxed: bytes


@dataclass(frozen=True)
class WrappedKey:
    group_name: str
    mask: object
    rand: object
    boxed: bytes
    target_id: bytes
    envelope: Optional[KemEnvelope] = None  # set on re-encrypted ciphertexts

    @property
    def group(self):
        return groups.by_name(self.group_name)

    def to_bytes(self) -> bytes:
        grp = self.group
        flags = 1 if self.envelope else 0
        out = bytes([grp.group_id, flags])
        out += grp.encode(self.mask) + grp.encode(self.rand)
        out += be16(len(self.boxed)) + self.boxed
        out += self.target_id
        if self.envelope:
            out += _envelope_bytes(grp, self.envelope)
        return out

    @classmethod
    def from_bytes(cls, data: bytes) -> "WrappedKey":
        try:
            grp = groups.by_id(data[0])
            flags = data[1]
            off = 2
            mask, off = _read_element(grp, data, off)
            rand, off = _read_element(grp, data, off)
            blen = int.from_bytes(data[off:off + 2], "big")
            off += 2
            boxed = data[off:off + blen]
            if len(boxed) != blen:
                raise ValueError("truncated boxed field")
            off += blen
            target = data[off:off + 32]
            if len(target) != 32:
                raise ValueError("truncated target id")
            off += 32
            envelope = None
            if flags & 1:
                envelope, off = _read_envelope(grp, data, off)
            if off != len(data):
                raise ValueError("trailing bytes")
            return cls(grp.name, mask, rand, boxed, target, envelope)
        except (ValueError, IndexError) as exc:
            raise InvalidCiphertext(str(exc)) from exc


@dataclass(frozen=True)
class ReEncryptionToken:
    group_name: str
    scalar: int
    from_id: bytes
    to_id: bytes
    envelope: Optional[KemEnvelope] = None  # absent for the interactive form

    @property
    def group(self):
        return groups.by_name(self.group_name)

    def to_bytes(self) -> bytes:
        grp = self.group
        flags = 1 if self.envelope else 0
        out = bytes([grp.group_id, flags])
        out += self.scalar.to_bytes(32, "big")
        out += self.from_id + self.to_id
        if self.envelope:
            out += _envelope_bytes(grp, self.envelope)
        return out

    @classmethod
    def from_bytes(cls, data: bytes) -> "ReEncryptionToken":
        try:
            grp = groups.by_id(data[0])
            flags = data[1]
            scalar = int.from_bytes(data[2:34], "big")
            from_id, to_id = data[34:66], data[66:98]
            if len(to_id) != 32:
                raise ValueError("truncated token")
            off = 98
            envelope = None
            if flags & 1:
                envelope, off = _read_envelope(grp, data, off)
            if off != len(data):
                raise ValueError("trailing bytes")
            return cls(grp.name, scalar, from_id, to_id, envelope)
        except (ValueError, IndexError) as exc:
            raise InvalidCiphertext(str(exc)) from exc


def _read_element(grp, data: bytes, off: int):
    end = off + grp.element_size
    if end > len(data):
        raise ValueError("truncated group element")
    return grp.decode(data[off:end]), end


def _envelope_bytes(grp, env: KemEnvelope) -> bytes:
    return (grp.encode(env.mask) + grp.encode(env.rand)
            + be16(len(env.boxed)) + env.boxed)


def _read_envelope(grp, data: bytes, off: int):
    mask, off = _read_element(grp, data, off)
    rand, off = _read_element(grp, data, off)
    blen = int.from_bytes(data[off:off + 2], "big")
    off += 2
    boxed = data[off:off + blen]
    if len(boxed) != blen:
        raise ValueError("truncated envelope")
    return KemEnvelope(mask, rand, boxed), off + blen


def _mask_bytes(grp, m_hat) -> bytes:
    return sha256(_KDF_PREFIX + bytes([grp.group_id]) + grp.encode(m_hat))


def _seal(grp, pk, secret: bytes, rng=None):
    """ElGamal-KEM a 32-byte secret under pk."""
    m_hat = grp.exp(grp.generator(), grp.random_scalar(rng))
    r = grp.random_scalar(rng)
    mask = grp.mul(m_hat, grp.exp(pk, r))
    rand = grp.exp(grp.generator(), r)
    boxed = bytes(a ^ b for a, b in zip(secret, _mask_bytes(grp, m_hat)))
    return mask, rand, boxed


def _open(grp, exponent: int, mask, rand, boxed: bytes) -> bytes:
    m_hat = grp.mul(mask, grp.inv(grp.exp(rand, exponent)))
    try:
        mask_bytes = _mask_bytes(grp, m_hat)
    except ValueError as exc:  # identity element, only via forged inputs
        raise InvalidCiphertext(str(exc)) from exc
    return bytes(a ^ b for a, b in zip(boxed, mask_bytes))


def wrap_key(grp, pk, material: bytes, rng=None) -> WrappedKey:
    """Encrypt 32 bytes of key material to a wrapping public key."""
    if len(material) != MATERIAL_SIZE:
        raise ValueError("material must be 32 bytes")
    mask, rand, boxed = _seal(grp, pk, material, rng)
    return WrappedKey(grp.name, mask, rand, boxed, key_id(grp, pk))


def unwrap_key(keypair: KeyPair, wrapped: WrappedKey) -> bytes:
    """Recover the wrapped material with the target secret key."""
    grp = keypair.group
    if wrapped.group_name != keypair.group_name:
        raise InvalidCiphertext("group mismatch")
    if wrapped.target_id != keypair.pk_id:
        raise InvalidCiphertext("not the target of this ciphertext")
    if len(wrapped.boxed) != MATERIAL_SIZE:
        raise InvalidCiphertext("bad material length")
    exponent = keypair.sk
    if wrapped.envelope is not None:
        e_bytes = _open(grp, keypair.sk, wrapped.envelope.mask,
                        wrapped.envelope.rand, wrapped.envelope.boxed)
        exponent = int.from_bytes(e_bytes, "big")
        if not 1 <= exponent < grp.order:
            raise InvalidCiphertext("recovered exponent out of range")
    return _open(grp, exponent, wrapped.mask, wrapped.rand, wrapped.boxed)


def make_token(keypair_a: KeyPair, pk_b, rng=None) -> ReEncryptionToken:
    """Token turning ciphertexts under keypair_a into ones readable by pk_b.

    Non-interactive: retargets to a fresh ephemeral exponent and seals that
    exponent under pk_b, so only pk_b's holder can use the result.
    """
    grp = keypair_a.group
    e = grp.random_scalar(rng)
    scalar = keypair_a.sk * pow(e, -1, grp.order) % grp.order
    env = KemEnvelope(*_seal(grp, pk_b, e.to_bytes(32, "big"), rng))
    return ReEncryptionToken(grp.name, scalar, keypair_a.pk_id,
                             key_id(grp, pk_b), env)


def token_between(keypair_a: KeyPair, keypair_b: KeyPair) -> ReEncryptionToken:
    """Interactive two-secret token (both parties' secrets in one place)."""
    grp = keypair_a.group
    scalar = keypair_a.sk * pow(keypair_b.sk, -1, grp.order) % grp.order
    return ReEncryptionToken(grp.name, scalar, keypair_a.pk_id,
                             keypair_b.pk_id, None)


def reencrypt(token: ReEncryptionToken, wrapped: WrappedKey) -> WrappedKey:
    """Transform a wrapped key to the token's target. Single hop only."""
    if token.group_name != wrapped.group_name:
        raise TokenMismatch("group mismatch")
    if wrapped.target_id != token.from_id:
        raise TokenMismatch("token does not match ciphertext target")
    if wrapped.envelope is not None:
        raise TokenMismatch("ciphertext was already re-encrypted")
    grp = wrapped.group
    rand = grp.exp(wrapped.rand, token.scalar)
    return WrappedKey(wrapped.group_name, wrapped.mask, rand, wrapped.boxed,
                      token.to_id, token.envelope)
