"""Owner-controlled distribution of stream keys to services.

The owner never hands out raw epoch keys. Instead each epoch's regression
state is wrapped to a *one-time* public key, and every granted service
holds a re-encryption token that retargets that single wrapped object to
its own key pair. The resulting costs match the design goals:

* grant    -- publish one token for the new service (the wrapped key is
              already out there);
* rotation -- publish exactly one new wrapped key; every existing token
              still applies, so the cost is O(1) in the number of services;
* revocation -- mint a fresh one-time key pair, wrap the new epoch's state
              to it, and issue fresh tokens to the remaining services: the
              revoked service's token now points at a retired key, so the
              cost is O(n) but the exclusion is cryptographic.

A revoked service that kept old member states can still derive keys for
epochs it once held -- by design, matching the append-only model: data it
could already read stays readable, while everything sealed after the
revocation epoch is out of its reach.

Key material lives in the storage layer under deterministic keys
(``keymat_key``): the wrapped key for epoch e is filed under the one-time
key's identity, each token under its service's identity at the epoch of
issue. A service recovers the epoch-e state by scanning its own slot
downward from e for its newest token, fetching the wrapped key the token
points at, re-encrypting, and unwrapping.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

from . import keyreg, keys, pre
from .errors import (
    EpochOutOfRange,
    KeyExists,
    MissingKeyEpoch,
    NotCurrentlyGranted,
    NotFound,
    TokenMismatch,
)
from .group import Secp256k1Group, SchnorrGroup, secp256k1
from .storage import keymat_key

Getter = Callable[[bytes], bytes]
Putter = Callable[[bytes, bytes], None]


@dataclass
class EpochArtifacts:
    """Everything the owner publishes for one epoch change."""
    epoch: int
    wrapped: pre.WrappedKey
    tokens: dict[bytes, pre.ReEncryptionToken] = field(default_factory=dict)

    @property
    def object_count(self) -> int:
        return 1 + len(self.tokens)


class StreamSharing:
    """Owner-side sharing state for one stream.

    Tracks the current one-time key pair and the granted services' public
    keys; every mutation returns the artifacts to publish. The ledger --
    not this class -- remains the authority on *permissions*; this class
    only manages the cryptographic material that makes permissions
    effective.
    """

    def __init__(self, chain: keyreg.KeyRegressionChain,
                 group: Optional[Secp256k1Group | SchnorrGroup] = None,
                 rng=None, start_epoch: int = 0):
        self.chain = chain
        self.group = group if group is not None else secp256k1()
        self.rng = rng
        self.epoch = start_epoch
        self.onetime = pre.generate_keypair(self.group, rng)
        self.grantee_keys: dict[bytes, object] = {}

    def _wrap_current(self) -> pre.WrappedKey:
        return pre.wrap_key(self.group, self.onetime.pk,
                            self.chain.state(self.epoch), self.rng)

    def _advance_epoch(self) -> None:
        if self.epoch + 1 > self.chain.max_epochs:
            raise EpochOutOfRange(
                f"chain exhausted at epoch {self.chain.max_epochs}")
        self.epoch += 1

    @classmethod
    def restore(cls, chain: keyreg.KeyRegressionChain, group, epoch: int,
                onetime_sk: int, grantee_keys: dict[bytes, object],
                rng=None) -> "StreamSharing":
        """Rebuild sharing state from persisted scalars and points."""
        self = cls(chain, group=group, rng=rng, start_epoch=epoch)
        pk = group.exp(group.generator(), onetime_sk)
        self.onetime = pre.KeyPair(group.name, onetime_sk, pk,
                                   pre.key_id(group, pk))
        self.grantee_keys = dict(grantee_keys)
        return self

    def bootstrap(self) -> EpochArtifacts:
        """Initial wrapped key for the starting epoch; no tokens yet."""
        return EpochArtifacts(self.epoch, self._wrap_current())

    def grant(self, grantee_id: bytes, grantee_pk) -> pre.ReEncryptionToken:
        """Admit a service: one token from the one-time key to its key."""
        token = pre.make_token(self.onetime, grantee_pk, self.rng)
        self.grantee_keys[grantee_id] = grantee_pk
        return token

    def rotate(self) -> EpochArtifacts:
        """Advance one epoch; one new wrapped key, zero new tokens."""
        self._advance_epoch()
        return EpochArtifacts(self.epoch, self._wrap_current())

    def revoke(self, grantee_id: bytes) -> EpochArtifacts:
        """Exclude a service: fresh one-time pair, new wrapped key, and
        fresh tokens for every *remaining* service."""
        if grantee_id not in self.grantee_keys:
            raise NotCurrentlyGranted(grantee_id.hex())
        del self.grantee_keys[grantee_id]
        self._advance_epoch()
        self.onetime = pre.generate_keypair(self.group, self.rng)
        tokens = {gid: pre.make_token(self.onetime, gpk, self.rng)
                  for gid, gpk in self.grantee_keys.items()}
        return EpochArtifacts(self.epoch, self._wrap_current(), tokens)


class ServiceMember:
    """A granted service: a signing identity plus a re-encryption key pair."""

    def __init__(self, signing: Optional[keys.SigningKey] = None,
                 group: Optional[Secp256k1Group | SchnorrGroup] = None,
                 rng=None, pre_sk: Optional[int] = None):
        self.signing = signing if signing is not None else keys.SigningKey.generate()
        self.group = group if group is not None else secp256k1()
        if pre_sk is None:
            self.pre_keys = pre.generate_keypair(self.group, rng)
        else:
            pk = self.group.exp(self.group.generator(), pre_sk)
            self.pre_keys = pre.KeyPair(self.group.name, pre_sk, pk,
                                        pre.key_id(self.group, pk))
        self.token: Optional[pre.ReEncryptionToken] = None

    @property
    def id(self) -> bytes:
        return self.signing.id

    @property
    def public_key(self):
        return self.pre_keys.pk

    def accept_token(self, token: pre.ReEncryptionToken) -> None:
        if token.to_id != self.pre_keys.pk_id:
            raise TokenMismatch("token is addressed to a different key")
        self.token = token

    def unwrap_state(self, wrapped: pre.WrappedKey) -> bytes:
        """Recover a key-regression state from a published wrapped key."""
        if wrapped.target_id == self.pre_keys.pk_id:
            return pre.unwrap_key(self.pre_keys, wrapped)
        if self.token is None:
            raise TokenMismatch("no token held for re-encryption")
        rewrapped = pre.reencrypt(self.token, wrapped)
        return pre.unwrap_key(self.pre_keys, rewrapped)

    def epoch_key(self, state: bytes, state_epoch: int, epoch: int) -> bytes:
        """Symmetric key for ``epoch`` <= ``state_epoch`` via unwinding."""
        return keyreg.derive_key(state, state_epoch, epoch)


# --- storage-layer publication and recovery -----------------------------------

def publish_wrapped(put: Putter, stream_id: bytes,
                    artifacts: EpochArtifacts) -> int:
    """Write an epoch's artifacts into a key-material store.

    Returns the number of objects written. Within one epoch the slots are
    first-write-wins (the store is append-only); re-publishing identical
    artifacts is a no-op.
    """
    written = 0
    wk = artifacts.wrapped
    written += _put_once(put, keymat_key(stream_id, artifacts.epoch,
                                         wk.target_id), wk.to_bytes())
    for gid, token in artifacts.tokens.items():
        written += _put_once(put, keymat_key(stream_id, artifacts.epoch, gid),
                             token.to_bytes())
    return written


def publish_token(put: Putter, stream_id: bytes, epoch: int,
                  grantee_id: bytes, token: pre.ReEncryptionToken) -> None:
    _put_once(put, keymat_key(stream_id, epoch, grantee_id), token.to_bytes())


def _put_once(put: Putter, key: bytes, value: bytes) -> int:
    try:
        put(key, value)
        return 1
    except KeyExists:
        return 0


def fetch_token(get: Getter, stream_id: bytes, grantee_id: bytes,
                max_epoch: int) -> tuple[pre.ReEncryptionToken, int]:
    """Newest token for a grantee at or below ``max_epoch``.

    Scans the grantee's slot downward; the first hit is the most recent
    (re-)issue, which is the only token that can match the current
    wrapped key.
    """
    for epoch in range(max_epoch, -1, -1):
        try:
            raw = get(keymat_key(stream_id, epoch, grantee_id))
        except NotFound:
            continue
        return pre.ReEncryptionToken.from_bytes(raw), epoch
    raise MissingKeyEpoch(
        f"no token for {grantee_id.hex()[:16]} at epoch <= {max_epoch}")


def fetch_wrapped(get: Getter, stream_id: bytes, epoch: int,
                  target_id: bytes) -> pre.WrappedKey:
    try:
        raw = get(keymat_key(stream_id, epoch, target_id))
    except NotFound as exc:
        raise MissingKeyEpoch(
            f"no wrapped key for epoch {epoch} under {target_id.hex()[:16]}"
        ) from exc
    return pre.WrappedKey.from_bytes(raw)


def recover_state(get: Getter, member: ServiceMember, stream_id: bytes,
                  epoch: int) -> bytes:
    """Full service-side recovery of the epoch's regression state.

    Raises MissingKeyEpoch when the service's material cannot open the
    epoch (e.g. it was revoked before ``epoch`` was published).
    """
    token, _ = fetch_token(get, stream_id, member.id, epoch)
    member.accept_token(token)
    wrapped = fetch_wrapped(get, stream_id, epoch, token.from_id)
    return member.unwrap_state(wrapped)
