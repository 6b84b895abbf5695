import random

import pytest

from streamvault import keyreg, pre
from streamvault.errors import (
    EpochOutOfRange,
    KeyExists,
    MissingKeyEpoch,
    NotCurrentlyGranted,
    NotFound,
    TokenMismatch,
)
from streamvault.group import secp256k1, toy_group
from streamvault.hashing import sha256
from streamvault.keys import SigningKey
from streamvault.sharing import (
    EpochArtifacts,
    ServiceMember,
    StreamSharing,
    fetch_token,
    fetch_wrapped,
    publish_token,
    publish_wrapped,
    recover_state,
)

STREAM_ID = sha256(b"sharing-test-stream")


class DictStore:
    """Strict append-only map: any rewrite raises, like the storage node."""

    def __init__(self):
        self.data: dict[bytes, bytes] = {}

    def put(self, key: bytes, value: bytes) -> None:
        if key in self.data:
            raise KeyExists(key.hex()[:16])
        self.data[key] = value

    def get(self, key: bytes) -> bytes:
        try:
            return self.data[key]
        except KeyError:
            raise NotFound(key.hex()[:16]) from None


def make_world(grantees: int = 3, max_epochs: int = 8):
    rng = random.Random(0x5EED)
    chain = keyreg.KeyRegressionChain(
        sha256(b"sharing-seed"), max_epochs=max_epochs)
    sharing = StreamSharing(chain, group=secp256k1(), rng=rng)
    members = []
    for i in range(grantees):
        member = ServiceMember(
            signing=SigningKey.from_seed(bytes([0x10 + i]) * 32),
            group=sharing.group, rng=rng)
        member.accept_token(sharing.grant(member.id, member.public_key))
        members.append(member)
    return chain, sharing, members


def test_bootstrap_is_one_object():
    chain, sharing, _ = make_world(grantees=0)
    artifacts = sharing.bootstrap()
    assert artifacts.epoch == 0
    assert artifacts.tokens == {}
    assert artifacts.object_count == 1
    assert artifacts.wrapped.target_id == sharing.onetime.pk_id


def test_grant_lets_member_unwrap_and_derive():
    chain, sharing, members = make_world()
    wrapped = sharing.bootstrap().wrapped
    for member in members:
        state = member.unwrap_state(wrapped)
        assert state == chain.state(0)
        assert member.epoch_key(state, 0, 0) == chain.key(0)


def test_rotation_publishes_exactly_one_object():
    chain, sharing, members = make_world(grantees=5)
    artifacts = sharing.rotate()
    assert artifacts.epoch == 1
    assert artifacts.object_count == 1
    assert artifacts.tokens == {}
    # every pre-existing token still applies to the new wrapped key
    for member in members:
        state = member.unwrap_state(artifacts.wrapped)
        assert state == chain.state(1)
        # and unwinds to the older epoch too
        assert member.epoch_key(state, 1, 0) == chain.key(0)


def test_rotation_cost_constant_in_member_count():
    for n in (1, 4, 9):
        _, sharing, _ = make_world(grantees=n)
        assert sharing.rotate().object_count == 1


def test_revocation_reissues_for_remaining_members():
    chain, sharing, members = make_world(grantees=3)
    revoked, kept_a, kept_b = members
    artifacts = sharing.revoke(revoked.id)
    assert artifacts.epoch == 1
    assert set(artifacts.tokens) == {kept_a.id, kept_b.id}
    assert artifacts.object_count == 3  # 1 wrapped key + n-1 tokens
    for member in (kept_a, kept_b):
        member.accept_token(artifacts.tokens[member.id])
        assert member.unwrap_state(artifacts.wrapped) == chain.state(1)


def test_revoked_member_cannot_open_new_epoch():
    chain, sharing, members = make_world(grantees=2)
    revoked, kept = members
    old_wrapped = sharing.bootstrap().wrapped
    old_state = revoked.unwrap_state(old_wrapped)
    artifacts = sharing.revoke(revoked.id)

    # the stale token targets the retired one-time key, not the new one
    with pytest.raises(TokenMismatch):
        revoked.unwrap_state(artifacts.wrapped)
    # even raw re-encryption of the new bytes is rejected
    with pytest.raises(TokenMismatch):
        pre.reencrypt(revoked.token, artifacts.wrapped)

    # ...but data already readable stays readable: epoch 0 key still derives
    assert revoked.epoch_key(old_state, 0, 0) == chain.key(0)
    # and the forward state is out of reach of the old state entirely
    with pytest.raises(EpochOutOfRange):
        keyreg.derive_key(old_state, 0, 1)

    kept.accept_token(artifacts.tokens[kept.id])
    assert kept.unwrap_state(artifacts.wrapped) == chain.state(1)


def test_revoke_unknown_member_rejected():
    _, sharing, _ = make_world(grantees=1)
    with pytest.raises(NotCurrentlyGranted):
        sharing.revoke(b"\x99" * 32)


def test_epoch_exhaustion():
    _, sharing, _ = make_world(grantees=0, max_epochs=2)
    sharing.rotate()
    sharing.rotate()
    with pytest.raises(EpochOutOfRange):
        sharing.rotate()


def test_accept_token_checks_target():
    _, sharing, members = make_world(grantees=2)
    a, b = members
    token_for_b = sharing.grant(b.id, b.public_key)
    with pytest.raises(TokenMismatch):
        a.accept_token(token_for_b)


def test_unwrap_without_token_rejected():
    chain, sharing, _ = make_world(grantees=0)
    loner = ServiceMember(group=sharing.group, rng=random.Random(7))
    with pytest.raises(TokenMismatch):
        loner.unwrap_state(sharing.bootstrap().wrapped)


def test_wrap_addressed_directly_needs_no_token():
    chain, sharing, _ = make_world(grantees=0)
    member = ServiceMember(group=sharing.group, rng=random.Random(8))
    wrapped = pre.wrap_key(sharing.group, member.public_key, chain.state(0),
                           random.Random(9))
    assert member.unwrap_state(wrapped) == chain.state(0)


def test_publish_and_recover_via_store():
    chain, sharing, members = make_world(grantees=2)
    store = DictStore()
    assert publish_wrapped(store.put, STREAM_ID, sharing.bootstrap()) == 1
    for member in members:
        publish_token(store.put, STREAM_ID, 0, member.id, member.token)

    fresh = ServiceMember(
        signing=SigningKey.from_seed(bytes([0x10]) * 32),
        group=sharing.group, pre_sk=members[0].pre_keys.sk)
    state = recover_state(store.get, fresh, STREAM_ID, 0)
    assert state == chain.state(0)


def test_recovery_scans_down_to_newest_token():
    chain, sharing, members = make_world(grantees=1)
    member = members[0]
    store = DictStore()
    publish_wrapped(store.put, STREAM_ID, sharing.bootstrap())
    publish_token(store.put, STREAM_ID, 0, member.id, member.token)
    # two rotations later the token from epoch 0 still unlocks epoch 2
    sharing.rotate()
    publish_wrapped(store.put, STREAM_ID, sharing.rotate())
    token, issued_at = fetch_token(store.get, STREAM_ID, member.id, 2)
    assert issued_at == 0
    state = recover_state(store.get, member, STREAM_ID, 2)
    assert state == chain.state(2)
    assert member.epoch_key(state, 2, 1) == chain.key(1)


def test_recovery_after_revocation_fails_closed():
    chain, sharing, members = make_world(grantees=2)
    revoked, kept = members
    store = DictStore()
    publish_wrapped(store.put, STREAM_ID, sharing.bootstrap())
    for member in members:
        publish_token(store.put, STREAM_ID, 0, member.id, member.token)
    publish_wrapped(store.put, STREAM_ID, sharing.revoke(revoked.id))

    # kept member recovers the new epoch through its re-issued token
    assert recover_state(store.get, kept, STREAM_ID, 1) == chain.state(1)
    # revoked member's newest token points at the retired key: no wrapped
    # key for epoch 1 exists under that identity
    with pytest.raises(MissingKeyEpoch):
        recover_state(store.get, revoked, STREAM_ID, 1)
    # its history stays open
    assert recover_state(store.get, revoked, STREAM_ID, 0) == chain.state(0)


def test_fetch_token_missing():
    store = DictStore()
    with pytest.raises(MissingKeyEpoch):
        fetch_token(store.get, STREAM_ID, b"\x01" * 32, 5)


def test_fetch_wrapped_missing():
    store = DictStore()
    with pytest.raises(MissingKeyEpoch):
        fetch_wrapped(store.get, STREAM_ID, 0, b"\x02" * 32)


def test_publish_is_first_write_wins():
    _, sharing, _ = make_world(grantees=0)
    store = DictStore()
    artifacts = sharing.bootstrap()
    assert publish_wrapped(store.put, STREAM_ID, artifacts) == 1
    assert publish_wrapped(store.put, STREAM_ID, artifacts) == 0


def test_restore_matches_live_instance():
    chain, sharing, members = make_world(grantees=2)
    again = StreamSharing.restore(
        chain, sharing.group, sharing.epoch, sharing.onetime.sk,
        sharing.grantee_keys, rng=random.Random(1))
    assert again.onetime.pk_id == sharing.onetime.pk_id
    assert again.epoch == sharing.epoch
    assert set(again.grantee_keys) == set(sharing.grantee_keys)
    # a wrapped key minted by the restored instance opens with old tokens
    wrapped = again.bootstrap().wrapped
    for member in members:
        assert member.unwrap_state(wrapped) == chain.state(0)


def test_member_restore_from_scalar():
    _, sharing, members = make_world(grantees=1)
    member = members[0]
    clone = ServiceMember(signing=member.signing, group=sharing.group,
                          pre_sk=member.pre_keys.sk)
    assert clone.pre_keys.pk_id == member.pre_keys.pk_id
    clone.accept_token(member.token)
    wrapped = sharing.bootstrap().wrapped
    assert clone.unwrap_state(wrapped) == member.unwrap_state(wrapped)


def test_toy_group_end_to_end():
    rng = random.Random(0xABCD)
    chain = keyreg.KeyRegressionChain(sha256(b"toy"), max_epochs=4)
    sharing = StreamSharing(chain, group=toy_group(), rng=rng)
    member = ServiceMember(group=sharing.group, rng=rng)
    member.accept_token(sharing.grant(member.id, member.public_key))
    assert member.unwrap_state(sharing.bootstrap().wrapped) == chain.state(0)
    assert member.unwrap_state(sharing.rotate().wrapped) == chain.state(1)
