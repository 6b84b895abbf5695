import threading

import pytest

from streamvault.errors import (
    KeyExists,
    LedgerUnavailable,
    NotFound,
    NotStreamOwner,
    PermissionDenied,
    StaleChallenge,
    ValueTooLarge,
)
from streamvault.hashing import ZERO32, sha256
from streamvault.keys import SigningKey
from streamvault.ledger import SimChain, derive_stream_id, replay, tx_grant, tx_register
from streamvault.storage import (
    ACCESS_PROTECTED,
    ACCESS_PUBLIC,
    CHALLENGE_TTL_MS,
    MAX_VALUE_SIZE,
    Challenge,
    DiskBackend,
    MemoryBackend,
    StorageClient,
    StorageNode,
    keymat_key,
    read_request_message,
    serve,
)


@pytest.fixture
def world():
    owner = SigningKey.from_seed(bytes([1]) * 32)
    reader = SigningKey.from_seed(bytes([2]) * 32)
    stranger = SigningKey.from_seed(bytes([3]) * 32)
    chain = SimChain()
    chain.submit(tx_register(owner, 0, 1000, 0, b"s"))
    sid = derive_stream_id(owner.public_bytes, 0, 1000, 0, b"s")
    chain.settle()
    chain.submit(tx_grant(owner, sid, reader.id))
    chain.settle()
    state = replay(chain.get_blocks())
    clock = {"now": 0}
    node = StorageNode(SigningKey.from_seed(bytes([9]) * 32), state=state,
                       clock=lambda: clock["now"])
    return node, owner, reader, stranger, sid, clock


def test_put_get_round_trip(world):
    node, owner, reader, _, sid, _ = world
    key = sha256(b"k")
    node.owner_put(key, b"payload", sid, ACCESS_PROTECTED, owner)
    assert node.read_as(key, owner) == b"payload"
    assert node.read_as(key, reader) == b"payload"


def test_protected_read_denied_without_grant(world):
    node, owner, _, stranger, sid, _ = world
    key = sha256(b"k")
    node.owner_put(key, b"payload", sid, ACCESS_PROTECTED, owner)
    with pytest.raises(PermissionDenied):
        node.read_as(key, stranger)
    denials = [d for d in node.decisions if not d.allowed]
    assert denials and denials[-1].principal_id == stranger.id


def test_public_read_needs_no_identity(world):
    node, owner, _, _, sid, _ = world
    key = sha256(b"pub")
    node.owner_put(key, b"open", sid, ACCESS_PUBLIC, owner)
    assert node.get_public(key) == b"open"


def test_public_read_refuses_protected_values(world):
    node, owner, _, _, sid, _ = world
    key = sha256(b"k")
    node.owner_put(key, b"secret", sid, ACCESS_PROTECTED, owner)
    with pytest.raises(PermissionDenied):
        node.get_public(key)


def test_append_only_semantics(world):
    node, owner, _, _, sid, _ = world
    key = sha256(b"k")
    node.owner_put(key, b"v1", sid, ACCESS_PROTECTED, owner)
    node.owner_put(key, b"v1", sid, ACCESS_PROTECTED, owner)  # idempotent
    with pytest.raises(KeyExists):
        node.owner_put(key, b"v2", sid, ACCESS_PROTECTED, owner)
    assert node.read_as(key, owner) == b"v1"


def test_value_size_limit(world):
    node, owner, _, _, sid, _ = world
    with pytest.raises(ValueTooLarge):
        node.owner_put(sha256(b"big"), b"x" * (MAX_VALUE_SIZE + 1), sid,
                       ACCESS_PUBLIC, owner)


def test_put_requires_valid_signature(world):
    node, owner, _, stranger, sid, _ = world
    key = sha256(b"k")
    with pytest.raises(PermissionDenied):
        node.put(key, b"v", sid, ACCESS_PUBLIC, owner.public_bytes,
                 b"\x00" * 64)


def test_put_for_registered_stream_requires_owner(world):
    node, _, _, stranger, sid, _ = world
    with pytest.raises(NotStreamOwner):
        node.owner_put(sha256(b"k"), b"v", sid, ACCESS_PUBLIC, stranger)


def test_challenge_single_use(world):
    node, owner, reader, _, sid, _ = world
    key = sha256(b"k")
    node.owner_put(key, b"v", sid, ACCESS_PROTECTED, owner)
    challenge = node.issue_challenge()
    sig = reader.sign(read_request_message(challenge, key))
    assert node.get(key, reader.public_bytes, challenge.nonce, sig) == b"v"
    with pytest.raises(StaleChallenge):
        node.get(key, reader.public_bytes, challenge.nonce, sig)


def test_challenge_expires(world):
    node, owner, reader, _, sid, clock = world
    key = sha256(b"k")
    node.owner_put(key, b"v", sid, ACCESS_PROTECTED, owner)
    challenge = node.issue_challenge()
    clock["now"] += CHALLENGE_TTL_MS + 1
    sig = reader.sign(read_request_message(challenge, key))
    with pytest.raises(StaleChallenge):
        node.get(key, reader.public_bytes, challenge.nonce, sig)


def test_challenge_signature_binds_key(world):
    """A signature over one key cannot fetch a different key."""
    node, owner, reader, _, sid, _ = world
    k1, k2 = sha256(b"k1"), sha256(b"k2")
    node.owner_put(k1, b"v1", sid, ACCESS_PROTECTED, owner)
    node.owner_put(k2, b"v2", sid, ACCESS_PROTECTED, owner)
    challenge = node.issue_challenge()
    sig = reader.sign(read_request_message(challenge, k1))
    with pytest.raises(PermissionDenied):
        node.get(k2, reader.public_bytes, challenge.nonce, sig)


def test_forged_challenge_rejected(world):
    node, owner, reader, _, sid, _ = world
    key = sha256(b"k")
    node.owner_put(key, b"v", sid, ACCESS_PROTECTED, owner)
    fake = Challenge(sha256(b"fake"), node.node_id, 0)
    sig = reader.sign(read_request_message(fake, key))
    with pytest.raises(StaleChallenge):
        node.get(key, reader.public_bytes, fake.nonce, sig)


def test_fails_closed_without_ledger(world):
    node, owner, reader, _, sid, _ = world
    key = sha256(b"k")
    node.owner_put(key, b"v", sid, ACCESS_PROTECTED, owner)
    node.state = None
    with pytest.raises(LedgerUnavailable):
        node.read_as(key, reader)


def test_enforcement_disabled_serves_everyone(world):
    """The malicious-node configuration: checks off, everything readable --
    which is exactly why chunk confidentiality must not depend on it."""
    node, owner, _, stranger, sid, _ = world
    key = sha256(b"k")
    node.owner_put(key, b"v", sid, ACCESS_PROTECTED, owner)
    node.enforce = False
    assert node.read_as(key, stranger) == b"v"


def test_ledger_check_toggle_isolates_acl_consult(world):
    node, owner, _, stranger, sid, _ = world
    key = sha256(b"k")
    node.owner_put(key, b"v", sid, ACCESS_PROTECTED, owner)
    node.ledger_check = False
    assert node.read_as(key, stranger) == b"v"
    assert any(d.reason == "no-check" for d in node.decisions)


def test_missing_key_not_found(world):
    node, _, reader, _, _, _ = world
    with pytest.raises(NotFound):
        node.read_as(sha256(b"missing"), reader)


def test_decision_log_records_allows_and_denies(world):
    node, owner, reader, stranger, sid, _ = world
    key = sha256(b"k")
    node.owner_put(key, b"v", sid, ACCESS_PROTECTED, owner)
    node.read_as(key, reader)
    try:
        node.read_as(key, stranger)
    except PermissionDenied:
        pass
    allowed = [d for d in node.decisions if d.allowed]
    denied = [d for d in node.decisions if not d.allowed]
    assert allowed and denied
    assert allowed[-1].stream_id == sid


def test_keymat_key_restates_layout():
    sid, gid = sha256(b"s"), sha256(b"g")
    expected = sha256(sid + b"keymat" + (7).to_bytes(4, "big") + gid)
    assert keymat_key(sid, 7, gid) == expected


def test_disk_backend_round_trip(tmp_path):
    backend = DiskBackend(tmp_path / "store")
    backend.put(sha256(b"a"), b"alpha")
    backend.put(sha256(b"b"), b"beta")
    assert backend.get(sha256(b"a")) == b"alpha"
    assert backend.get(sha256(b"zz")) is None
    assert backend.has(sha256(b"b"))
    assert sorted(backend.keys()) == sorted([sha256(b"a"), sha256(b"b")])
    # fresh instance sees the same files
    again = DiskBackend(tmp_path / "store")
    assert again.get(sha256(b"b")) == b"beta"


def test_memory_backend_scan():
    backend = MemoryBackend()
    backend.put(b"\x01" + bytes(31), b"x")
    backend.put(b"\x01\x02" + bytes(30), b"y")
    backend.put(b"\x02" + bytes(31), b"z")
    assert len(list(backend.scan(b"\x01"))) == 2


def test_concurrent_puts_one_winner(world):
    node, owner, _, _, sid, _ = world
    key = sha256(b"race")
    errors = []

    def writer(value):
        try:
            node.owner_put(key, value, sid, ACCESS_PROTECTED, owner)
        except KeyExists:
            errors.append(value)

    threads = [threading.Thread(target=writer, args=(b"v%d" % i,))
               for i in range(8)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert len(errors) == 7
    stored = node.read_as(key, owner)
    assert stored not in errors


# --- TCP transport -----------------------------------------------------------

def test_tcp_round_trip(world):
    node, owner, reader, stranger, sid, _ = world
    server, thread = serve(node)
    host, port = server.server_address[:2]
    try:
        client = StorageClient(host, port)
        key = sha256(b"wire")
        client.put(key, b"over-the-wire", sid, ACCESS_PROTECTED, owner)
        assert client.get(key, reader) == b"over-the-wire"
        with pytest.raises(PermissionDenied):
            client.get(key, stranger)
        with pytest.raises(NotFound):
            client.get(sha256(b"nope"), reader)

        pub = sha256(b"pub")
        client.put(pub, b"open", sid, ACCESS_PUBLIC, owner)
        assert client.get_public(pub) == b"open"
        with pytest.raises(KeyExists):
            client.put(key, b"different", sid, ACCESS_PROTECTED, owner)
    finally:
        server.shutdown()
        thread.join()
