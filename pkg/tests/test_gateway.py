import random

import pytest

from streamvault import keyreg, sharing
from streamvault.chunks import (
    DataRecord,
    StreamMeta,
    chunk_key,
    verify_chain,
)
from streamvault.errors import (
    LateRecord,
    MissingKeyEpoch,
    NotFound,
    PermissionDenied,
)
from streamvault.gateway import (
    FifoCache,
    Gateway,
    MemberKeySource,
    NodeStore,
    OwnerKeySource,
    ServiceReader,
    records_from_csv,
    records_from_jsonl,
    records_to_csv,
    records_to_jsonl,
)
from streamvault.group import toy_group
from streamvault.hashing import ZERO32, sha256
from streamvault.keys import SigningKey
from streamvault.ledger import (
    SimChain,
    derive_stream_id,
    replay,
    tx_grant,
    tx_register,
)
from streamvault.storage import ACCESS_PROTECTED, MemoryBackend, StorageNode

T0 = 1_000_000
DELTA = 1000


class World:
    """One registered stream with a granted service and live storage."""

    def __init__(self, checkpoint_interval=10, cache_capacity=64,
                 with_ledger=True):
        self.owner = SigningKey.from_seed(bytes([0x01]) * 32)
        self.reader = SigningKey.from_seed(bytes([0x02]) * 32)
        self.stranger = SigningKey.from_seed(bytes([0x03]) * 32)
        self.chain = SimChain()
        self.chain.submit(tx_register(self.owner, T0, DELTA,
                                      checkpoint_interval, b"g"))
        self.stream_id = derive_stream_id(self.owner.public_bytes, T0, DELTA,
                                          checkpoint_interval, b"g")
        self.chain.settle()
        self.chain.submit(tx_grant(self.owner, self.stream_id,
                                   self.reader.id))
        self.chain.settle()
        self.state = replay(self.chain.get_blocks())
        self.node = StorageNode(SigningKey.from_seed(bytes([0x0A]) * 32),
                                MemoryBackend(), state=self.state)
        self.keys = keyreg.KeyRegressionChain(sha256(b"gw-seed"),
                                              max_epochs=16)
        self.meta = StreamMeta(self.stream_id, self.owner.id, T0, DELTA,
                               epoch=0,
                               checkpoint_interval=checkpoint_interval)
        self.gateway = Gateway(
            self.meta, self.owner, self.keys, NodeStore(self.node),
            ledger=self.chain if with_ledger else None, state=self.state,
            cache_capacity=cache_capacity)

    def record(self, offset_ms: int, value: bytes = b"v") -> DataRecord:
        return DataRecord(T0 + offset_ms, value)


@pytest.fixture
def world():
    return World()


def test_watermark_seals_past_lateness(world):
    gw = world.gateway
    # lateness = 2 windows; window 0 seals once the watermark reaches t0+3Δ
    sealed = []
    for offset in (0, 500, 1500, 2500):
        sealed += gw.ingest(world.record(offset))
    assert sealed == []
    sealed = gw.ingest(world.record(3000))
    assert [c.header.chunk_index for c in sealed] == [0]
    assert sealed[0].header.record_count == 2
    assert gw.stats.chunks_sealed == 1


def test_out_of_order_within_lateness_accepted(world):
    gw = world.gateway
    gw.ingest(world.record(2500))
    gw.ingest(world.record(1500))  # older than watermark, inside the bound
    assert gw.stats.records_ingested == 2
    chunks = gw.flush()
    assert [c.header.chunk_index for c in chunks] == [1, 2]


def test_record_older_than_lateness_rejected(world):
    gw = world.gateway
    gw.ingest(world.record(5000))
    with pytest.raises(LateRecord):
        gw.ingest(world.record(2999))  # 5000 - 2000 = 3000 is the floor
    gw.ingest(world.record(3000))  # exactly at the floor is accepted
    assert gw.stats.records_rejected == 1


def test_sealed_window_refuses_stragglers(world):
    gw = world.gateway
    gw.ingest(world.record(100))
    gw.flush()
    with pytest.raises(LateRecord):
        gw.ingest(world.record(200))
    assert gw.stats.records_rejected == 1


def test_flush_seals_in_order_and_chains(world):
    gw = world.gateway
    for offset in (2100, 100, 1100, 150):
        gw.ingest(world.record(offset))
    chunks = gw.flush()
    assert [c.header.chunk_index for c in chunks] == [0, 1, 2]
    assert chunks[0].header.prev_chunk_hash == ZERO32
    assert verify_chain(chunks, chunks[-1].digest())
    assert gw.last_sealed == (2, chunks[-1].digest())
    # records inside a chunk are sorted even when ingested out of order
    assert chunks[0].header.record_count == 2


def test_chunks_are_stored_and_cached(world):
    gw = world.gateway
    gw.ingest(world.record(100))
    chunk = gw.flush()[0]
    assert 0 in gw.cache
    raw = world.node.read_as(chunk_key(world.meta, 0), world.owner)
    assert raw == chunk.to_bytes()
    assert gw.stats.storage_puts == 1


def test_fifo_cache_eviction():
    cache = FifoCache(capacity=2)

    class Stub:
        def __init__(self, index):
            self.header = type("H", (), {"chunk_index": index})()

    assert cache.add(Stub(0)) is None
    assert cache.add(Stub(1)) is None
    evicted = cache.add(Stub(2))
    assert evicted.header.chunk_index == 0
    assert 0 not in cache and 1 in cache and 2 in cache
    assert len(cache) == 2
    with pytest.raises(ValueError):
        FifoCache(capacity=0)


def test_cache_capacity_bounds_gateway(world):
    world = World(cache_capacity=3)
    gw = world.gateway
    for window in range(5):
        gw.ingest(world.record(window * DELTA + 1))
    gw.flush()
    plan = gw.plan(T0, T0 + 5 * DELTA)
    assert plan.sources == ("storage", "storage", "cache", "cache", "cache")


def test_checkpoint_cadence():
    world = World(checkpoint_interval=3)
    gw = world.gateway
    for window in range(7):
        gw.ingest(world.record(window * DELTA + 1))
    gw.flush()
    assert gw.stats.anchors_submitted == 2  # after chunks 3 and 6
    assert gw.chunks_since_anchor == 1
    world.chain.settle()
    state = replay(world.chain.get_blocks())
    anchors = state.streams[world.stream_id].anchors
    assert set(anchors) == {2, 5}  # newest chunk index at each checkpoint


def test_anchor_pending_until_ledger_returns():
    world = World(checkpoint_interval=2, with_ledger=False)
    gw = world.gateway
    for window in range(2):
        gw.ingest(world.record(window * DELTA + 1))
    gw.flush()
    assert gw.pending_anchor is not None
    assert gw.stats.anchors_submitted == 0
    gw.ledger = world.chain
    txid = gw.checkpoint_tick()
    assert txid is not None
    assert gw.pending_anchor is None
    assert gw.stats.anchors_submitted == 1


def test_anchor_now_and_idempotence(world):
    gw = world.gateway
    assert gw.anchor_now() is None  # nothing sealed yet
    gw.ingest(world.record(100))
    gw.flush()
    assert gw.anchor_now() is not None
    assert gw.anchor_now() is None  # newest chunk already anchored
    gw.ingest(world.record(1100))
    gw.flush()
    assert gw.anchor_now() is not None


def test_restore_progress_continues_chain(world):
    gw = world.gateway
    gw.ingest(world.record(100))
    first = gw.flush()

    resumed = Gateway(world.meta, world.owner, world.keys,
                      NodeStore(world.node), ledger=world.chain,
                      state=world.state)
    resumed.restore_progress(
        watermark=gw.watermark, prev_hash=gw.prev_hash,
        sealed_indices=[i for i, s in gw.sealed_through.items() if s],
        last_sealed=gw.last_sealed,
        chunks_since_anchor=gw.chunks_since_anchor)
    with pytest.raises(LateRecord):
        resumed.ingest(world.record(100))  # window 0 stays sealed
    resumed.ingest(world.record(1100))
    second = resumed.flush()
    assert verify_chain(first + second, second[-1].digest())


def test_plan_ranges(world):
    gw = world.gateway
    for window in range(3):
        gw.ingest(world.record(window * DELTA + 1))
    gw.flush()
    assert gw.plan(T0, T0).chunk_indices == ()
    assert gw.plan(T0 + 10, T0 + 5).chunk_indices == ()
    assert gw.plan(0, T0).chunk_indices == ()  # entirely before the stream
    assert gw.plan(T0, T0 + 1).chunk_indices == (0,)
    assert gw.plan(T0, T0 + 3 * DELTA).chunk_indices == (0, 1, 2)
    # unsealed / empty windows are not planned
    assert gw.plan(T0 + 5 * DELTA, T0 + 6 * DELTA).chunk_indices == ()


def test_owner_query_filters_range(world):
    gw = world.gateway
    for offset in (100, 200, 1100, 2100):
        gw.ingest(world.record(offset, str(offset).encode()))
    gw.flush()
    got = gw.query(T0 + 150, T0 + 1200, world.owner,
                   OwnerKeySource(world.keys))
    assert [r.timestamp - T0 for r in got] == [200, 1100]
    assert gw.stats.cache_hits == 2


def test_query_storage_path_counts(world):
    world = World(cache_capacity=1)
    gw = world.gateway
    for window in range(3):
        gw.ingest(world.record(window * DELTA + 1))
    gw.flush()
    got = gw.query(T0, T0 + 3 * DELTA, world.owner,
                   OwnerKeySource(world.keys))
    assert len(got) == 3
    assert gw.stats.storage_gets == 2
    assert gw.stats.cache_hits == 1


def test_cache_hit_still_checks_grants(world):
    gw = world.gateway
    gw.ingest(world.record(100))
    gw.flush()
    assert 0 in gw.cache
    with pytest.raises(PermissionDenied):
        gw.query(T0, T0 + DELTA, world.stranger, OwnerKeySource(world.keys))
    # a granted reader passes the same gate (decrypting with owner keys
    # here only to isolate the permission check)
    got = gw.query(T0, T0 + DELTA, world.reader, OwnerKeySource(world.keys))
    assert len(got) == 1


def test_storage_path_propagates_denial(world):
    world = World(cache_capacity=1)
    gw = world.gateway
    gw.ingest(world.record(100))
    gw.ingest(world.record(1100))
    gw.flush()  # chunk 0 falls out of the single-slot cache
    with pytest.raises(PermissionDenied):
        gw.query(T0, T0 + DELTA, world.stranger, OwnerKeySource(world.keys))


def test_set_epoch_forward_only(world):
    gw = world.gateway
    gw.ingest(world.record(100))
    gw.flush()
    gw.set_epoch(2)
    with pytest.raises(ValueError):
        gw.set_epoch(1)
    gw.ingest(world.record(3100))
    chunk = gw.flush()[0]
    assert chunk.header.epoch == 2
    got = gw.query(T0, T0 + 4 * DELTA, world.owner,
                   OwnerKeySource(world.keys))
    assert len(got) == 2


def test_owner_key_source_bounds(world):
    source = OwnerKeySource(world.keys)
    assert source.stream_key(0).epoch == 0
    with pytest.raises(MissingKeyEpoch):
        source.stream_key(17)  # beyond the chain's horizon


def test_member_key_source_bounds():
    chain = keyreg.KeyRegressionChain(sha256(b"mks"), max_epochs=8)
    source = MemberKeySource(chain.state(3), 3)
    assert source.stream_key(3).key == chain.key(3)
    assert source.stream_key(0).key == chain.key(0)
    with pytest.raises(MissingKeyEpoch):
        source.stream_key(4)


def test_service_reader_full_remote_route(world):
    gw = world.gateway
    rng = random.Random(5)
    share = sharing.StreamSharing(world.keys, group=toy_group(), rng=rng)
    member = sharing.ServiceMember(signing=world.reader, group=share.group,
                                   rng=rng)

    def put(key, value):
        world.node.owner_put(key, value, world.stream_id, ACCESS_PROTECTED,
                             world.owner)

    sharing.publish_wrapped(put, world.stream_id, share.bootstrap())
    token = share.grant(member.id, member.public_key)
    sharing.publish_token(put, world.stream_id, 0, member.id, token)

    # window 1 left empty on purpose: the reader must skip it
    for offset in (100, 2100, 2200):
        gw.ingest(world.record(offset, str(offset).encode()))
    gw.flush()

    reader = ServiceReader(member, world.meta, NodeStore(world.node),
                           world.owner.public_bytes)
    got = reader.query(T0, T0 + 3 * DELTA, current_epoch=0)
    assert [r.timestamp - T0 for r in got] == [100, 2100, 2200]

    # an ungranted service is stopped at the storage node
    outsider = sharing.ServiceMember(
        signing=world.stranger, group=share.group, rng=rng)
    outsider_reader = ServiceReader(outsider, world.meta,
                                    NodeStore(world.node),
                                    world.owner.public_bytes)
    with pytest.raises(PermissionDenied):
        outsider_reader.query(T0, T0 + DELTA, current_epoch=0)


def test_service_reader_caches_state_recovery(world):
    gw = world.gateway
    rng = random.Random(6)
    share = sharing.StreamSharing(world.keys, group=toy_group(), rng=rng)
    member = sharing.ServiceMember(signing=world.reader, group=share.group,
                                   rng=rng)

    def put(key, value):
        world.node.owner_put(key, value, world.stream_id, ACCESS_PROTECTED,
                             world.owner)

    sharing.publish_wrapped(put, world.stream_id, share.bootstrap())
    sharing.publish_token(put, world.stream_id, 0, member.id,
                          share.grant(member.id, member.public_key))
    gw.ingest(world.record(100))
    gw.flush()
    reader = ServiceReader(member, world.meta, NodeStore(world.node),
                           world.owner.public_bytes)
    reader.query(T0, T0 + DELTA, current_epoch=0)
    source = reader._sources[0]
    reader.query(T0, T0 + DELTA, current_epoch=0)
    assert reader._sources[0] is source  # recovered once, reused


def test_empty_query_ranges(world):
    gw = world.gateway
    assert gw.query(T0, T0, world.owner, OwnerKeySource(world.keys)) == []
    member_reader = ServiceReader(
        sharing.ServiceMember(signing=world.reader, group=toy_group(),
                              rng=random.Random(1)),
        world.meta, NodeStore(world.node), world.owner.public_bytes)
    assert member_reader.query(T0, T0, current_epoch=0) == []


def test_csv_round_trip():
    records = [DataRecord(1, b"a"), DataRecord(2, b"b,c")]
    text = records_to_csv(records)
    assert text.splitlines()[0] == "timestamp,value"
    assert records_from_csv(text) == records
    assert records_from_csv("") == []


def test_jsonl_round_trip():
    records = [DataRecord(1, b"a"), DataRecord(2, b'say "hi"')]
    text = records_to_jsonl(records)
    assert records_from_jsonl(text) == records
    assert records_from_jsonl("\n\n") == []
