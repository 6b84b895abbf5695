"""Gateway pipeline: ingest records, seal chunks, cache, anchor, query.

The gateway is the owner-side edge component. Records stream in, are
bucketed into fixed Δ windows, and a window is sealed into a chunk once
the watermark (highest timestamp seen) has moved a configurable lateness
bound past its end -- so modestly out-of-order sensor delivery is
tolerated, while anything older than the bound is rejected rather than
silently reordered into history. ``flush`` force-seals everything for
deterministic shutdown.

Sealed chunks are pushed to the storage layer immediately and also kept
in a bounded FIFO cache, so queries over recent data are served without
any storage round trips (the counters prove it). Every
``checkpoint_interval`` chunks, the newest chunk's digest is anchored on
the ledger; the hash chain then pins everything before it, which bounds
the un-anchored suffix to fewer than one interval of chunks.

Queries run under the requester's own credentials: cache hits are gated
by the same folded ledger state a storage node consults, cache misses are
fetched from storage as the requester (so denials propagate), and
decryption uses the requester's key source -- the owner's regression
chain, or the member states a service recovered from published key
material.
"""

from __future__ import annotations

import json
from collections import OrderedDict, deque
from dataclasses import dataclass, field
from typing import Optional, Protocol

from . import keyreg, sharing
from .chunks import (
    DataRecord,
    SealedChunk,
    StreamKey,
    StreamMeta,
    build_chunk,
    chunk_index_for,
    chunk_key,
    open_chunk,
    window_bounds,
)
from .errors import (
    LateRecord,
    MissingKeyEpoch,
    NotFound,
    PermissionDenied,
)
from .hashing import ZERO32
from .keys import SigningKey
from .ledger import AclState, SimChain, tx_anchor
from .storage import ACCESS_PROTECTED, StorageNode

DEFAULT_CACHE_CAPACITY = 64
DEFAULT_LATENESS_WINDOWS = 2


# --- key sources ----------------------------------------------------------------

class KeySource(Protocol):
    def stream_key(self, epoch: int) -> StreamKey: ...


class OwnerKeySource:
    """The owner derives any epoch's key directly from its chain."""

    def __init__(self, chain: keyreg.KeyRegressionChain):
        self.chain = chain

    def stream_key(self, epoch: int) -> StreamKey:
        try:
            return StreamKey(epoch, self.chain.key(epoch))
        except Exception as exc:
            raise MissingKeyEpoch(str(exc)) from exc


class MemberKeySource:
    """A service derives keys at or below the epoch state it recovered."""

    def __init__(self, state: bytes, state_epoch: int):
        self.state = state
        self.state_epoch = state_epoch

    def stream_key(self, epoch: int) -> StreamKey:
        if epoch > self.state_epoch:
            raise MissingKeyEpoch(
                f"held state covers epochs <= {self.state_epoch}, "
                f"chunk needs {epoch}")
        return StreamKey(epoch, keyreg.derive_key(self.state,
                                                  self.state_epoch, epoch))


# --- storage adapters --------------------------------------------------------------

class ChunkStore(Protocol):
    """What the gateway needs from a storage layer."""

    def put(self, key: bytes, value: bytes, stream_id: bytes, access: int,
            writer: SigningKey) -> None: ...

    def read(self, key: bytes, reader: SigningKey) -> bytes: ...


class NodeStore:
    """Adapter over an in-process StorageNode."""

    def __init__(self, node: StorageNode):
        self.node = node

    def put(self, key, value, stream_id, access, writer) -> None:
        self.node.owner_put(key, value, stream_id, access, writer)

    def read(self, key, reader) -> bytes:
        return self.node.read_as(key, reader)


class DhtStore:
    """Adapter over the DHT simulator (duck-typed to avoid a hard import)."""

    def __init__(self, sim, region: Optional[str] = None):
        self.sim = sim
        self.region = region

    def put(self, key, value, stream_id, access, writer) -> None:
        self.sim.put(key, value, stream_id=stream_id, access=access,
                     writer=writer, region=self.region)

    def read(self, key, reader) -> bytes:
        return self.sim.get(key, requester=reader, region=self.region)


# --- cache and query plan ------------------------------------------------------------

class FifoCache:
    """Bounded chunk cache with strict first-in-first-out eviction."""

    def __init__(self, capacity: int = DEFAULT_CACHE_CAPACITY):
        if capacity <= 0:
            raise ValueError("capacity must be positive")
        self.capacity = capacity
        self._chunks: OrderedDict[int, SealedChunk] = OrderedDict()

    def add(self, chunk: SealedChunk) -> Optional[SealedChunk]:
        """Insert; returns the evicted chunk if the cache was full."""
        evicted = None
        if len(self._chunks) >= self.capacity:
            _, evicted = self._chunks.popitem(last=False)
        self._chunks[chunk.header.chunk_index] = chunk
        return evicted

    def get(self, chunk_index: int) -> Optional[SealedChunk]:
        return self._chunks.get(chunk_index)

    def __len__(self) -> int:
        return len(self._chunks)

    def __contains__(self, chunk_index: int) -> bool:
        return chunk_index in self._chunks


@dataclass(frozen=True)
class QueryPlan:
    stream_id: bytes
    t_a: int
    t_b: int
    chunk_indices: tuple[int, ...]
    sources: tuple[str, ...]  # "cache" | "storage", parallel to indices


# --- the gateway -----------------------------------------------------------------------

@dataclass
class GatewayStats:
    records_ingested: int = 0
    records_rejected: int = 0
    chunks_sealed: int = 0
    storage_puts: int = 0
    storage_gets: int = 0
    cache_hits: int = 0
    anchors_submitted: int = 0


class Gateway:
    """Single-writer pipeline for one stream."""

    def __init__(self, meta: StreamMeta, owner: SigningKey,
                 chain_keys: keyreg.KeyRegressionChain, store: ChunkStore,
                 ledger: Optional[SimChain] = None,
                 state: Optional[AclState] = None,
                 cache_capacity: int = DEFAULT_CACHE_CAPACITY,
                 lateness_windows: int = DEFAULT_LATENESS_WINDOWS):
        self.meta = meta
        self.owner = owner
        self.chain_keys = chain_keys
        self.store = store
        self.ledger = ledger
        self.state = state
        self.cache = FifoCache(cache_capacity)
        self.lateness_ms = lateness_windows * meta.delta
        self.watermark: Optional[int] = None
        self.open_windows: dict[int, list[DataRecord]] = {}
        self.sealed_through: dict[int, bool] = {}
        self.prev_hash = ZERO32
        self.last_sealed: Optional[tuple[int, bytes]] = None
        self.chunks_since_anchor = 0
        self.pending_anchor: Optional[tuple[int, bytes]] = None
        self.stats = GatewayStats()

    def restore_progress(self, watermark: Optional[int], prev_hash: bytes,
                         sealed_indices: list[int],
                         last_sealed: Optional[tuple[int, bytes]],
                         chunks_since_anchor: int) -> None:
        """Resume a pipeline persisted by a previous session."""
        self.watermark = watermark
        self.prev_hash = prev_hash
        self.sealed_through = {i: True for i in sealed_indices}
        self.last_sealed = last_sealed
        self.chunks_since_anchor = chunks_since_anchor

    # -- ingestion -------------------------------------------------------------

    def ingest(self, record: DataRecord) -> list[SealedChunk]:
        """Buffer one record; returns any chunks sealed as a consequence."""
        index = chunk_index_for(record.timestamp, self.meta)
        if self.watermark is not None:
            if record.timestamp < self.watermark - self.lateness_ms:
                self.stats.records_rejected += 1
                raise LateRecord(
                    f"timestamp {record.timestamp} older than watermark "
                    f"{self.watermark} minus lateness {self.lateness_ms}")
        if self.sealed_through.get(index):
            self.stats.records_rejected += 1
            raise LateRecord(f"window {index} already sealed")
        self.open_windows.setdefault(index, []).append(record)
        self.stats.records_ingested += 1
        if self.watermark is None or record.timestamp > self.watermark:
            self.watermark = record.timestamp
        return self._seal_due_windows()

    def _seal_due_windows(self) -> list[SealedChunk]:
        sealed = []
        for index in sorted(self.open_windows):
            _, end = window_bounds(self.meta, index)
            if self.watermark is not None and self.watermark - self.lateness_ms >= end:
                sealed.append(self._seal(index))
            else:
                break  # windows are ordered; later ones close even later
        return sealed

    def flush(self) -> list[SealedChunk]:
        """Force-seal every open window (shutdown / end of input)."""
        return [self._seal(index) for index in sorted(self.open_windows)]

    def _seal(self, index: int) -> SealedChunk:
        records = sorted(self.open_windows.pop(index),
                         key=lambda r: r.timestamp)
        stream_key = StreamKey(self.meta.epoch,
                               self.chain_keys.key(self.meta.epoch))
        chunk = build_chunk(self.meta, records, self.prev_hash, stream_key,
                            self.owner)
        self.sealed_through[index] = True
        self.prev_hash = chunk.digest()
        self.last_sealed = (chunk.header.chunk_index, chunk.digest())
        self.store.put(chunk_key(self.meta, index), chunk.to_bytes(),
                       self.meta.stream_id, ACCESS_PROTECTED, self.owner)
        self.stats.storage_puts += 1
        self.cache.add(chunk)
        self.stats.chunks_sealed += 1
        self.chunks_since_anchor += 1
        self.checkpoint_tick()
        return chunk

    def set_epoch(self, epoch: int) -> None:
        """Adopt a new key epoch for all subsequently sealed chunks."""
        if epoch < self.meta.epoch:
            raise ValueError("epoch may only advance")
        self.meta.epoch = epoch

    # -- anchoring ---------------------------------------------------------------

    def checkpoint_tick(self) -> Optional[bytes]:
        """Submit an anchor when due (or when one is pending retry).

        Returns the txid when a transaction was submitted.
        """
        if self.chunks_since_anchor >= self.meta.checkpoint_interval \
                and self.last_sealed is not None:
            self.pending_anchor = self.last_sealed
            self.chunks_since_anchor = 0
        if self.pending_anchor is None:
            return None
        if self.ledger is None:
            return None  # stays pending; retried on the next tick
        index, digest = self.pending_anchor
        tx = tx_anchor(self.owner, self.meta.stream_id, index, digest)
        txid = self.ledger.submit(tx)
        self.pending_anchor = None
        self.stats.anchors_submitted += 1
        return txid

    def anchor_now(self) -> Optional[bytes]:
        """Anchor the newest chunk immediately (e.g. before shutdown)."""
        if self.last_sealed is None:
            return None
        if self.chunks_since_anchor == 0 and self.pending_anchor is None:
            return None  # newest chunk is already anchored
        self.pending_anchor = self.last_sealed
        self.chunks_since_anchor = 0
        return self.checkpoint_tick()

    # -- queries -------------------------------------------------------------------

    def plan(self, t_a: int, t_b: int) -> QueryPlan:
        """Resolve a half-open time range to chunk indices and sources."""
        if t_b <= t_a or t_b <= self.meta.t0:
            return QueryPlan(self.meta.stream_id, t_a, t_b, (), ())
        first = chunk_index_for(max(t_a, self.meta.t0), self.meta)
        last = chunk_index_for(t_b - 1, self.meta)
        indices, sources = [], []
        for index in range(first, last + 1):
            if self.sealed_through.get(index):
                indices.append(index)
                sources.append("cache" if index in self.cache else "storage")
        return QueryPlan(self.meta.stream_id, t_a, t_b, tuple(indices),
                         tuple(sources))

    def _permitted(self, requester_id: bytes) -> bool:
        if requester_id == self.meta.owner_id:
            return True
        if self.state is None:
            return False
        return self.state.is_granted(self.meta.stream_id, requester_id,
                                     self.watermark or 0)

    def query(self, t_a: int, t_b: int, reader: SigningKey,
              key_source: KeySource) -> list[DataRecord]:
        """Records in [t_a, t_b), fetched and decrypted as the requester."""
        plan = self.plan(t_a, t_b)
        records: list[DataRecord] = []
        for index, source in zip(plan.chunk_indices, plan.sources):
            if source == "cache":
                if not self._permitted(reader.id):
                    raise PermissionDenied(
                        "requester holds no active grant (cache read)")
                chunk = self.cache.get(index)
                self.stats.cache_hits += 1
            else:
                raw = self.store.read(chunk_key(self.meta, index), reader)
                self.stats.storage_gets += 1
                chunk = SealedChunk.from_bytes(raw)
            stream_key = key_source.stream_key(chunk.header.epoch)
            for record in open_chunk(chunk, stream_key,
                                     self.owner.public_bytes):
                if t_a <= record.timestamp < t_b:
                    records.append(record)
        return records


class ServiceReader:
    """Service-side query path: storage fetch plus key-material recovery.

    This is the fully remote route -- no gateway involvement: the service
    reads chunks under its own identity and turns published key material
    into epoch keys via its re-encryption token.
    """

    def __init__(self, member: sharing.ServiceMember, meta: StreamMeta,
                 store: ChunkStore, owner_pub: bytes):
        self.member = member
        self.meta = meta
        self.store = store
        self.owner_pub = owner_pub
        self._sources: dict[int, MemberKeySource] = {}

    def key_source_for(self, epoch: int) -> MemberKeySource:
        """Recover (and cache) the member state for one epoch."""
        if epoch not in self._sources:
            state = sharing.recover_state(
                lambda key: self.store.read(key, self.member.signing),
                self.member, self.meta.stream_id, epoch)
            self._sources[epoch] = MemberKeySource(state, epoch)
        return self._sources[epoch]

    def query(self, t_a: int, t_b: int, current_epoch: int) -> list[DataRecord]:
        """Records in [t_a, t_b); ``current_epoch`` comes from the ledger.

        One state recovery at the current epoch covers every older chunk
        by unwinding; chunks from windows that emitted nothing are skipped.
        """
        if t_b <= t_a or t_b <= self.meta.t0:
            return []
        first = chunk_index_for(max(t_a, self.meta.t0), self.meta)
        last = chunk_index_for(t_b - 1, self.meta)
        records: list[DataRecord] = []
        for index in range(first, last + 1):
            try:
                raw = self.store.read(chunk_key(self.meta, index),
                                      self.member.signing)
            except NotFound:
                continue  # empty window: no chunk was emitted
            chunk = SealedChunk.from_bytes(raw)
            source = self.key_source_for(current_epoch)
            stream_key = source.stream_key(chunk.header.epoch)
            for record in open_chunk(chunk, stream_key, self.owner_pub):
                if t_a <= record.timestamp < t_b:
                    records.append(record)
        return records


# --- record text formats -----------------------------------------------------------

def records_from_csv(text: str) -> list[DataRecord]:
    """Parse ``timestamp,value`` lines (an optional header is skipped)."""
    records = []
    for line in text.splitlines():
        line = line.strip()
        if not line or line.lower().startswith("timestamp"):
            continue
        ts_part, value_part = line.split(",", 1)
        records.append(DataRecord(int(ts_part), value_part.encode()))
    return records


def records_to_csv(records: list[DataRecord]) -> str:
    lines = ["timestamp,value"]
    lines += [f"{r.timestamp},{r.value.decode(errors='replace')}"
              for r in records]
    return "\n".join(lines) + "\n"


def records_from_jsonl(text: str) -> list[DataRecord]:
    """Parse newline-delimited ``{"timestamp": ..., "value": ...}`` objects."""
    records = []
    for line in text.splitlines():
        if not line.strip():
            continue
        obj = json.loads(line)
        records.append(DataRecord(int(obj["timestamp"]),
                                  str(obj["value"]).encode()))
    return records


def records_to_jsonl(records: list[DataRecord]) -> str:
    return "\n".join(
        json.dumps({"timestamp": r.timestamp,
                    "value": r.value.decode(errors="replace")})
        for r in records) + "\n"
