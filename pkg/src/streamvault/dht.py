"""In-process DHT simulator: 160-bit XOR routing with locality caching.

The overlay is Kademlia-shaped: every node owns a 160-bit identifier (the
truncated digest of its storage identity), keeps k-buckets of peers grouped
by XOR-distance prefix, and resolves keys by iterative lookup -- each round
queries the ``alpha`` closest unqueried candidates in parallel and merges
the contacts they return, until the closest candidate set is fully queried.
Values are placed on the ``replicas`` XOR-closest live nodes.

Every simulated node carries a full StorageNode, and all value traffic
goes through the storage wire protocol byte-for-byte via an in-process
transport, so permission enforcement sits exactly where it would on a
network. Routing itself is permission-agnostic.

Locality ("sloppy" caching): after a get that was served from another
region, the value is cached, with a TTL, on a lookup-path node inside the
requester's region. Later gets from that region short-circuit at the
cached copy, cutting both hops and latency. A requester co-located with
the serving replica places no extra copy. Cached protected values apply
the same ledger gate as the primary replicas.

Time is virtual: a pluggable latency model assigns per-message costs from
a symmetric region matrix, a round of parallel RPCs costs its slowest
message, and the simulator clock advances by each operation's total.
Given a seed, node identities, placements, traces, and latencies are fully
reproducible.

The simulation config round-trips through JSON (see DhtConfig) and traces
export as CSV rows of (time_ms, node, action, key, latency_ms).
"""

from __future__ import annotations

import heapq
import json
import random
from dataclasses import dataclass, field
from typing import Iterator, Optional

from . import keys
from .errors import NotFound, PartitionedOverlay, PermissionDenied
from .hashing import ZERO32, sha256
from .ledger import AclState
from .storage import (
    ACCESS_PROTECTED,
    ACCESS_PUBLIC,
    ST_DENIED,
    ST_EXISTS,
    ST_OK,
    VERB_CHALLENGE,
    VERB_GET,
    VERB_GET_PUBLIC,
    VERB_PUT,
    Challenge,
    StorageNode,
    handle_frame,
    put_message,
    read_request_message,
)

ID_BITS = 160
ID_BYTES = 20
DEFAULT_K = 20
DEFAULT_ALPHA = 3
DEFAULT_REPLICAS = 3
DEFAULT_CACHE_TTL_MS = 600_000

DEFAULT_REGIONS = ("eu", "us", "asia")
DEFAULT_REGION_PAIRS = {
    ("asia", "eu"): 120.0,
    ("eu", "us"): 80.0,
    ("asia", "us"): 100.0,
}


def key_to_id(key: bytes) -> int:
    """Map a 32-byte storage key into the 160-bit routing space."""
    return int.from_bytes(key[:ID_BYTES], "big")


@dataclass
class LatencyModel:
    """Symmetric per-message latency (ms) between regions."""
    intra_ms: float = 10.0
    default_inter_ms: float = 100.0
    pairs: dict[tuple[str, str], float] = field(default_factory=dict)

    def latency(self, a: str, b: str) -> float:
        if a == b:
            return self.intra_ms
        return self.pairs.get((min(a, b), max(a, b)), self.default_inter_ms)


def default_latency_model() -> LatencyModel:
    return LatencyModel(pairs=dict(DEFAULT_REGION_PAIRS))


@dataclass
class DhtConfig:
    """Complete simulation configuration; together with the seed it fixes
    a run bit-for-bit.

    The JSON form mirrors the fields; ``latency_pairs`` is a list of
    ``[region_a, region_b, ms]`` triples (order-insensitive).
    """
    node_count: int = 100
    seed: int = 0
    k: int = DEFAULT_K
    alpha: int = DEFAULT_ALPHA
    replicas: int = DEFAULT_REPLICAS
    cache_ttl_ms: int = DEFAULT_CACHE_TTL_MS
    sloppy_caching: bool = True
    regions: tuple[str, ...] = DEFAULT_REGIONS
    intra_ms: float = 10.0
    default_inter_ms: float = 100.0
    latency_pairs: dict[tuple[str, str], float] = field(
        default_factory=lambda: dict(DEFAULT_REGION_PAIRS))

    def latency_model(self) -> LatencyModel:
        return LatencyModel(self.intra_ms, self.default_inter_ms,
                            dict(self.latency_pairs))

    def to_json(self) -> str:
        data = {
            "node_count": self.node_count, "seed": self.seed, "k": self.k,
            "alpha": self.alpha, "replicas": self.replicas,
            "cache_ttl_ms": self.cache_ttl_ms,
            "sloppy_caching": self.sloppy_caching,
            "regions": list(self.regions), "intra_ms": self.intra_ms,
            "default_inter_ms": self.default_inter_ms,
            "latency_pairs": [[a, b, ms] for (a, b), ms
                              in sorted(self.latency_pairs.items())],
        }
        return json.dumps(data, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "DhtConfig":
        data = json.loads(text)
        pairs = {(min(a, b), max(a, b)): float(ms)
                 for a, b, ms in data.pop("latency_pairs", [])}
        data["regions"] = tuple(data.get("regions", DEFAULT_REGIONS))
        return cls(**{**data, "latency_pairs": pairs})


@dataclass(frozen=True)
class TraceEvent:
    time_ms: float
    node: str
    action: str
    key: str
    latency_ms: float

    def csv_row(self) -> str:
        return (f"{self.time_ms:.1f},{self.node},{self.action},"
                f"{self.key},{self.latency_ms:.1f}")


TRACE_HEADER = "time_ms,node,action,key,latency_ms"


def trace_csv(events: list[TraceEvent]) -> str:
    return "\n".join([TRACE_HEADER] + [e.csv_row() for e in events]) + "\n"


class RoutingTable:
    """k-buckets keyed by the XOR-distance prefix shared with the owner."""

    def __init__(self, owner: int, k: int):
        self.owner = owner
        self.k = k
        self.buckets: dict[int, list[int]] = {}

    def _bucket_of(self, peer: int) -> int:
        return (self.owner ^ peer).bit_length() - 1

    def insert(self, peer: int, is_alive=None) -> None:
        if peer == self.owner:
            return
        bucket = self.buckets.setdefault(self._bucket_of(peer), [])
        if peer in bucket:
            bucket.remove(peer)
            bucket.append(peer)
            return
        if len(bucket) < self.k:
            bucket.append(peer)
            return
        # Full bucket: evict the least-recently-seen contact only if it is
        # known dead; otherwise prefer the established contact.
        if is_alive is not None and not is_alive(bucket[0]):
            bucket.pop(0)
            bucket.append(peer)

    def remove(self, peer: int) -> None:
        bucket = self.buckets.get(self._bucket_of(peer))
        if bucket and peer in bucket:
            bucket.remove(peer)

    def contacts(self) -> list[int]:
        return [p for bucket in self.buckets.values() for p in bucket]

    def closest(self, target: int, n: int) -> list[int]:
        return heapq.nsmallest(n, self.contacts(), key=lambda p: p ^ target)

    def __len__(self) -> int:
        return sum(len(b) for b in self.buckets.values())


@dataclass
class CacheEntry:
    value: bytes
    stream_id: bytes
    access: int
    expires_at: float


class DhtNode:
    """One overlay member: routing id, region, and its storage node."""

    def __init__(self, signing_key: keys.SigningKey, region: str, k: int,
                 state: Optional[AclState], clock, nonce_source):
        self.storage = StorageNode(signing_key, state=state, clock=clock,
                                   nonce_source=nonce_source)
        self.node_id = key_to_id(self.storage.node_id)
        self.region = region
        self.table = RoutingTable(self.node_id, k)
        self.alive = True
        self.cache: dict[bytes, CacheEntry] = {}
        self.put_frames: dict[bytes, bytes] = {}

    @property
    def short_id(self) -> str:
        return f"{self.node_id:040x}"[:12]


@dataclass
class OpResult:
    """Outcome of one put/get: payload plus simulated cost and provenance."""
    value: Optional[bytes]
    hops: int
    latency_ms: float
    replicas: list[int] = field(default_factory=list)
    served_by: Optional[int] = None
    from_cache: bool = False
    found: bool = True


class DhtSimulator:
    """Deterministic single-threaded overlay simulation."""

    def __init__(self, config: Optional[DhtConfig] = None,
                 state: Optional[AclState] = None):
        self.config = config or DhtConfig()
        self.state = state
        self.rng = random.Random(self.config.seed)
        self.latency = self.config.latency_model()
        self.k = self.config.k
        self.alpha = self.config.alpha
        self.replicas = self.config.replicas
        self.sloppy_caching = self.config.sloppy_caching
        self.nodes: dict[int, DhtNode] = {}
        self.now = 0.0
        self.trace: list[TraceEvent] = []
        self.default_writer = keys.SigningKey.from_seed(
            sha256(b"dht-writer" + self.config.seed.to_bytes(8, "big")))

    # -- overlay membership --------------------------------------------------

    def spawn_network(self, n: Optional[int] = None) -> None:
        for _ in range(n if n is not None else self.config.node_count):
            self.spawn_node()

    def spawn_node(self, region: Optional[str] = None) -> DhtNode:
        signing_key = keys.SigningKey.from_seed(self.rng.randbytes(32))
        node = DhtNode(
            signing_key,
            region or self.rng.choice(list(self.config.regions)),
            self.k, self.state,
            clock=lambda: int(self.now),
            nonce_source=lambda: self.rng.randbytes(32),
        )
        self.join(node)
        return node

    def join(self, node: DhtNode) -> None:
        """Insert a node and converge its neighborhood via self-lookup."""
        bootstrap = next((n for n in self.nodes.values() if n.alive), None)
        self.nodes[node.node_id] = node
        if bootstrap is not None:
            node.table.insert(bootstrap.node_id)
            bootstrap.table.insert(node.node_id, self._is_alive)
            self._lookup(node, node.node_id, finish=self.k)
            self._refresh_buckets(node)

    def _refresh_buckets(self, node: DhtNode) -> None:
        """Fill the node's wide distance buckets with live contacts.

        A join's self-lookup only teaches a node its own neighborhood.
        Without one lookup per coarse distance scale, whole swaths of
        the id space stay invisible to entire clusters of the overlay
        (buckets freeze on their earliest contacts), and iterative
        lookups can then stall short of the true closest nodes.  Only
        scales the current population can occupy are worth refreshing.
        """
        scales = min(ID_BITS, (len(self.nodes) - 1).bit_length() + 1)
        for bit in range(ID_BITS - 1, ID_BITS - 1 - scales, -1):
            base = ((node.node_id ^ (1 << bit)) >> bit) << bit
            target = base | (self.rng.getrandbits(bit) if bit else 0)
            self._lookup(node, target, finish=self.k)

    def leave(self, node_id: int, graceful: bool = True) -> None:
        """Take a node offline; a graceful leave re-replicates its keys."""
        node = self.nodes[node_id]
        if graceful:
            for key, frame in list(node.put_frames.items()):
                self._replicate_from(node, key, frame, exclude={node_id})
        node.alive = False

    def crash(self, node_id: int) -> None:
        self.nodes[node_id].alive = False

    def revive(self, node_id: int) -> None:
        self.nodes[node_id].alive = True

    def _is_alive(self, node_id: int) -> bool:
        node = self.nodes.get(node_id)
        return node is not None and node.alive

    def live_nodes(self) -> list[DhtNode]:
        return [n for n in self.nodes.values() if n.alive]

    def advance(self, ms: float) -> None:
        self.now += ms

    # -- bookkeeping -----------------------------------------------------------

    def _emit(self, node: DhtNode, action: str, key: bytes,
              latency: float) -> None:
        self.trace.append(TraceEvent(self.now, node.short_id, action,
                                     key.hex()[:12], latency))

    def _rpc_latency(self, a: DhtNode, b: DhtNode) -> float:
        if a.node_id == b.node_id:
            return 0.0
        return 2.0 * self.latency.latency(a.region, b.region)

    def _access_point(self, region: Optional[str]) -> DhtNode:
        live = self.live_nodes()
        if not live:
            raise PartitionedOverlay("no live nodes in overlay")
        if region is not None:
            local = [n for n in live if n.region == region]
            if local:
                return min(local, key=lambda n: n.node_id)
        return min(live, key=lambda n: n.node_id)

    # -- iterative lookup --------------------------------------------------------

    def _lookup(self, source: DhtNode, target: int,
                finish: int) -> tuple[list[int], int, float, list[int]]:
        """Iterative node lookup toward ``target`` from ``source``.

        Rounds query the ``alpha`` closest unqueried candidates in
        parallel; the loop ends when the ``finish`` closest known
        candidates have all been queried. Returns (closest live
        responders, rounds, latency_ms, queried path in order). The source
        counts as a zero-cost responder.
        """
        known: set[int] = {source.node_id}
        known.update(source.table.closest(target, self.k))
        queried: set[int] = {source.node_id}
        responded: set[int] = {source.node_id}
        dead: set[int] = set()
        path: list[int] = []
        rounds = 0
        total_latency = 0.0

        while True:
            ranked = sorted(known - dead, key=lambda c: c ^ target)
            batch = [c for c in ranked[:finish] if c not in queried][:self.alpha]
            if not batch:
                break
            rounds += 1
            round_latency = 0.0
            for cid in batch:
                queried.add(cid)
                path.append(cid)
                peer = self.nodes.get(cid)
                if peer is None:
                    dead.add(cid)
                    source.table.remove(cid)
                    continue
                round_latency = max(round_latency,
                                    self._rpc_latency(source, peer))
                if not peer.alive:
                    dead.add(cid)
                    source.table.remove(cid)
                    continue
                responded.add(cid)
                source.table.insert(cid, self._is_alive)
                peer.table.insert(source.node_id, self._is_alive)
                known.update(peer.table.closest(target, self.k))
            total_latency += round_latency
        closest = sorted((c for c in responded if self._is_alive(c)),
                         key=lambda c: c ^ target)[:finish]
        return closest, rounds, total_latency, path

    # -- put ----------------------------------------------------------------------

    def put(self, key: bytes, value: bytes, stream_id: bytes = ZERO32,
            access: int = ACCESS_PUBLIC,
            writer: Optional[keys.SigningKey] = None,
            region: Optional[str] = None) -> OpResult:
        """Place a value on the ``replicas`` XOR-closest live nodes.

        The put travels as one signed storage-protocol frame, replayed
        verbatim to each replica (and later for re-replication).
        """
        writer = writer or self.default_writer
        signature = writer.sign(put_message(key, stream_id, access, value))
        frame = (bytes([VERB_PUT]) + key + stream_id + bytes([access])
                 + writer.public_bytes + signature + value)
        source = self._access_point(region)
        # A full-width lookup (finish=k), then store on the r closest: a
        # narrow lookup can settle before the true closest nodes surface.
        closest, rounds, latency, _ = self._lookup(source, key_to_id(key),
                                                   finish=self.k)
        closest = closest[:self.replicas]
        if not closest:
            raise PartitionedOverlay("lookup found no live nodes")
        stored = []
        burst_latency = 0.0
        for cid in closest:
            peer = self.nodes[cid]
            status = handle_frame(peer.storage, frame)[0]
            burst_latency = max(burst_latency, self._rpc_latency(source, peer))
            if status in (ST_OK, ST_EXISTS):
                peer.put_frames[key] = frame
                stored.append(cid)
        latency += burst_latency
        self.now += latency
        self._emit(source, "put", key, latency)
        return OpResult(value, rounds, latency, replicas=stored)

    def _replicate_from(self, holder: DhtNode, key: bytes, frame: bytes,
                        exclude: set[int] = frozenset()) -> None:
        closest, _, _, _ = self._lookup(holder, key_to_id(key),
                                        finish=self.k)
        placed = 0
        for cid in closest:
            if cid in exclude:
                continue
            if placed >= self.replicas:
                break
            peer = self.nodes[cid]
            status = handle_frame(peer.storage, frame)[0]
            if status in (ST_OK, ST_EXISTS):
                peer.put_frames[key] = frame
                placed += 1

    def repair(self) -> int:
        """Re-replicate every key surviving on some live node; returns the
        number of keys examined."""
        holders: dict[bytes, DhtNode] = {}
        for node in self.live_nodes():
            for key in node.put_frames:
                holders.setdefault(key, node)
        for key, node in holders.items():
            self._replicate_from(node, key, node.put_frames[key])
        return len(holders)

    # -- get ----------------------------------------------------------------------

    def _cache_probe(self, node: DhtNode, key: bytes,
                     requester: Optional[keys.SigningKey]) -> Optional[bytes]:
        entry = node.cache.get(key)
        if entry is None:
            return None
        if entry.expires_at <= self.now:
            del node.cache[key]
            return None
        if entry.access == ACCESS_PUBLIC:
            return entry.value
        if requester is None:
            raise PermissionDenied("protected value requires a requester key")
        state = node.storage.state
        if state is None or not state.is_granted(entry.stream_id,
                                                 requester.id,
                                                 int(self.now)):
            raise PermissionDenied("no active grant for cached value")
        return entry.value

    def _fetch(self, source: DhtNode, peer: DhtNode, key: bytes,
               requester: Optional[keys.SigningKey]) -> tuple[bytes, float]:
        """Retrieve a stored value over the wire protocol; returns
        (value, extra latency beyond the discovery RPC)."""
        _, access = peer.storage.meta_for(key) or (ZERO32, ACCESS_PUBLIC)
        if access == ACCESS_PUBLIC:
            resp = handle_frame(peer.storage, bytes([VERB_GET_PUBLIC]) + key)
            if resp[0] != ST_OK:
                raise NotFound(key.hex())
            return resp[1:], 0.0
        if requester is None:
            raise PermissionDenied("protected value requires a requester key")
        chal_resp = handle_frame(peer.storage, bytes([VERB_CHALLENGE]))
        challenge = Challenge.from_bytes(chal_resp[1:])
        sig = requester.sign(read_request_message(challenge, key))
        resp = handle_frame(peer.storage, bytes([VERB_GET]) + key
                            + requester.public_bytes + challenge.nonce + sig)
        if resp[0] == ST_DENIED:
            raise PermissionDenied(resp[1:].decode(errors="replace"))
        if resp[0] != ST_OK:
            raise NotFound(key.hex())
        return resp[1:], 2.0 * self._rpc_latency(source, peer)

    def get_traced(self, key: bytes,
                   requester: Optional[keys.SigningKey] = None,
                   region: Optional[str] = None) -> OpResult:
        """Iterative value lookup; never raises NotFound (check .found)."""
        source = self._access_point(region)
        requester_region = region if region is not None else source.region
        target = key_to_id(key)

        # Zero-cost local probe at the access point.
        local = self._try_serve(source, source, key, requester)
        if local is not None:
            value, extra, cached = local
            self.now += extra
            self._emit(source, "get-local", key, extra)
            return OpResult(value, 0, extra, served_by=source.node_id,
                            from_cache=cached)

        known: set[int] = {source.node_id}
        known.update(source.table.closest(target, self.k))
        queried: set[int] = {source.node_id}
        dead: set[int] = set()
        path: list[int] = [source.node_id]
        rounds = 0
        total_latency = 0.0
        hit: Optional[tuple[DhtNode, bytes, bool]] = None

        while hit is None:
            ranked = sorted(known - dead, key=lambda c: c ^ target)
            batch = [c for c in ranked[:self.k]
                     if c not in queried][:self.alpha]
            if not batch:
                break
            rounds += 1
            round_latency = 0.0
            for cid in batch:
                queried.add(cid)
                path.append(cid)
                peer = self.nodes.get(cid)
                if peer is None:
                    dead.add(cid)
                    source.table.remove(cid)
                    continue
                round_latency = max(round_latency,
                                    self._rpc_latency(source, peer))
                if not peer.alive:
                    dead.add(cid)
                    source.table.remove(cid)
                    continue
                source.table.insert(cid, self._is_alive)
                peer.table.insert(source.node_id, self._is_alive)
                if hit is None:
                    served = self._try_serve(source, peer, key, requester)
                    if served is not None:
                        value, extra, cached = served
                        round_latency = max(round_latency,
                                            self._rpc_latency(source, peer)
                                            + extra)
                        hit = (peer, value, cached)
                        continue
                known.update(peer.table.closest(target, self.k))
            total_latency += round_latency

        self.now += total_latency
        if hit is None:
            self._emit(source, "get-miss", key, total_latency)
            return OpResult(None, rounds, total_latency, found=False)

        server, value, cached = hit
        self._emit(source, "get-cached" if cached else "get", key,
                   total_latency)
        if self.sloppy_caching and not cached:
            self._place_cache(source, server, key, value, path,
                              requester_region)
        return OpResult(value, rounds, total_latency,
                        served_by=server.node_id, from_cache=cached)

    def _try_serve(self, source: DhtNode, peer: DhtNode, key: bytes,
                   requester) -> Optional[tuple[bytes, float, bool]]:
        cached = self._cache_probe(peer, key, requester)
        if cached is not None:
            return cached, 0.0, True
        if peer.storage.backend.has(key):
            value, extra = self._fetch(source, peer, key, requester)
            return value, extra, False
        return None

    def _place_cache(self, source: DhtNode, server: DhtNode, key: bytes,
                     value: bytes, path: list[int],
                     requester_region: str) -> None:
        """Leave a copy on the first path node in the requester's region.

        That is the node a repeat lookup from the same region reaches
        first (usually its access point), so the copy short-circuits the
        cross-region trip. Values already served from the requester's
        region gain nothing and are not cached.
        """
        if server.region == requester_region:
            return
        stream_id, access = server.storage.meta_for(key) or (
            ZERO32, ACCESS_PUBLIC)
        candidates = [self.nodes[cid] for cid in path
                      if self._is_alive(cid) and cid != server.node_id
                      and self.nodes[cid].region == requester_region]
        if not candidates:
            return
        node = candidates[0]
        node.cache[key] = CacheEntry(value, stream_id, access,
                                     self.now + self.config.cache_ttl_ms)
        self._emit(node, "cache-place", key, 0.0)

    def get(self, key: bytes, requester: Optional[keys.SigningKey] = None,
            region: Optional[str] = None) -> bytes:
        result = self.get_traced(key, requester, region)
        if not result.found:
            raise NotFound(key.hex())
        return result.value

    # -- diagnostics -----------------------------------------------------------

    def load_histogram(self) -> dict[int, int]:
        """Keys held per live node (primary replicas only, not caches)."""
        return {node.node_id: len(node.put_frames)
                for node in self.live_nodes()}

    def closest_live_oracle(self, key: bytes) -> list[int]:
        """Brute-force XOR-closest live node ids for a key (reference)."""
        target = key_to_id(key)
        return sorted((n.node_id for n in self.live_nodes()),
                      key=lambda nid: nid ^ target)[:self.replicas]


class DhtBackend:
    """Key-value backend adapter that stores through a DHT simulator.

    Values written through this adapter are public at the routing layer
    (they are expected to be ciphertext); enforcement-bearing deployments
    put through the simulator directly with a stream id and access class.
    """

    def __init__(self, sim: DhtSimulator,
                 writer: Optional[keys.SigningKey] = None):
        self.sim = sim
        self.writer = writer or sim.default_writer
        self._keys: set[bytes] = set()

    def put(self, key: bytes, value: bytes) -> None:
        self.sim.put(key, value, writer=self.writer)
        self._keys.add(key)

    def get(self, key: bytes) -> Optional[bytes]:
        result = self.sim.get_traced(key)
        return result.value if result.found else None

    def has(self, key: bytes) -> bool:
        return self.get(key) is not None

    def keys(self) -> Iterator[bytes]:
        return iter(sorted(self._keys))

    def scan(self, prefix: bytes) -> Iterator[bytes]:
        return (k for k in self.keys() if k.startswith(prefix))
