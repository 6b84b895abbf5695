"""Reproducible experiment harness emitting CSV benchmark reports.

Two studies ship with the package:

* ``bench_compression`` -- compression ratio as a function of chunk size
  (records per chunk) against the whole-dataset ratio as the upper
  reference point;
* ``bench_access_overhead`` -- GET throughput with the ledger permission
  check on vs off (both arms fully authenticated; the toggle isolates the
  ACL consult against a local state snapshot), plus simulated DHT get
  latency against the local backend, with and without locality caching.

Every report row carries a ``deterministic`` flag: flagged rows are pure
functions of the seed and reproduce bit-identically; unflagged rows are
wall-clock measurements and vary run to run.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

from . import synth
from .chunks import DataRecord, compress, encode_records
from .dht import DhtConfig, DhtSimulator
from .hashing import be64, sha256
from .keys import SigningKey
from .ledger import AclState, SimChain, tx_grant, tx_register
from .storage import ACCESS_PROTECTED, MemoryBackend, StorageNode

DEFAULT_CHUNK_SIZES = (64, 128, 256, 512, 1024, 2048, 4096, 8192)


@dataclass(frozen=True)
class BenchRow:
    metric: str
    value: float
    deterministic: bool

    def csv_row(self, experiment: str, seed: int, config_digest: str) -> str:
        return (f"{experiment},{seed},{config_digest},{self.metric},"
                f"{self.value:.6g},{int(self.deterministic)}")


@dataclass
class BenchReport:
    experiment: str
    seed: int
    config_digest: str
    rows: list[BenchRow] = field(default_factory=list)

    def add(self, metric: str, value: float, deterministic: bool) -> None:
        self.rows.append(BenchRow(metric, float(value), deterministic))

    def value(self, metric: str) -> float:
        for row in self.rows:
            if row.metric == metric:
                return row.value
        raise KeyError(metric)

    def deterministic_rows(self) -> list[BenchRow]:
        return [r for r in self.rows if r.deterministic]

    def to_csv(self) -> str:
        header = "experiment,seed,config_digest,metric,value,deterministic"
        lines = [header] + [r.csv_row(self.experiment, self.seed,
                                      self.config_digest)
                            for r in self.rows]
        return "\n".join(lines) + "\n"


def _config_digest(*parts: bytes) -> str:
    return sha256(b"|".join(parts)).hex()[:12]


# --- compression study -----------------------------------------------------------

def compression_ratio(records: list[DataRecord]) -> float:
    block = encode_records(records)
    return len(block) / len(compress(block))


def bench_compression(records: list[DataRecord] | None = None,
                      chunk_sizes: tuple[int, ...] = DEFAULT_CHUNK_SIZES,
                      seed: int = 0,
                      dataset_size: int = 86_400) -> BenchReport:
    """Per-chunk-size compression ratio plus the whole-dataset reference.

    Chunk size is measured in records per chunk; each size's ratio is
    total raw bytes over total compressed bytes across all of its chunks.
    The whole-dataset ratio (one chunk containing everything) is the
    natural ceiling the chunked ratios approach.
    """
    if records is None:
        records = synth.generate_records(count=dataset_size, seed=seed)
    digest = _config_digest(be64(seed), be64(len(records)),
                            repr(chunk_sizes).encode())
    report = BenchReport("compression", seed, digest)
    whole = compression_ratio(records)
    report.add("ratio_whole_dataset", whole, True)
    for size in chunk_sizes:
        raw = packed = 0
        for start in range(0, len(records), size):
            block = encode_records(records[start:start + size])
            raw += len(block)
            packed += len(compress(block))
        report.add(f"ratio_chunk_{size}", raw / packed, True)
    return report


# --- access overhead study ---------------------------------------------------------

def _throughput(node: StorageNode, reader: SigningKey, keys_list: list[bytes],
                n_gets: int) -> float:
    start = time.perf_counter()
    for i in range(n_gets):
        node.read_as(keys_list[i % len(keys_list)], reader)
    return n_gets / (time.perf_counter() - start)


def bench_access_overhead(seed: int = 0, n_chunks: int = 1000,
                          n_gets: int = 10_000, dht_nodes: int = 1000,
                          dht_gets: int = 300,
                          value_size: int = 1024) -> BenchReport:
    """Cost of enforcement and of distribution, on one fixed workload.

    Local arms measure wall-clock GET throughput through the full
    challenge-response path, toggling only the ledger consult. DHT arms
    report simulated mean latency over the same key population, with
    locality caching off and on (repeat gets from one region).
    """
    digest = _config_digest(be64(seed), be64(n_chunks), be64(n_gets),
                            be64(dht_nodes), be64(dht_gets))
    report = BenchReport("access_overhead", seed, digest)

    # One registered stream with one granted reader, folded into a state
    # snapshot shared by every node in the study.
    owner = SigningKey.from_seed(sha256(b"bench-owner" + be64(seed)))
    reader = SigningKey.from_seed(sha256(b"bench-reader" + be64(seed)))
    chain = SimChain(block_interval_ms=1000, confirmations=1)
    register = tx_register(owner, t0=0, delta=3_600_000, label=b"bench")
    stream_id = register.payload[:32]
    chain.submit(register)
    chain.submit(tx_grant(owner, stream_id, reader.id))
    state = AclState()
    chain.settle()
    state.apply_blocks(chain.get_blocks())

    payload = sha256(be64(seed)) * (value_size // 32)
    chunk_keys = [sha256(b"bench-chunk" + be64(i)) for i in range(n_chunks)]

    def build_node(ledger_check: bool) -> StorageNode:
        node = StorageNode(SigningKey.from_seed(sha256(b"bench-node")),
                           backend=MemoryBackend(), state=state,
                           ledger_check=ledger_check)
        for key in chunk_keys:
            node.owner_put(key, payload, stream_id, ACCESS_PROTECTED, owner)
        return node

    checked = build_node(ledger_check=True)
    unchecked = build_node(ledger_check=False)
    tput_checked = _throughput(checked, reader, chunk_keys, n_gets)
    tput_unchecked = _throughput(unchecked, reader, chunk_keys, n_gets)
    local_latency_ms = 1000.0 / tput_checked
    report.add("local_gets_per_s_ledger_check", tput_checked, False)
    report.add("local_gets_per_s_no_check", tput_unchecked, False)
    report.add("ledger_check_throughput_ratio",
               tput_checked / tput_unchecked, False)
    report.add("local_mean_latency_ms", local_latency_ms, False)

    # DHT arms: deterministic virtual latency over the same values.
    def dht_mean_latency(sloppy: bool) -> float:
        config = DhtConfig(node_count=dht_nodes, seed=seed,
                           sloppy_caching=sloppy)
        sim = DhtSimulator(config, state=state)
        sim.spawn_network()
        stored = chunk_keys[:max(1, dht_gets // 3)]
        for key in stored:
            sim.put(key, payload, stream_id=stream_id,
                    access=ACCESS_PROTECTED, writer=owner)
        total = 0.0
        region = sim.config.regions[0]
        for i in range(dht_gets):
            result = sim.get_traced(stored[i % len(stored)],
                                    requester=reader, region=region)
            total += result.latency_ms
        return total / dht_gets

    lat_plain = dht_mean_latency(sloppy=False)
    lat_sloppy = dht_mean_latency(sloppy=True)
    report.add("dht_mean_latency_ms_no_locality", lat_plain, True)
    report.add("dht_mean_latency_ms_locality", lat_sloppy, True)
    report.add("dht_over_local_latency_ratio",
               lat_plain / max(local_latency_ms, 1e-9), False)
    report.add("locality_latency_reduction",
               (lat_plain - lat_sloppy) / lat_plain if lat_plain else 0.0,
               True)
    return report
