"""Encrypted, hash-chained time-series streams with ledger-enforced sharing.

The pieces, bottom up:

* :mod:`streamvault.keyreg` -- hash-chain key regression: O(1) rotation,
  one state unlocks every earlier epoch.
* :mod:`streamvault.pre` -- ElGamal-style proxy re-encryption for handing
  wrapped key states to services without exposing them.
* :mod:`streamvault.chunks` -- compressed, authenticated-encrypted,
  hash-chained chunk format for time-windowed records.
* :mod:`streamvault.ledger` -- deterministic simulated chain plus the
  fold that turns its transactions into authorization state.
* :mod:`streamvault.storage` -- permission-enforcing append-only nodes.
* :mod:`streamvault.dht` -- deterministic overlay-network simulator with
  k-bucket routing, replication, and locality-aware caching.
* :mod:`streamvault.gateway` -- the ingest pipeline and query paths.
* :mod:`streamvault.cli` / :mod:`streamvault.workspace` -- command-line
  front end over a persistent data directory.
"""

from . import errors
from .chunks import (
    DataRecord,
    SealedChunk,
    StreamKey,
    StreamMeta,
    build_chunk,
    open_chunk,
    verify_chain,
)
from .dht import DhtConfig, DhtSimulator
from .gateway import Gateway, OwnerKeySource, ServiceReader
from .keyreg import KeyRegressionChain
from .keys import SigningKey
from .ledger import AclState, SimChain, derive_stream_id, replay
from .sharing import ServiceMember, StreamSharing
from .storage import DiskBackend, MemoryBackend, StorageClient, StorageNode
from .workspace import Workspace

__version__ = "0.1.0"

__all__ = [
    "AclState",
    "DataRecord",
    "DhtConfig",
    "DhtSimulator",
    "DiskBackend",
    "Gateway",
    "KeyRegressionChain",
    "MemoryBackend",
    "OwnerKeySource",
    "SealedChunk",
    "ServiceMember",
    "ServiceReader",
    "SigningKey",
    "SimChain",
    "StorageClient",
    "StorageNode",
    "StreamKey",
    "StreamMeta",
    "StreamSharing",
    "Workspace",
    "build_chunk",
    "derive_stream_id",
    "errors",
    "open_chunk",
    "replay",
    "verify_chain",
]
