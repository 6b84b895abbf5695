"""Persistent on-disk world backing the command-line tools.

One directory holds everything a set of invocations shares: named
identities, the simulated chain, per-stream pipeline state, and a local
storage node. Authorization state is never persisted -- it is re-derived
on every load by folding the confirmed chain, so the ledger stays the
single source of truth across process boundaries.

Layout under the workspace root::

    keys/<name>.json    signing seed (+ re-encryption scalar for services)
    chain.json          simulated chain: parameters, clock, blocks, mempool
    streams.json        stream metadata, key-chain seeds, sharing + pipeline state
    node.json           the storage node's signing seed
    storage/            append-only key/value files
    storage-meta.json   per-key (stream, access-class) records
"""

from __future__ import annotations

import json
import os
import secrets
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from . import sharing
from .chunks import DataRecord, StreamMeta
from .errors import KeyExists, LateRecord, NotFound, UnknownStream
from .gateway import Gateway, NodeStore, OwnerKeySource, ServiceReader
from .group import secp256k1
from .hashing import sha256
from .keyreg import KeyRegressionChain
from .keys import SigningKey
from .ledger import (
    AclState,
    Block,
    SimChain,
    derive_stream_id,
    format_audit_event,
    replay,
    tx_anchor,
    tx_grant,
    tx_register,
    tx_revoke,
)
from .storage import (
    ACCESS_PROTECTED,
    DiskBackend,
    StorageNode,
)

DATA_DIR_ENV = "STREAMVAULT_DATA"
DEFAULT_DATA_DIR = "~/.streamvault"

PROFILES = {
    "default": {"block_interval_ms": 1_000, "confirmations": 1},
    "bitcoin-like": {"block_interval_ms": 600_000, "confirmations": 6},
}


@dataclass
class IngestReport:
    stream_id: bytes
    accepted: int
    rejected: int
    chunks_sealed: int
    anchor_txid: Optional[bytes]


class Workspace:
    """All durable state for one data directory."""

    def __init__(self, root: Optional[str | Path] = None):
        base = root or os.environ.get(DATA_DIR_ENV) or DEFAULT_DATA_DIR
        self.root = Path(base).expanduser()
        self.root.mkdir(parents=True, exist_ok=True)
        (self.root / "keys").mkdir(exist_ok=True)
        self._chain: Optional[SimChain] = None
        self._node: Optional[StorageNode] = None
        self._state: Optional[AclState] = None

    # -- identities ---------------------------------------------------------

    def _key_path(self, name: str) -> Path:
        if not name or "/" in name or name.startswith("."):
            raise ValueError(f"bad identity name: {name!r}")
        return self.root / "keys" / f"{name}.json"

    def create_identity(self, name: str, kind: str = "owner",
                        seed: Optional[bytes] = None) -> dict:
        """Create a named identity; services also get a re-encryption key."""
        if kind not in ("owner", "service"):
            raise ValueError("kind must be 'owner' or 'service'")
        path = self._key_path(name)
        if path.exists():
            raise KeyExists(name)
        signing_seed = seed if seed is not None else secrets.token_bytes(32)
        entry = {"kind": kind, "signing_seed": signing_seed.hex()}
        if kind == "service":
            grp = secp256k1()
            entry["group"] = grp.name
            entry["pre_sk"] = format(grp.random_scalar(), "x")
        path.write_text(json.dumps(entry, indent=2) + "\n")
        return self.identity_info(name)

    def _identity(self, name: str) -> dict:
        path = self._key_path(name)
        if not path.exists():
            raise NotFound(f"no identity named {name!r}")
        return json.loads(path.read_text())

    def signing_key(self, name: str) -> SigningKey:
        entry = self._identity(name)
        return SigningKey.from_seed(bytes.fromhex(entry["signing_seed"]))

    def member(self, name: str) -> sharing.ServiceMember:
        entry = self._identity(name)
        if entry.get("kind") != "service":
            raise ValueError(f"identity {name!r} is not a service")
        return sharing.ServiceMember(
            signing=SigningKey.from_seed(bytes.fromhex(entry["signing_seed"])),
            group=secp256k1(),
            pre_sk=int(entry["pre_sk"], 16))

    def identity_info(self, name: str) -> dict:
        entry = self._identity(name)
        key = SigningKey.from_seed(bytes.fromhex(entry["signing_seed"]))
        info = {"name": name, "kind": entry["kind"],
                "id": key.id.hex(), "public_key": key.public_bytes.hex()}
        if entry["kind"] == "service":
            grp = secp256k1()
            pk = grp.exp(grp.generator(), int(entry["pre_sk"], 16))
            info["reencryption_public_key"] = grp.encode(pk).hex()
        return info

    def list_identities(self) -> list[str]:
        return sorted(p.stem for p in (self.root / "keys").glob("*.json"))

    # -- simulated chain ------------------------------------------------------

    @property
    def chain_path(self) -> Path:
        return self.root / "chain.json"

    def chain(self, profile: str = "default") -> SimChain:
        """Load the persisted chain, creating it on first use."""
        if self._chain is not None:
            return self._chain
        if self.chain_path.exists():
            data = json.loads(self.chain_path.read_text())
            chain = SimChain(data["block_interval_ms"], data["confirmations"])
            chain.now = data["now"]
            chain._next_block_ts = data["next_block_ts"]
            chain.blocks = [Block.from_bytes(bytes.fromhex(b))
                            for b in data["blocks"]]
            chain.mempool = [bytes.fromhex(t) for t in data["mempool"]]
            chain._last_tx_height = max(
                (b.height for b in chain.blocks if b.txs), default=-1)
        else:
            params = PROFILES.get(profile)
            if params is None:
                raise ValueError(f"unknown profile {profile!r}; "
                                 f"choose from {sorted(PROFILES)}")
            chain = SimChain(**params)
        self._chain = chain
        return chain

    def save_chain(self) -> None:
        chain = self._chain
        if chain is None:
            return
        data = {
            "block_interval_ms": chain.block_interval_ms,
            "confirmations": chain.confirmations,
            "now": chain.now,
            "next_block_ts": chain._next_block_ts,
            "blocks": [b.to_bytes().hex() for b in chain.blocks],
            "mempool": [t.hex() for t in chain.mempool],
        }
        self.chain_path.write_text(json.dumps(data) + "\n")

    def state(self) -> AclState:
        """Authorization state folded from the confirmed chain."""
        if self._state is None:
            self._state = replay(self.chain().get_blocks())
        return self._state

    def _settle(self) -> None:
        """Confirm everything pending, then re-fold and persist."""
        self.chain().settle()
        self._state = None
        self.save_chain()
        if self._node is not None:
            self._node.state = self.state()

    # -- storage node -----------------------------------------------------------

    def node(self) -> StorageNode:
        if self._node is not None:
            return self._node
        node_path = self.root / "node.json"
        if node_path.exists():
            seed = bytes.fromhex(json.loads(node_path.read_text())["signing_seed"])
        else:
            seed = secrets.token_bytes(32)
            node_path.write_text(json.dumps({"signing_seed": seed.hex()}) + "\n")
        node = StorageNode(SigningKey.from_seed(seed),
                           DiskBackend(self.root / "storage"),
                           state=self.state())
        meta_path = self.root / "storage-meta.json"
        if meta_path.exists():
            raw = json.loads(meta_path.read_text())
            node.import_meta({bytes.fromhex(k): (bytes.fromhex(s), a)
                              for k, (s, a) in raw.items()})
        self._node = node
        return node

    def save_node_meta(self) -> None:
        if self._node is None:
            return
        raw = {k.hex(): [s.hex(), a]
               for k, (s, a) in self._node.export_meta().items()}
        (self.root / "storage-meta.json").write_text(json.dumps(raw) + "\n")

    # -- streams ----------------------------------------------------------------

    @property
    def streams_path(self) -> Path:
        return self.root / "streams.json"

    def _load_streams(self) -> dict:
        if self.streams_path.exists():
            return json.loads(self.streams_path.read_text())
        return {}

    def _save_streams(self, streams: dict) -> None:
        self.streams_path.write_text(json.dumps(streams, indent=2) + "\n")

    def resolve_stream(self, ref: str) -> tuple[bytes, dict]:
        """Find a stream by label or by stream-ID hex prefix."""
        streams = self._load_streams()
        matches = [(sid, entry) for sid, entry in streams.items()
                   if entry["label"] == ref or sid.startswith(ref.lower())]
        if not matches:
            raise UnknownStream(ref)
        if len(matches) > 1:
            raise UnknownStream(f"ambiguous stream reference {ref!r}")
        sid_hex, entry = matches[0]
        return bytes.fromhex(sid_hex), entry

    def register_stream(self, owner_name: str, label: str, t0: int,
                        delta: int, profile: str = "default",
                        checkpoint_interval: int = 10,
                        kr_seed: Optional[bytes] = None,
                        max_epochs: int = 2 ** 16) -> bytes:
        owner = self.signing_key(owner_name)
        label_bytes = label.encode()
        stream_id = derive_stream_id(owner.public_bytes, t0, delta, 0,
                                     label_bytes)
        streams = self._load_streams()
        if stream_id.hex() in streams:
            raise KeyExists(f"stream {label!r} already registered")
        chain = self.chain(profile)
        chain.submit(tx_register(owner, t0, delta, 0, label_bytes))
        self._settle()
        record = self.state().stream(stream_id)  # raises if the fold rejected it

        seed = kr_seed if kr_seed is not None else secrets.token_bytes(32)
        share = sharing.StreamSharing(KeyRegressionChain(seed, max_epochs))
        sharing.publish_wrapped(self._keymat_putter(stream_id, owner),
                                stream_id, share.bootstrap())
        self.save_node_meta()

        streams[stream_id.hex()] = {
            "label": label,
            "owner": owner_name,
            "t0": t0,
            "delta": delta,
            "checkpoint_interval": checkpoint_interval,
            "max_epochs": max_epochs,
            "kr_seed": seed.hex(),
            "epoch": record.current_epoch,
            "onetime_sk": format(share.onetime.sk, "x"),
            "grantees": {},
            "gateway": {
                "watermark": None,
                "prev_hash": "00" * 32,
                "sealed": [],
                "last": None,
                "chunks_since_anchor": 0,
            },
        }
        self._save_streams(streams)
        return stream_id

    def _keymat_putter(self, stream_id: bytes, owner: SigningKey):
        node = self.node()
        return lambda key, value: node.owner_put(
            key, value, stream_id, ACCESS_PROTECTED, owner)

    def _sharing_for(self, stream_id: bytes, entry: dict) -> sharing.StreamSharing:
        grp = secp256k1()
        grantees = {bytes.fromhex(gid): grp.decode(bytes.fromhex(g["pk"]))
                    for gid, g in entry["grantees"].items()}
        return sharing.StreamSharing.restore(
            KeyRegressionChain(bytes.fromhex(entry["kr_seed"]),
                               entry["max_epochs"]),
            grp, entry["epoch"], int(entry["onetime_sk"], 16), grantees)

    def _meta_for(self, stream_id: bytes, entry: dict) -> StreamMeta:
        owner = self.signing_key(entry["owner"])
        return StreamMeta(stream_id, owner.id, entry["t0"], entry["delta"],
                          epoch=entry["epoch"],
                          checkpoint_interval=entry["checkpoint_interval"])

    def gateway_for(self, stream_id: bytes, entry: dict) -> Gateway:
        owner = self.signing_key(entry["owner"])
        chain_keys = KeyRegressionChain(bytes.fromhex(entry["kr_seed"]),
                                        entry["max_epochs"])
        gw = Gateway(self._meta_for(stream_id, entry), owner, chain_keys,
                     NodeStore(self.node()), ledger=self.chain(),
                     state=self.state())
        saved = entry["gateway"]
        last = saved["last"]
        gw.restore_progress(
            saved["watermark"], bytes.fromhex(saved["prev_hash"]),
            list(saved["sealed"]),
            None if last is None else (last[0], bytes.fromhex(last[1])),
            saved["chunks_since_anchor"])
        return gw

    def _persist_gateway(self, stream_id: bytes, gw: Gateway) -> None:
        streams = self._load_streams()
        entry = streams[stream_id.hex()]
        last = gw.last_sealed
        entry["gateway"] = {
            "watermark": gw.watermark,
            "prev_hash": gw.prev_hash.hex(),
            "sealed": sorted(gw.sealed_through),
            "last": None if last is None else [last[0], last[1].hex()],
            "chunks_since_anchor": gw.chunks_since_anchor,
        }
        self._save_streams(streams)

    # -- high-level operations (one per command) ------------------------------------

    def ingest(self, ref: str, records: list[DataRecord]) -> IngestReport:
        stream_id, entry = self.resolve_stream(ref)
        gw = self.gateway_for(stream_id, entry)
        accepted = rejected = 0
        for record in records:
            try:
                gw.ingest(record)
                accepted += 1
            except LateRecord:
                rejected += 1
        gw.flush()
        txid = gw.anchor_now()
        self._settle()
        self._persist_gateway(stream_id, gw)
        self.save_node_meta()
        return IngestReport(stream_id, accepted, rejected,
                            gw.stats.chunks_sealed, txid)

    def share(self, ref: str, service_name: str,
              expires_at: int = 0) -> bytes:
        """Grant a service access; returns the grant txid."""
        stream_id, entry = self.resolve_stream(ref)
        owner = self.signing_key(entry["owner"])
        member = self.member(service_name)
        share = self._sharing_for(stream_id, entry)
        token = share.grant(member.id, member.public_key)
        sharing.publish_token(self._keymat_putter(stream_id, owner),
                              stream_id, share.epoch, member.id, token)
        self.save_node_meta()
        txid = self.chain().submit(
            tx_grant(owner, stream_id, member.id, expires_at,
                     token_ref=sha256(token.to_bytes())))
        self._settle()
        streams = self._load_streams()
        grp = secp256k1()
        streams[stream_id.hex()]["grantees"][member.id.hex()] = {
            "name": service_name, "pk": grp.encode(member.public_key).hex()}
        self._save_streams(streams)
        return txid

    def revoke(self, ref: str, service_name: str) -> bytes:
        """Revoke a service: new epoch, fresh key material, ledger record."""
        stream_id, entry = self.resolve_stream(ref)
        owner = self.signing_key(entry["owner"])
        member_id = None
        for gid, g in entry["grantees"].items():
            if g["name"] == service_name:
                member_id = bytes.fromhex(gid)
        if member_id is None:
            member_id = self.member(service_name).id
        share = self._sharing_for(stream_id, entry)
        artifacts = share.revoke(member_id)
        sharing.publish_wrapped(self._keymat_putter(stream_id, owner),
                                stream_id, artifacts)
        self.save_node_meta()
        txid = self.chain().submit(
            tx_revoke(owner, stream_id, member_id, artifacts.epoch))
        self._settle()
        streams = self._load_streams()
        entry = streams[stream_id.hex()]
        entry["grantees"].pop(member_id.hex(), None)
        entry["epoch"] = artifacts.epoch
        entry["onetime_sk"] = format(share.onetime.sk, "x")
        self._save_streams(streams)
        return txid

    def query(self, ref: str, reader_name: str, t_a: int,
              t_b: int) -> list[DataRecord]:
        stream_id, entry = self.resolve_stream(ref)
        if reader_name == entry["owner"]:
            gw = self.gateway_for(stream_id, entry)
            chain_keys = KeyRegressionChain(bytes.fromhex(entry["kr_seed"]),
                                            entry["max_epochs"])
            return gw.query(t_a, t_b, self.signing_key(reader_name),
                            OwnerKeySource(chain_keys))
        member = self.member(reader_name)
        owner_pub = self.signing_key(entry["owner"]).public_bytes
        reader = ServiceReader(member, self._meta_for(stream_id, entry),
                               NodeStore(self.node()), owner_pub)
        return reader.query(t_a, t_b, self.state().current_epoch(stream_id))

    def audit_lines(self, ref: Optional[str] = None) -> list[str]:
        stream_id = self.resolve_stream(ref)[0] if ref else None
        return [format_audit_event(e)
                for e in self.state().audit_log(stream_id)]
