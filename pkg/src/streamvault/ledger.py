"""Deterministic append-only ledger and the ACL state machine folded over it.

The ledger side is a simulated blockchain: clients submit signed
transactions as opaque byte blobs, and the chain packages whatever is
pending into a block every ``block_interval_ms`` of simulated time. Blocks
are visible to readers only once they have ``confirmations`` blocks on top
(inclusive), mimicking settlement delay.

The access-control state is *not* stored by the chain. Every participant
derives it locally by folding confirmed blocks, in order, through
``AclState.apply_block``: transactions are parsed, signature-checked, and
validated against the current state. Invalid transactions are never
censored -- they stay in their block and produce a rejected audit event,
so the full decision history is reconstructible by anyone.

Determinism is the core contract: the same submitted transaction sequence
yields byte-identical blocks, state digests, and audit logs on every
replay, and restoring from any checkpoint then folding the remaining
blocks matches a full replay from genesis.

Transaction wire format (big-endian):

    version   1   currently 1
    op        1
    signer    32  Ed25519 public key
    signature 64  over SHA-256(version || op || signer || payload)
    payload   var op-specific, see the op dataclasses

Ops: register-stream, grant, revoke, rotate, anchor. Revocation carries
the next key epoch so readers learn the rotation and the permission
change atomically.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from . import keys
from .errors import HeightGap, MalformedTx, NotStreamOwner, UnknownStream
from .hashing import ZERO32, be16, be32, be64, read_be, sha256

TX_VERSION = 1

OP_REGISTER = 1
OP_GRANT = 2
OP_REVOKE = 3
OP_ROTATE = 4
OP_ANCHOR = 5

OP_NAMES = {
    OP_REGISTER: "register",
    OP_GRANT: "grant",
    OP_REVOKE: "revoke",
    OP_ROTATE: "rotate",
    OP_ANCHOR: "anchor",
}

NO_EXPIRY = 0


# --- transactions ------------------------------------------------------------

def registration_payload(owner_pub: bytes, t0: int, delta: int,
                         genesis_epoch: int, label: bytes) -> bytes:
    """Canonical byte string whose digest is the stream ID."""
    return (b"stream-register" + owner_pub + be64(t0) + be64(delta)
            + be32(genesis_epoch) + be16(len(label)) + label)


def derive_stream_id(owner_pub: bytes, t0: int, delta: int,
                     genesis_epoch: int, label: bytes) -> bytes:
    return sha256(registration_payload(owner_pub, t0, delta,
                                       genesis_epoch, label))


@dataclass(frozen=True)
class LedgerTx:
    op: int
    signer_pub: bytes
    signature: bytes
    payload: bytes

    def signing_message(self) -> bytes:
        return sha256(bytes([TX_VERSION, self.op]) + self.signer_pub
                      + self.payload)

    def to_bytes(self) -> bytes:
        return (bytes([TX_VERSION, self.op]) + self.signer_pub
                + self.signature + self.payload)

    @classmethod
    def from_bytes(cls, raw: bytes) -> "LedgerTx":
        if len(raw) < 2 + keys.PUBKEY_SIZE + keys.SIGNATURE_SIZE:
            raise MalformedTx("transaction too short")
        if raw[0] != TX_VERSION:
            raise MalformedTx(f"unsupported tx version {raw[0]}")
        op = raw[1]
        if op not in OP_NAMES:
            raise MalformedTx(f"unknown op {op}")
        signer = raw[2:34]
        signature = raw[34:98]
        return cls(op, signer, signature, raw[98:])

    @property
    def txid(self) -> bytes:
        return sha256(self.to_bytes())


def make_tx(op: int, signer: keys.SigningKey, payload: bytes) -> LedgerTx:
    unsigned = LedgerTx(op, signer.public_bytes, b"", payload)
    return LedgerTx(op, signer.public_bytes,
                    signer.sign(unsigned.signing_message()), payload)


def tx_register(signer: keys.SigningKey, t0: int, delta: int,
                genesis_epoch: int = 0, label: bytes = b"") -> LedgerTx:
    stream_id = derive_stream_id(signer.public_bytes, t0, delta,
                                 genesis_epoch, label)
    payload = (stream_id + be64(t0) + be64(delta) + be32(genesis_epoch)
               + be16(len(label)) + label)
    return make_tx(OP_REGISTER, signer, payload)


def tx_grant(signer: keys.SigningKey, stream_id: bytes, grantee_id: bytes,
             expires_at: int = NO_EXPIRY,
             token_ref: bytes = ZERO32) -> LedgerTx:
    """Grant access. ``token_ref`` is the digest of the re-encryption token
    published in the storage layer alongside this grant (all-zero if the
    token travels out of band)."""
    return make_tx(OP_GRANT, signer,
                   stream_id + grantee_id + be64(expires_at) + token_ref)


def tx_revoke(signer: keys.SigningKey, stream_id: bytes, grantee_id: bytes,
              new_epoch: int) -> LedgerTx:
    return make_tx(OP_REVOKE, signer, stream_id + grantee_id + be32(new_epoch))


def tx_rotate(signer: keys.SigningKey, stream_id: bytes,
              new_epoch: int) -> LedgerTx:
    return make_tx(OP_ROTATE, signer, stream_id + be32(new_epoch))


def tx_anchor(signer: keys.SigningKey, stream_id: bytes, chunk_index: int,
              chunk_digest: bytes) -> LedgerTx:
    return make_tx(OP_ANCHOR, signer,
                   stream_id + be64(chunk_index) + chunk_digest)


# --- blocks and the simulated chain ------------------------------------------

@dataclass(frozen=True)
class Block:
    height: int
    timestamp: int
    prev_hash: bytes
    txs: tuple[bytes, ...]

    def to_bytes(self) -> bytes:
        parts = [be64(self.height), be64(self.timestamp), self.prev_hash,
                 be32(len(self.txs))]
        for tx in self.txs:
            parts.append(be32(len(tx)))
            parts.append(tx)
        return b"".join(parts)

    @property
    def block_hash(self) -> bytes:
        return sha256(self.to_bytes())

    @classmethod
    def from_bytes(cls, raw: bytes) -> "Block":
        height, off = read_be(raw, 0, 8)
        timestamp, off = read_be(raw, off, 8)
        prev = raw[off:off + 32]
        count, off = read_be(raw, off + 32, 4)
        txs = []
        for _ in range(count):
            length, off = read_be(raw, off, 4)
            txs.append(raw[off:off + length])
            off += length
        return cls(height, timestamp, prev, tuple(txs))


class SimChain:
    """Deterministic single-writer chain driven by a simulated clock.

    ``advance(ms)`` moves simulated time forward and mines one block per
    elapsed interval; each block absorbs every transaction pending at its
    timestamp, in submission order. Empty intervals still mine (empty)
    blocks so settlement delay is purely a function of time.
    """

    def __init__(self, block_interval_ms: int = 1000, confirmations: int = 1,
                 genesis_ts: int = 0):
        if block_interval_ms <= 0:
            raise ValueError("block_interval_ms must be positive")
        if confirmations < 1:
            raise ValueError("confirmations must be >= 1")
        self.block_interval_ms = block_interval_ms
        self.confirmations = confirmations
        self.now = genesis_ts
        self._next_block_ts = genesis_ts + block_interval_ms
        self.blocks: list[Block] = []
        self.mempool: list[bytes] = []
        self._last_tx_height = -1

    def submit_tx(self, raw: bytes) -> bytes:
        """Queue an opaque transaction blob; returns its txid.

        Validation happens at fold time, not here: the chain records
        whatever it is given.
        """
        self.mempool.append(bytes(raw))
        return sha256(raw)

    def submit(self, tx: LedgerTx) -> bytes:
        return self.submit_tx(tx.to_bytes())

    def advance(self, ms: int) -> list[Block]:
        """Advance simulated time, mining due blocks; returns new blocks."""
        if ms < 0:
            raise ValueError("cannot rewind time")
        self.now += ms
        mined = []
        while self._next_block_ts <= self.now:
            prev = self.blocks[-1].block_hash if self.blocks else ZERO32
            block = Block(len(self.blocks), self._next_block_ts, prev,
                          tuple(self.mempool))
            self.mempool.clear()
            if block.txs:
                self._last_tx_height = block.height
            self.blocks.append(block)
            mined.append(block)
            self._next_block_ts += self.block_interval_ms
        return mined

    def height(self) -> int:
        return len(self.blocks)

    def confirmed_height(self) -> int:
        """Number of blocks visible under the confirmation rule."""
        return max(0, len(self.blocks) - (self.confirmations - 1))

    def get_blocks(self, from_height: int = 0) -> list[Block]:
        """Confirmed blocks starting at from_height."""
        return self.blocks[from_height:self.confirmed_height()]

    def settle(self) -> list[Block]:
        """Advance just far enough that every submitted tx is confirmed.

        Idempotent: a settled chain does not move again."""
        if self.mempool:
            tx_height = len(self.blocks)  # lands in the next block
        elif self._last_tx_height >= 0:
            tx_height = self._last_tx_height
        else:
            return []
        need = tx_height + self.confirmations - len(self.blocks)
        if need <= 0:
            return []
        ms = (self._next_block_ts - self.now
              + (need - 1) * self.block_interval_ms)
        return self.advance(ms)


# --- ACL state ----------------------------------------------------------------

@dataclass
class GrantEntry:
    granted: bool
    expires_at: int = NO_EXPIRY
    height: int = 0
    token_ref: bytes = ZERO32

    def active_at(self, ts: int) -> bool:
        if not self.granted:
            return False
        return self.expires_at == NO_EXPIRY or ts < self.expires_at


@dataclass
class StreamRecord:
    stream_id: bytes
    owner_id: bytes
    owner_pub: bytes
    t0: int
    delta: int
    label: bytes
    current_epoch: int
    registered_height: int
    grants: dict[bytes, GrantEntry] = field(default_factory=dict)
    anchors: dict[int, bytes] = field(default_factory=dict)


@dataclass(frozen=True)
class AuditEvent:
    height: int
    tx_index: int
    txid: bytes
    op: int
    signer_id: bytes
    stream_id: bytes
    accepted: bool
    reason: str

    def to_bytes(self) -> bytes:
        reason = self.reason.encode()
        return (be64(self.height) + be32(self.tx_index) + self.txid
                + bytes([self.op, 1 if self.accepted else 0])
                + self.signer_id + self.stream_id
                + be16(len(reason)) + reason)


class AclState:
    """Replicated ACL state: fold confirmed blocks in height order.

    Every transaction -- valid or not -- appends an audit event, and the
    audit log is hash-chained so its digest commits to the whole decision
    history. ``digest()`` covers both the structured state and that chain.
    """

    def __init__(self):
        self.streams: dict[bytes, StreamRecord] = {}
        self.audit: list[AuditEvent] = []
        self.audit_digest = ZERO32
        self.next_height = 0
        self._restored_audit_count = 0

    # -- folding ---------------------------------------------------------

    def apply_block(self, block: Block) -> list[AuditEvent]:
        if block.height != self.next_height:
            raise HeightGap(
                f"expected height {self.next_height}, got {block.height}")
        events = []
        for tx_index, raw in enumerate(block.txs):
            events.append(self._apply_tx(block, tx_index, raw))
        self.next_height = block.height + 1
        return events

    def apply_blocks(self, blocks: list[Block]) -> list[AuditEvent]:
        events = []
        for block in blocks:
            events.extend(self.apply_block(block))
        return events

    def _record(self, block: Block, tx_index: int, txid: bytes, op: int,
                signer_id: bytes, stream_id: bytes, accepted: bool,
                reason: str) -> AuditEvent:
        event = AuditEvent(block.height, tx_index, txid, op, signer_id,
                           stream_id, accepted, reason)
        self.audit.append(event)
        self.audit_digest = sha256(self.audit_digest + event.to_bytes())
        return event

    def _apply_tx(self, block: Block, tx_index: int, raw: bytes) -> AuditEvent:
        txid = sha256(raw)
        try:
            tx = LedgerTx.from_bytes(raw)
        except MalformedTx as exc:
            return self._record(block, tx_index, txid, 0, ZERO32, ZERO32,
                                False, f"malformed: {exc}")
        signer_id = keys.pseudo_id(tx.signer_pub)
        stream_id = tx.payload[:32] if len(tx.payload) >= 32 else ZERO32
        if not keys.verify(tx.signer_pub, tx.signature, tx.signing_message()):
            return self._record(block, tx_index, txid, tx.op, signer_id,
                                stream_id, False, "bad-signature")
        try:
            reason = self._dispatch(block, tx, signer_id)
        except MalformedTx as exc:
            return self._record(block, tx_index, txid, tx.op, signer_id,
                                stream_id, False, f"malformed: {exc}")
        return self._record(block, tx_index, txid, tx.op, signer_id,
                            stream_id, reason == "", reason or "ok")

    def _dispatch(self, block: Block, tx: LedgerTx, signer_id: bytes) -> str:
        """Apply one parsed tx; returns "" on acceptance, reason on reject."""
        if tx.op == OP_REGISTER:
            return self._op_register(block, tx)
        p = tx.payload
        if len(p) < 32:
            raise MalformedTx("missing stream id")
        stream = self.streams.get(p[:32])
        if stream is None:
            return "unknown-stream"
        if signer_id != stream.owner_id:
            return "not-owner"
        if tx.op == OP_GRANT:
            if len(p) != 104:
                raise MalformedTx("bad grant payload")
            grantee, expires_at = p[32:64], int.from_bytes(p[64:72], "big")
            stream.grants[grantee] = GrantEntry(True, expires_at, block.height,
                                                p[72:104])
            return ""
        if tx.op == OP_REVOKE:
            if len(p) != 68:
                raise MalformedTx("bad revoke payload")
            grantee, new_epoch = p[32:64], int.from_bytes(p[64:68], "big")
            if new_epoch <= stream.current_epoch:
                return "epoch-not-monotone"
            stream.grants[grantee] = GrantEntry(False, NO_EXPIRY, block.height)
            stream.current_epoch = new_epoch
            return ""
        if tx.op == OP_ROTATE:
            if len(p) != 36:
                raise MalformedTx("bad rotate payload")
            new_epoch = int.from_bytes(p[32:36], "big")
            if new_epoch <= stream.current_epoch:
                return "epoch-not-monotone"
            stream.current_epoch = new_epoch
            return ""
        if tx.op == OP_ANCHOR:
            if len(p) != 72:
                raise MalformedTx("bad anchor payload")
            index, digest = int.from_bytes(p[32:40], "big"), p[40:72]
            existing = stream.anchors.get(index)
            if existing is not None and existing != digest:
                return "anchor-conflict"
            stream.anchors[index] = digest
            return ""
        raise MalformedTx(f"unknown op {tx.op}")

    def _op_register(self, block: Block, tx: LedgerTx) -> str:
        p = tx.payload
        if len(p) < 54:
            raise MalformedTx("bad register payload")
        stream_id = p[:32]
        t0, off = read_be(p, 32, 8)
        delta, off = read_be(p, off, 8)
        genesis_epoch, off = read_be(p, off, 4)
        label_len, off = read_be(p, off, 2)
        label = p[off:off + label_len]
        if off + label_len != len(p):
            raise MalformedTx("bad register payload")
        if delta <= 0:
            return "bad-params"
        expected = derive_stream_id(tx.signer_pub, t0, delta, genesis_epoch,
                                    label)
        if stream_id != expected:
            return "stream-id-mismatch"
        if stream_id in self.streams:
            return "duplicate-stream"
        self.streams[stream_id] = StreamRecord(
            stream_id, keys.pseudo_id(tx.signer_pub), tx.signer_pub,
            t0, delta, label, genesis_epoch, block.height)
        return ""

    # -- queries -----------------------------------------------------------

    def stream(self, stream_id: bytes) -> StreamRecord:
        record = self.streams.get(stream_id)
        if record is None:
            raise UnknownStream(stream_id.hex())
        return record

    def require_owner(self, stream_id: bytes, signer_id: bytes) -> StreamRecord:
        record = self.stream(stream_id)
        if record.owner_id != signer_id:
            raise NotStreamOwner(signer_id.hex())
        return record

    def is_granted(self, stream_id: bytes, principal_id: bytes,
                   at_ts: int) -> bool:
        record = self.streams.get(stream_id)
        if record is None:
            return False
        if principal_id == record.owner_id:
            return True
        entry = record.grants.get(principal_id)
        return entry is not None and entry.active_at(at_ts)

    def current_epoch(self, stream_id: bytes) -> int:
        return self.stream(stream_id).current_epoch

    def query_permission(self, stream_id: bytes, requester_id: bytes,
                         at_ts: int = 0) -> str:
        """Classify a requester as 'owner', 'granted', or 'denied'."""
        record = self.stream(stream_id)
        if requester_id == record.owner_id:
            return "owner"
        entry = record.grants.get(requester_id)
        if entry is not None and entry.active_at(at_ts):
            return "granted"
        return "denied"

    def latest_anchor(self, stream_id: bytes) -> Optional[tuple[int, bytes]]:
        """Highest-index confirmed checkpoint, or None before the first."""
        anchors = self.stream(stream_id).anchors
        if not anchors:
            return None
        index = max(anchors)
        return index, anchors[index]

    def audit_log(self, stream_id: Optional[bytes] = None) -> list[AuditEvent]:
        """Audit events in (height, intra-block index) order, optionally
        restricted to one stream."""
        if stream_id is None:
            return list(self.audit)
        return [e for e in self.audit if e.stream_id == stream_id]

    # -- determinism: digests and checkpoints -------------------------------

    def state_bytes(self) -> bytes:
        """Canonical serialization of the structured state."""
        parts = [be64(self.next_height), be32(len(self.streams))]
        for sid in sorted(self.streams):
            s = self.streams[sid]
            parts += [sid, s.owner_id, s.owner_pub, be64(s.t0), be64(s.delta),
                      be16(len(s.label)), s.label, be32(s.current_epoch),
                      be64(s.registered_height), be32(len(s.grants))]
            for gid in sorted(s.grants):
                g = s.grants[gid]
                parts += [gid, bytes([1 if g.granted else 0]),
                          be64(g.expires_at), be64(g.height), g.token_ref]
            parts.append(be32(len(s.anchors)))
            for index in sorted(s.anchors):
                parts += [be64(index), s.anchors[index]]
        return b"".join(parts)

    def digest(self) -> bytes:
        """Commitment to state plus the hash-chained audit history."""
        return sha256(self.state_bytes() + self.audit_digest)

    def checkpoint(self) -> bytes:
        """Snapshot from which folding can resume; includes audit chain head.

        The snapshot drops individual audit events (the chain digest stands
        in for them), so a restored state answers every permission query and
        extends the audit chain identically, but lists only post-checkpoint
        events.
        """
        total_events = self._restored_audit_count + len(self.audit)
        return self.state_bytes() + self.audit_digest + be32(total_events)

    @classmethod
    def restore(cls, snapshot: bytes) -> "AclState":
        state = cls()
        state.next_height, off = read_be(snapshot, 0, 8)
        n_streams, off = read_be(snapshot, off, 4)
        for _ in range(n_streams):
            sid = snapshot[off:off + 32]
            owner_id = snapshot[off + 32:off + 64]
            owner_pub = snapshot[off + 64:off + 96]
            t0, off = read_be(snapshot, off + 96, 8)
            delta, off = read_be(snapshot, off, 8)
            label_len, off = read_be(snapshot, off, 2)
            label = snapshot[off:off + label_len]
            epoch, off = read_be(snapshot, off + label_len, 4)
            reg_height, off = read_be(snapshot, off, 8)
            record = StreamRecord(sid, owner_id, owner_pub, t0, delta, label,
                                  epoch, reg_height)
            n_grants, off = read_be(snapshot, off, 4)
            for _ in range(n_grants):
                gid = snapshot[off:off + 32]
                granted = snapshot[off + 32] == 1
                expires_at, off = read_be(snapshot, off + 33, 8)
                height, off = read_be(snapshot, off, 8)
                token_ref = snapshot[off:off + 32]
                off += 32
                record.grants[gid] = GrantEntry(granted, expires_at, height,
                                                token_ref)
            n_anchors, off = read_be(snapshot, off, 4)
            for _ in range(n_anchors):
                index, off = read_be(snapshot, off, 8)
                record.anchors[index] = snapshot[off:off + 32]
                off += 32
            state.streams[sid] = record
        state.audit_digest = snapshot[off:off + 32]
        audit_count, off = read_be(snapshot, off + 32, 4)
        if off != len(snapshot):
            raise ValueError("trailing bytes in checkpoint")
        state._restored_audit_count = audit_count
        return state


def replay(blocks: list[Block]) -> AclState:
    """Fold a block sequence from genesis into a fresh state."""
    state = AclState()
    state.apply_blocks(blocks)
    return state


def permission_at_height(blocks: list[Block], height: int, stream_id: bytes,
                         requester_id: bytes, at_ts: int = 0) -> str:
    """Point-in-time audit query: permission as of the end of ``height``.

    Replays the block prefix; intended for audit tooling, not hot paths.
    """
    state = replay([b for b in blocks if b.height <= height])
    return state.query_permission(stream_id, requester_id, at_ts)


def format_audit_event(event: AuditEvent) -> str:
    """One audit event as a stable tab-separated line for export."""
    op = OP_NAMES.get(event.op, f"op{event.op}")
    verdict = "accepted" if event.accepted else "rejected"
    return "\t".join([
        str(event.height), str(event.tx_index), op, verdict, event.reason,
        event.signer_id.hex()[:16], event.stream_id.hex()[:16],
        event.txid.hex()[:16],
    ])
