"""Append-only storage nodes that enforce ledger permissions on reads.

A node stores opaque values under 32-byte keys. Writes are owner-signed
and append-only: re-putting a key with identical bytes is idempotent,
anything else is rejected. Every key is tagged with the stream it belongs
to and an access class:

* PUBLIC    -- readable by anyone (used for key-material artifacts, which
               are themselves encrypted to their recipients);
* PROTECTED -- readable only by the stream owner or a principal holding an
               active, unexpired grant in the folded ledger state.

Protected reads use a challenge-response: the node hands out a one-time
nonce, the reader signs (nonce, node id, key) with its Ed25519 key, and
the node checks the signature, a 60-second freshness window, single use,
and finally the ledger grant for the signer's pseudo-identity. Every
protected read attempt -- allowed or denied -- is appended to the node's
access-decision log, so enforcement itself is auditable.

The node fails closed: with enforcement on and no ledger state attached,
protected reads are denied.

A small length-prefixed binary protocol (``serve`` / ``StorageClient``)
exposes the same operations over TCP; the wire status codes map onto the
library exceptions.
"""

from __future__ import annotations

import secrets
import socket
import socketserver
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterator, Optional, Protocol

from . import keys
from .errors import (
    KeyExists,
    LedgerUnavailable,
    NotFound,
    NotStreamOwner,
    PermissionDenied,
    StaleChallenge,
    StorageUnavailable,
    ValueTooLarge,
)
from .hashing import ZERO32, be32, be64, read_be, sha256
from .ledger import AclState

MAX_VALUE_SIZE = 4 * 1024 * 1024
CHALLENGE_TTL_MS = 60_000

ACCESS_PUBLIC = 0
ACCESS_PROTECTED = 1


def _now_ms() -> int:
    return int(time.time() * 1000)


# --- backends ----------------------------------------------------------------

class KvBackend(Protocol):
    def put(self, key: bytes, value: bytes) -> None: ...
    def get(self, key: bytes) -> Optional[bytes]: ...
    def has(self, key: bytes) -> bool: ...
    def keys(self) -> Iterator[bytes]: ...
    def scan(self, prefix: bytes) -> Iterator[bytes]: ...


class MemoryBackend:
    def __init__(self):
        self._data: dict[bytes, bytes] = {}

    def put(self, key: bytes, value: bytes) -> None:
        self._data[key] = value

    def get(self, key: bytes) -> Optional[bytes]:
        return self._data.get(key)

    def has(self, key: bytes) -> bool:
        return key in self._data

    def keys(self) -> Iterator[bytes]:
        return iter(list(self._data))

    def scan(self, prefix: bytes) -> Iterator[bytes]:
        return (k for k in sorted(self._data) if k.startswith(prefix))

    def __len__(self) -> int:
        return len(self._data)


class DiskBackend:
    """One file per key under a directory; key hex as the file name."""

    def __init__(self, root: str | Path):
        self.root = Path(root)
        try:
            self.root.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise StorageUnavailable(str(exc)) from exc

    def _path(self, key: bytes) -> Path:
        return self.root / key.hex()

    def put(self, key: bytes, value: bytes) -> None:
        try:
            tmp = self._path(key).with_suffix(".tmp")
            tmp.write_bytes(value)
            tmp.replace(self._path(key))
        except OSError as exc:
            raise StorageUnavailable(str(exc)) from exc

    def get(self, key: bytes) -> Optional[bytes]:
        path = self._path(key)
        try:
            return path.read_bytes() if path.exists() else None
        except OSError as exc:
            raise StorageUnavailable(str(exc)) from exc

    def has(self, key: bytes) -> bool:
        return self._path(key).exists()

    def keys(self) -> Iterator[bytes]:
        try:
            names = sorted(p.name for p in self.root.iterdir())
        except OSError as exc:
            raise StorageUnavailable(str(exc)) from exc
        for name in names:
            if len(name) == 64:
                yield bytes.fromhex(name)

    def scan(self, prefix: bytes) -> Iterator[bytes]:
        return (k for k in self.keys() if k.startswith(prefix))


# --- node ---------------------------------------------------------------------

@dataclass(frozen=True)
class Challenge:
    nonce: bytes
    node_id: bytes
    issued_at: int

    def to_bytes(self) -> bytes:
        return self.nonce + self.node_id + be64(self.issued_at)

    @classmethod
    def from_bytes(cls, raw: bytes) -> "Challenge":
        return cls(raw[:32], raw[32:64], int.from_bytes(raw[64:72], "big"))


@dataclass(frozen=True)
class AccessDecision:
    ts: int
    key: bytes
    stream_id: bytes
    principal_id: bytes
    allowed: bool
    reason: str


def read_request_message(challenge: Challenge, key: bytes) -> bytes:
    """What a reader signs to redeem a challenge for one key."""
    return sha256(b"storage-read" + challenge.to_bytes() + key)


def put_message(key: bytes, stream_id: bytes, access: int,
                value: bytes) -> bytes:
    """What a writer signs to authorize one put."""
    return sha256(b"storage-put" + key + stream_id + bytes([access])
                  + sha256(value))


def keymat_key(stream_id: bytes, epoch: int, grantee_id: bytes) -> bytes:
    """Storage key for a key-material object (wrapped key or token).

    ``grantee_id`` is the pseudo-identity of whoever the object is
    encrypted to: a service identity for re-encryption tokens, or the
    one-time public key's identity for the epoch's wrapped key.
    """
    return sha256(stream_id + b"keymat" + be32(epoch) + grantee_id)


class StorageNode:
    """One storage node: an append-only KV plus the enforcement gate."""

    def __init__(self, node_key: keys.SigningKey,
                 backend: Optional[KvBackend] = None,
                 state: Optional[AclState] = None,
                 clock: Callable[[], int] = _now_ms,
                 nonce_source: Optional[Callable[[], bytes]] = None,
                 enforce: bool = True, ledger_check: bool = True):
        """``enforce=False`` turns the node into a bare key-value store (the
        "malicious node" configuration for containment tests);
        ``ledger_check=False`` keeps the full authentication path but skips
        the ACL consult, isolating its cost for the overhead study."""
        self.node_key = node_key
        self.node_id = node_key.id
        self.backend = backend if backend is not None else MemoryBackend()
        self.state = state
        self.clock = clock
        self.enforce = enforce
        self.ledger_check = ledger_check
        self._nonce_source = nonce_source or (lambda: secrets.token_bytes(32))
        self._pending: dict[bytes, Challenge] = {}
        self._meta: dict[bytes, tuple[bytes, int]] = {}  # key -> (stream, access)
        self.decisions: list[AccessDecision] = []
        self._lock = threading.Lock()

    # -- writes -----------------------------------------------------------

    def put(self, key: bytes, value: bytes, stream_id: bytes,
            access: int, writer_pub: bytes, signature: bytes) -> None:
        if len(value) > MAX_VALUE_SIZE:
            raise ValueTooLarge(f"{len(value)} bytes exceeds {MAX_VALUE_SIZE}")
        if not keys.verify(writer_pub, signature,
                           put_message(key, stream_id, access, value)):
            raise PermissionDenied("put signature does not verify")
        if self.enforce and self.state is not None:
            record = self.state.streams.get(stream_id)
            if record is not None and record.owner_id != keys.pseudo_id(writer_pub):
                raise NotStreamOwner("writer is not the registered stream owner")
        with self._lock:
            existing = self.backend.get(key)
            if existing is not None:
                if existing == value:
                    return
                raise KeyExists(key.hex())
            self.backend.put(key, value)
            self._meta[key] = (stream_id, access)

    def owner_put(self, key: bytes, value: bytes, stream_id: bytes,
                  access: int, writer: keys.SigningKey) -> None:
        sig = writer.sign(put_message(key, stream_id, access, value))
        self.put(key, value, stream_id, access, writer.public_bytes, sig)

    # -- reads ------------------------------------------------------------

    def meta_for(self, key: bytes) -> Optional[tuple[bytes, int]]:
        """(stream_id, access class) recorded for a stored key, if any."""
        return self._meta.get(key)

    def export_meta(self) -> dict[bytes, tuple[bytes, int]]:
        """Snapshot of per-key (stream, access) records for persistence."""
        with self._lock:
            return dict(self._meta)

    def import_meta(self, meta: dict[bytes, tuple[bytes, int]]) -> None:
        """Reload per-key records persisted by a previous session."""
        with self._lock:
            self._meta.update(meta)

    def issue_challenge(self) -> Challenge:
        with self._lock:
            challenge = Challenge(self._nonce_source(), self.node_id,
                                  self.clock())
            self._pending[challenge.nonce] = challenge
            return challenge

    def _decide(self, key: bytes, stream_id: bytes, principal: bytes,
                allowed: bool, reason: str) -> None:
        with self._lock:
            self.decisions.append(AccessDecision(
                self.clock(), key, stream_id, principal, allowed, reason))

    def get_public(self, key: bytes) -> bytes:
        """Unauthenticated read; only PUBLIC keys are served."""
        value = self.backend.get(key)
        if value is None or key not in self._meta:
            raise NotFound(key.hex())
        stream_id, access = self._meta[key]
        if self.enforce and access != ACCESS_PUBLIC:
            self._decide(key, stream_id, ZERO32, False, "not-public")
            raise PermissionDenied("key requires an authenticated read")
        return value

    def get(self, key: bytes, reader_pub: bytes, nonce: bytes,
            signature: bytes) -> bytes:
        """Authenticated read: redeem a challenge, then pass the ledger gate."""
        principal = keys.pseudo_id(reader_pub)
        value = self.backend.get(key)
        stream_id, access = self._meta.get(key, (ZERO32, ACCESS_PROTECTED))
        if not self.enforce:
            if value is None:
                raise NotFound(key.hex())
            return value

        challenge = self._pending.pop(nonce, None)
        if challenge is None:
            self._decide(key, stream_id, principal, False, "unknown-challenge")
            raise StaleChallenge("challenge unknown or already used")
        if self.clock() - challenge.issued_at > CHALLENGE_TTL_MS:
            self._decide(key, stream_id, principal, False, "expired-challenge")
            raise StaleChallenge("challenge expired")
        if not keys.verify(reader_pub, signature,
                           read_request_message(challenge, key)):
            self._decide(key, stream_id, principal, False, "bad-signature")
            raise PermissionDenied("read request signature does not verify")

        if value is None:
            self._decide(key, stream_id, principal, False, "not-found")
            raise NotFound(key.hex())
        if access == ACCESS_PUBLIC:
            self._decide(key, stream_id, principal, True, "public")
            return value
        if not self.ledger_check:
            self._decide(key, stream_id, principal, True, "no-check")
            return value
        if self.state is None:
            self._decide(key, stream_id, principal, False, "ledger-unavailable")
            raise LedgerUnavailable("no ledger state attached; failing closed")
        if not self.state.is_granted(stream_id, principal, self.clock()):
            self._decide(key, stream_id, principal, False, "no-active-grant")
            raise PermissionDenied("no active grant for principal")
        self._decide(key, stream_id, principal, True, "granted")
        return value

    def read_as(self, key: bytes, reader: keys.SigningKey) -> bytes:
        """Convenience: full challenge round-trip against this node."""
        challenge = self.issue_challenge()
        sig = reader.sign(read_request_message(challenge, key))
        return self.get(key, reader.public_bytes, challenge.nonce, sig)


# --- wire protocol -------------------------------------------------------------

VERB_CHALLENGE = 1
VERB_PUT = 2
VERB_GET = 3
VERB_GET_PUBLIC = 4

ST_OK = 0
ST_DENIED = 1
ST_NOT_FOUND = 2
ST_BAD_REQUEST = 3
ST_EXISTS = 4
ST_TOO_LARGE = 5
ST_STALE = 6

_STATUS_ERRORS = {
    ST_DENIED: PermissionDenied,
    ST_NOT_FOUND: NotFound,
    ST_EXISTS: KeyExists,
    ST_TOO_LARGE: ValueTooLarge,
    ST_STALE: StaleChallenge,
}


def send_frame(sock: socket.socket, body: bytes) -> None:
    sock.sendall(be32(len(body)) + body)


def recv_frame(sock: socket.socket) -> bytes:
    header = _recv_exact(sock, 4)
    length, _ = read_be(header, 0, 4)
    if length > MAX_VALUE_SIZE + 4096:
        raise ValueError("oversized frame")
    return _recv_exact(sock, length)


def _recv_exact(sock: socket.socket, n: int) -> bytes:
    buf = b""
    while len(buf) < n:
        part = sock.recv(n - len(buf))
        if not part:
            raise ConnectionError("peer closed connection")
        buf += part
    return buf


def handle_frame(node: StorageNode, body: bytes) -> bytes:
    """Dispatch one request frame against a node; returns the response frame."""
    try:
        verb = body[0]
        if verb == VERB_CHALLENGE:
            return bytes([ST_OK]) + node.issue_challenge().to_bytes()
        if verb == VERB_PUT:
            key, stream_id = body[1:33], body[33:65]
            access = body[65]
            writer_pub = body[66:98]
            signature = body[98:162]
            node.put(key, body[162:], stream_id, access, writer_pub, signature)
            return bytes([ST_OK])
        if verb == VERB_GET:
            key, reader_pub = body[1:33], body[33:65]
            nonce, signature = body[65:97], body[97:161]
            return bytes([ST_OK]) + node.get(key, reader_pub, nonce, signature)
        if verb == VERB_GET_PUBLIC:
            return bytes([ST_OK]) + node.get_public(body[1:33])
        return bytes([ST_BAD_REQUEST]) + b"unknown verb"
    except PermissionDenied as exc:
        return bytes([ST_DENIED]) + str(exc).encode()
    except LedgerUnavailable as exc:
        return bytes([ST_DENIED]) + str(exc).encode()
    except NotFound as exc:
        return bytes([ST_NOT_FOUND]) + str(exc).encode()
    except KeyExists as exc:
        return bytes([ST_EXISTS]) + str(exc).encode()
    except ValueTooLarge as exc:
        return bytes([ST_TOO_LARGE]) + str(exc).encode()
    except StaleChallenge as exc:
        return bytes([ST_STALE]) + str(exc).encode()
    except (IndexError, ValueError) as exc:
        return bytes([ST_BAD_REQUEST]) + str(exc).encode()


def serve(node: StorageNode, host: str = "127.0.0.1",
          port: int = 0) -> tuple[socketserver.ThreadingTCPServer, threading.Thread]:
    """Serve a node over TCP in a daemon thread; returns (server, thread)."""

    class Handler(socketserver.BaseRequestHandler):
        def handle(self):
            try:
                while True:
                    body = recv_frame(self.request)
                    send_frame(self.request, handle_frame(node, body))
            except (ConnectionError, OSError):
                return

    class Server(socketserver.ThreadingTCPServer):
        allow_reuse_address = True
        daemon_threads = True

    server = Server((host, port), Handler)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    return server, thread


class StorageClient:
    """Client for the TCP protocol, mirroring the StorageNode API."""

    def __init__(self, host: str, port: int, timeout: float = 10.0):
        self.sock = socket.create_connection((host, port), timeout=timeout)

    def close(self) -> None:
        self.sock.close()

    def __enter__(self) -> "StorageClient":
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    def _call(self, body: bytes) -> bytes:
        send_frame(self.sock, body)
        resp = recv_frame(self.sock)
        status = resp[0]
        if status == ST_OK:
            return resp[1:]
        error = _STATUS_ERRORS.get(status, ValueError)
        raise error(resp[1:].decode(errors="replace"))

    def challenge(self) -> Challenge:
        return Challenge.from_bytes(self._call(bytes([VERB_CHALLENGE])))

    def put(self, key: bytes, value: bytes, stream_id: bytes, access: int,
            writer: keys.SigningKey) -> None:
        sig = writer.sign(put_message(key, stream_id, access, value))
        self._call(bytes([VERB_PUT]) + key + stream_id + bytes([access])
                   + writer.public_bytes + sig + value)

    def get(self, key: bytes, reader: keys.SigningKey) -> bytes:
        challenge = self.challenge()
        sig = reader.sign(read_request_message(challenge, key))
        return self._call(bytes([VERB_GET]) + key + reader.public_bytes
                          + challenge.nonce + sig)

    def get_public(self, key: bytes) -> bytes:
        return self._call(bytes([VERB_GET_PUBLIC]) + key)
