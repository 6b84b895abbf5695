#!/usr/bin/env python3
"""Seal a sensor stream into chained chunks, then try to break it.

Records are grouped into fixed time windows; each window is compressed,
encrypted (the plaintext header rides along as authenticated associated
data), signed by the owner, and linked to the digest of the previous
chunk.  Publishing one final digest -- the anchor -- makes the whole
history tamper-evident: nothing can be altered, reordered, or dropped
without breaking either a seal or the hash chain.
"""
from hashlib import sha256

from streamvault import (
    DataRecord,
    SealedChunk,
    StreamKey,
    StreamMeta,
    build_chunk,
    open_chunk,
    verify_chain,
)
from streamvault.errors import StreamVaultError
from streamvault.hashing import ZERO32
from streamvault.keyreg import KeyRegressionChain
from streamvault.keys import SigningKey


def main() -> None:
    owner = SigningKey.from_seed(sha256(b"demo-owner").digest())
    key_chain = KeyRegressionChain(sha256(b"demo-keys").digest(), max_epochs=4)
    meta = StreamMeta(
        stream_id=sha256(b"demo-stream").digest(),
        owner_id=owner.id,
        t0=0,
        delta=10_000,  # 10-second windows
    )
    stream_key = StreamKey(0, key_chain.key(0))

    print("== sealing ==")
    chunks: list[SealedChunk] = []
    prev = ZERO32
    for index in range(5):
        start = meta.t0 + index * meta.delta
        records = [DataRecord(start + i * 1000, f"{20 + index}.{i:02d}".encode())
                   for i in range(10)]
        chunk = build_chunk(meta, records, prev, stream_key, owner)
        prev = chunk.digest()
        chunks.append(chunk)
        raw_len = sum(len(r.value) + 8 for r in records)
        print(f"chunk {index}: {len(records)} records, "
              f"{raw_len}B raw -> {len(chunk.payload)}B sealed payload, "
              f"digest {chunk.digest().hex()[:16]}")

    anchor = chunks[-1].digest()
    print(f"\nanchor (what the ledger would pin): {anchor.hex()[:16]}")
    print("chain verifies:", verify_chain(chunks, anchor))

    print("\n== round trip ==")
    records = open_chunk(chunks[2], stream_key, owner.public_bytes)
    print(f"chunk 2 opens to {len(records)} records, first =",
          records[0].timestamp, records[0].value.decode())

    print("\n== tampering ==")
    raw = bytearray(chunks[2].to_bytes())
    raw[len(raw) // 2] ^= 0x01  # flip one payload bit
    try:
        open_chunk(SealedChunk.from_bytes(bytes(raw)), stream_key,
                   owner.public_bytes)
        print("payload bit flip: NOT DETECTED (bug!)")
    except StreamVaultError as exc:
        print(f"payload bit flip -> {type(exc).__name__}: {exc}")

    reordered = [chunks[0], chunks[2], chunks[1], chunks[3], chunks[4]]
    print("reordered chunks  -> verify_chain:",
          verify_chain(reordered, anchor))
    print("truncated history -> verify_chain:",
          verify_chain(chunks[:-1], anchor))

    forged = build_chunk(meta, [DataRecord(25_000, b"99.99")],
                         chunks[1].digest(), stream_key, owner)
    spliced = chunks[:2] + [forged] + chunks[3:]
    print("spliced forgery   -> verify_chain:",
          verify_chain(spliced, anchor))
    print("\nEvery alteration needs the anchor to move -- and the anchor "
          "lives on the ledger.")


if __name__ == "__main__":
    main()
