#!/usr/bin/env python3
"""Permissions as a deterministic fold over a simulated chain.

Every permission change is a signed transaction.  A block simulator
orders and confirms them; folding the confirmed blocks yields the
authorization table that storage nodes consult, plus an append-only
audit log in which *rejected* attempts are first-class events.  Any
replica that folds the same blocks reaches bit-identical state.
"""
from streamvault.keys import SigningKey
from streamvault.ledger import (
    AclState,
    SimChain,
    derive_stream_id,
    format_audit_event,
    replay,
    tx_grant,
    tx_register,
    tx_revoke,
)


def main() -> None:
    owner = SigningKey.from_seed(b"\x01" * 32)
    analytics = SigningKey.from_seed(b"\x02" * 32)
    dashboard = SigningKey.from_seed(b"\x03" * 32)
    mallory = SigningKey.from_seed(b"\x66" * 32)

    chain = SimChain(block_interval_ms=1000, confirmations=1)
    t0, delta = 0, 60_000
    sid = derive_stream_id(owner.public_bytes, t0, delta, 0, b"ward-7-vitals")

    print("== submitting transactions ==")
    chain.submit(tx_register(owner, t0, delta, 0, b"ward-7-vitals"))
    chain.submit(tx_grant(owner, sid, analytics.id))
    chain.submit(tx_grant(owner, sid, dashboard.id, expires_at=500_000))
    # Two doomed attempts: a non-owner granting itself access, and a
    # revocation that fails to advance the key epoch.
    chain.submit(tx_grant(mallory, sid, mallory.id))
    chain.submit(tx_revoke(owner, sid, analytics.id, new_epoch=0))
    # The real revocation bumps the epoch.
    chain.submit(tx_revoke(owner, sid, analytics.id, new_epoch=1))
    chain.settle()

    state = AclState()
    state.apply_blocks(chain.get_blocks())

    print(f"{len(chain.get_blocks())} blocks folded, "
          f"state digest {state.digest().hex()[:16]}")

    print("\n== audit log (verdicts included) ==")
    for event in state.audit:
        print(" ", format_audit_event(event))

    print("\n== permission probes ==")
    for label, key, ts in [
        ("owner, any time", owner, 10_000),
        ("analytics (revoked)", analytics, 10_000),
        ("dashboard before its expiry", dashboard, 400_000),
        ("dashboard after its expiry", dashboard, 600_000),
        ("mallory", mallory, 10_000),
    ]:
        print(f"  is_granted[{label}] = "
              f"{state.is_granted(sid, key.id, ts)}")
    print(f"  current key epoch = {state.current_epoch(sid)}")

    print("\n== determinism ==")
    independent = replay(chain.get_blocks())
    print("independent replay digest equal: ",
          independent.digest() == state.digest())
    print("independent audit digest equal:  ",
          independent.audit_digest == state.audit_digest)


if __name__ == "__main__":
    main()
