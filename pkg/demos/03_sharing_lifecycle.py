#!/usr/bin/env python3
"""Key handout, cheap rotation, and lazy revocation.

Epoch keys come from a hash chain: holding the chain state for epoch t
derives the keys for every epoch <= t, but never t+1.  The owner wraps
each epoch's state under a one-time public key and publishes exactly one
re-encryption token per service; services unwrap without the owner ever
shipping them raw keys.

The costs that matter:
  rotation  -> publish 1 object, no matter how many services (O(1));
  revocation-> retire the one-time key and re-token the survivors (O(n)).
A revoked service keeps opening the epochs it already had -- that is the
lazy part -- but the next epoch is dark to it forever.
"""
import random
from hashlib import sha256

from streamvault.errors import KeyExists, MissingKeyEpoch, NotFound
from streamvault.group import secp256k1
from streamvault.keyreg import KeyRegressionChain
from streamvault.keys import SigningKey
from streamvault.sharing import (
    ServiceMember,
    StreamSharing,
    publish_token,
    publish_wrapped,
    recover_state,
)


class KeyMatStore:
    """Append-only slot store: first write wins, rewrites are errors."""

    def __init__(self):
        self.slots: dict[bytes, bytes] = {}
        self.writes = 0

    def put(self, key: bytes, value: bytes) -> None:
        if key in self.slots:
            raise KeyExists(key.hex())
        self.slots[key] = value
        self.writes += 1

    def get(self, key: bytes) -> bytes:
        try:
            return self.slots[key]
        except KeyError:
            raise NotFound(key.hex()) from None


def main() -> None:
    rng = random.Random(1234)
    group = secp256k1()
    sid = sha256(b"demo-shared-stream").digest()
    key_chain = KeyRegressionChain(sha256(b"demo-share-keys").digest(),
                                   max_epochs=8)
    owner = StreamSharing(key_chain, group=group, rng=rng)
    store = KeyMatStore()

    services = {
        name: ServiceMember(signing=SigningKey.from_seed(sha256(name.encode()).digest()),
                            group=group, rng=rng)
        for name in ("analytics", "dashboard", "backup")
    }

    print("== bootstrap and grants ==")
    publish_wrapped(store.put, sid, owner.bootstrap())
    for name, member in services.items():
        token = owner.grant(member.id, member.public_key)
        publish_token(store.put, sid, owner.epoch, member.id, token)
    print(f"published {store.writes} objects "
          f"(1 wrapped epoch state + {len(services)} tokens)")

    for name, member in services.items():
        state = recover_state(store.get, member, sid, owner.epoch)
        k0 = member.epoch_key(state, owner.epoch, 0)
        assert k0 == key_chain.key(0)
        print(f"  {name}: recovered epoch-0 key {k0.hex()[:16]}")

    print("\n== rotation is O(1) ==")
    before = store.writes
    for _ in range(3):
        publish_wrapped(store.put, sid, owner.rotate())
    print(f"3 rotations -> {store.writes - before} published objects; "
          f"now at epoch {owner.epoch}")
    state = recover_state(store.get, services["backup"], sid, owner.epoch)
    keys_held = [services["backup"].epoch_key(state, owner.epoch, e).hex()[:12]
                 for e in range(owner.epoch + 1)]
    print(f"  backup unwinds one state into epochs 0..{owner.epoch}:",
          ", ".join(keys_held))

    print("\n== revoking dashboard is O(n) ==")
    before = store.writes
    artifacts = owner.revoke(services["dashboard"].id)
    publish_wrapped(store.put, sid, artifacts)
    print(f"revocation -> epoch {owner.epoch}, "
          f"{store.writes - before} published objects "
          f"(1 wrapped state + {len(artifacts.tokens)} fresh tokens)")

    for name in ("analytics", "backup"):
        state = recover_state(store.get, services[name], sid, owner.epoch)
        assert services[name].epoch_key(state, owner.epoch, owner.epoch) \
            == key_chain.key(owner.epoch)
        print(f"  {name}: still reads epoch {owner.epoch}")

    dashboard = services["dashboard"]
    try:
        recover_state(store.get, dashboard, sid, owner.epoch)
        print("  dashboard: STILL READS (bug!)")
    except MissingKeyEpoch as exc:
        print(f"  dashboard at epoch {owner.epoch} -> "
              f"MissingKeyEpoch: {exc}")

    old = recover_state(store.get, dashboard, sid, owner.epoch - 1)
    print(f"  dashboard still opens old epochs (lazy revocation): "
          f"epoch 0 key {dashboard.epoch_key(old, owner.epoch - 1, 0).hex()[:16]}")


if __name__ == "__main__":
    main()
