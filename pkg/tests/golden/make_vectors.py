"""Regenerate the frozen test vectors from first principles.

Everything in this script is computed with the standard library and the
``cryptography`` primitives directly -- it deliberately never imports the
package under test, so the JSON files it writes are an independent record
of what the formats and derivations must produce. Run from the repository
root:

    python3 tests/golden/make_vectors.py
"""

import hashlib
import json
import random
import zlib
from pathlib import Path

from cryptography.hazmat.primitives import serialization
from cryptography.hazmat.primitives.asymmetric.ed25519 import Ed25519PrivateKey
from cryptography.hazmat.primitives.ciphers.aead import AESGCM

OUT = Path(__file__).parent


def sha256(data: bytes) -> bytes:
    return hashlib.sha256(data).digest()


def be64(v: int) -> bytes:
    return v.to_bytes(8, "big")


def be32(v: int) -> bytes:
    return v.to_bytes(4, "big")


def be16(v: int) -> bytes:
    return v.to_bytes(2, "big")


# --- key regression -----------------------------------------------------------
# States run stm_N .. stm_0 with stm_{i-1} = SHA256(0x00 || stm_i), seeded by
# stm_N = SHA256(0x00 || seed); the epoch key is K_i = SHA256(0x01 || stm_i).

def keyreg_vectors() -> dict:
    seed = bytes(32)
    n = 8
    top_down = [sha256(b"\x00" + seed)]          # stm_N
    for _ in range(n):
        top_down.append(sha256(b"\x00" + top_down[-1]))
    states = list(reversed(top_down))            # states[i] == stm_i
    keys = [sha256(b"\x01" + s) for s in states]
    return {
        "seed": seed.hex(),
        "max_epochs": n,
        "states": [s.hex() for s in states],
        "keys": [k.hex() for k in keys],
    }


# --- sealed chunk ----------------------------------------------------------------
# SVC1 layout: magic(4) vercodec(1) stream_id(32) index(8) start(8) end(8)
# prev(32) epoch(4) count(4) | payload_len(4) payload sig(64).
# AEAD = AES-256-GCM, header as associated data, nonce =
# SHA256(stream_id || index_be64 || epoch_be32)[:12]. Signature = Ed25519
# over SHA256(header || payload).

def chunk_vector() -> dict:
    stream_id = sha256(b"golden-stream")
    owner_seed = bytes([5]) * 32
    private = Ed25519PrivateKey.from_private_bytes(owner_seed)
    owner_pub = private.public_key().public_bytes(
        serialization.Encoding.Raw, serialization.PublicFormat.Raw)
    owner_id = sha256(owner_pub)

    t0, delta, epoch = 1000, 60000, 3
    key = sha256(b"golden-chunk-key")
    prev = sha256(b"golden-prev")
    records = [(1000, b"20.50"), (31000, b"21.25"), (59999, b"21.00")]

    index = 0
    start, end = t0, t0 + delta
    header = (b"SVC1" + bytes([(1 << 4) | 1]) + stream_id + be64(index)
              + be64(start) + be64(end) + prev + be32(epoch)
              + be32(len(records)))
    assert len(header) == 101

    block = be32(len(records))
    for ts, value in records:
        block += be64(ts) + be32(len(value)) + value
    compressed = zlib.compress(block, 6)
    nonce = sha256(stream_id + be64(index) + be32(epoch))[:12]
    payload = AESGCM(key).encrypt(nonce, compressed, header)
    signature = private.sign(sha256(header + payload))
    chunk = header + be32(len(payload)) + payload + signature

    storage_key = sha256(stream_id + owner_id + sha256(be64(start)))
    return {
        "stream_id": stream_id.hex(),
        "owner_seed": owner_seed.hex(),
        "owner_pub": owner_pub.hex(),
        "owner_id": owner_id.hex(),
        "t0": t0, "delta": delta, "epoch": epoch,
        "key": key.hex(),
        "prev_hash": prev.hex(),
        "records": [[ts, v.decode()] for ts, v in records],
        "chunk": chunk.hex(),
        "digest": sha256(chunk).hex(),
        "storage_key": storage_key.hex(),
    }


# --- re-encryption over the brute-forceable group --------------------------------
# Toy Schnorr subgroup: p = 131267, q = 65633, g = 4, group id 2, elements
# encoded as 3 big-endian bytes. KDF mask = SHA256(0x02 || group_id ||
# encode(m_hat)). Scalars are drawn as rng.randrange(1, q) in call order.

P, Q, G = 131267, 65633, 4
GID = 2
ELEM = 3


def enc(e: int) -> bytes:
    return e.to_bytes(ELEM, "big")


def kid(pk: int) -> bytes:
    return sha256(bytes([GID]) + enc(pk))


def mask_bytes(m_hat: int) -> bytes:
    return sha256(b"\x02" + bytes([GID]) + enc(m_hat))


def seal(pk: int, secret: bytes, rng) -> tuple[int, int, bytes]:
    m_hat = pow(G, rng.randrange(1, Q), P)
    r = rng.randrange(1, Q)
    mask = m_hat * pow(pk, r, P) % P
    rand = pow(G, r, P)
    boxed = bytes(a ^ b for a, b in zip(secret, mask_bytes(m_hat)))
    return mask, rand, boxed


def open_box(sk: int, mask: int, rand: int, boxed: bytes) -> bytes:
    m_hat = mask * pow(pow(rand, sk, P), -1, P) % P
    return bytes(a ^ b for a, b in zip(boxed, mask_bytes(m_hat)))


def pre_vector() -> dict:
    rng = random.Random(1234)
    sk_a = rng.randrange(1, Q)
    pk_a = pow(G, sk_a, P)
    material = sha256(b"golden-material")

    mask, rand, boxed = seal(pk_a, material, rng)
    wrapped = (bytes([GID, 0]) + enc(mask) + enc(rand)
               + be16(len(boxed)) + boxed + kid(pk_a))

    sk_b = rng.randrange(1, Q)
    pk_b = pow(G, sk_b, P)
    e = rng.randrange(1, Q)
    scalar = sk_a * pow(e, -1, Q) % Q
    env = seal(pk_b, e.to_bytes(32, "big"), rng)
    env_bytes = enc(env[0]) + enc(env[1]) + be16(len(env[2])) + env[2]
    token = (bytes([GID, 1]) + scalar.to_bytes(32, "big") + kid(pk_a)
             + kid(pk_b) + env_bytes)

    rand2 = pow(rand, scalar, P)
    rewrapped = (bytes([GID, 1]) + enc(mask) + enc(rand2)
                 + be16(len(boxed)) + boxed + kid(pk_b) + env_bytes)

    # Self-check the algebra end to end before freezing anything.
    e_rec = int.from_bytes(open_box(sk_b, *env), "big")
    assert e_rec == e
    assert open_box(e_rec, mask, rand2, boxed) == material
    assert open_box(sk_a, mask, rand, boxed) == material
    # Brute-force discrete logs as a final independent confirmation.
    dlog = {pow(G, i, P): i for i in range(1, 2000)}
    if pk_a in dlog:
        assert dlog[pk_a] == sk_a

    return {
        "seed": 1234,
        "sk_a": sk_a, "pk_a": pk_a, "sk_b": sk_b, "pk_b": pk_b,
        "ephemeral": e, "scalar": scalar,
        "material": material.hex(),
        "wrapped": wrapped.hex(),
        "token": token.hex(),
        "rewrapped": rewrapped.hex(),
    }


# --- secp256k1 known answers --------------------------------------------------
# Affine double-and-add with modular inverses: a different algorithm from
# any production implementation that might use Jacobian coordinates.

CP = 2 ** 256 - 2 ** 32 - 977
CN = 0xFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFEBAAEDCE6AF48A03BBFD25E8CD0364141
CG = (0x79BE667EF9DCBBAC55A06295CE870B07029BFCDB2DCE28D959F2815B16F81798,
      0x483ADA7726A3C4655DA4FBFC0E1108A8FD17B448A68554199C47D08FFB10D4B8)


def aff_add(p1, p2):
    if p1 is None:
        return p2
    if p2 is None:
        return p1
    x1, y1 = p1
    x2, y2 = p2
    if x1 == x2 and (y1 + y2) % CP == 0:
        return None
    if p1 == p2:
        lam = (3 * x1 * x1) * pow(2 * y1, -1, CP) % CP
    else:
        lam = (y2 - y1) * pow(x2 - x1, -1, CP) % CP
    x3 = (lam * lam - x1 - x2) % CP
    return (x3, (lam * (x1 - x3) - y1) % CP)


def aff_mul(point, k):
    acc = None
    while k:
        if k & 1:
            acc = aff_add(acc, point)
        point = aff_add(point, point)
        k >>= 1
    return acc


def compress(point) -> str:
    x, y = point
    return (bytes([2 + (y & 1)]) + x.to_bytes(32, "big")).hex()


def curve_vectors() -> dict:
    assert (CG[1] ** 2 - CG[0] ** 3 - 7) % CP == 0
    assert aff_mul(CG, CN) is None  # order really annihilates the generator
    scalars = [1, 2, 3, 7, 0xDEADBEEF, CN - 1,
               0x1E240F5A2B3C4D5E6F708192A3B4C5D6E7F8091A2B3C4D5E6F708192A3B4C5]
    points = {str(k): compress(aff_mul(CG, k)) for k in scalars}
    return {"scalar_mult": points}


def main() -> None:
    vectors = {
        "keyreg": keyreg_vectors(),
        "chunk": chunk_vector(),
        "pre_toy": pre_vector(),
        "secp256k1": curve_vectors(),
    }
    for name, data in vectors.items():
        path = OUT / f"{name}.json"
        path.write_text(json.dumps(data, indent=2) + "\n")
        print(f"wrote {path}")


if __name__ == "__main__":
    main()
