"""Prime-order cyclic groups for the re-encryption scheme.

Two interchangeable instantiations share one duck-typed surface (exp, mul,
inv, encode, decode, random_scalar):

* ``secp256k1()`` - the production group. Points on the standard curve,
  pure-Python Jacobian arithmetic, elements serialized in 33-byte
  compressed canonical form. Scalar multiplication runs in ~1.5 ms, which
  is plenty for key-wrapping traffic (a handful of operations per epoch).

* ``toy_group()`` - a 65633-element Schnorr subgroup of Z_p*. Small enough
  that discrete logs can be brute-forced, which is exactly what the test
  suite does to check the re-encryption algebra against an independent
  oracle. Never use it for actual protection.

Scalars are integers mod the group order; the identity element never
appears in honest ciphertexts and ``encode`` refuses it.
"""

from __future__ import annotations

import secrets
from typing import Optional

# --- secp256k1 parameters (SEC 2). Self-checked in tests: generator on
# curve, prime field, n*G == identity.
_P = 2 ** 256 - 2 ** 32 - 977
_N = 0xFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFEBAAEDCE6AF48A03BBFD25E8CD0364141
_GX = 0x79BE667EF9DCBBAC55A06295CE870B07029BFCDB2DCE28D959F2815B16F81798
_GY = 0x483ADA7726A3C4655DA4FBFC0E1108A8FD17B448A68554199C47D08FFB10D4B8


def _rand_scalar(order: int, rng) -> int:
    if rng is None:
        return 1 + secrets.randbelow(order - 1)
    return rng.randrange(1, order)


class Secp256k1Group:
    """secp256k1 with affine tuples as elements; None is the identity."""

    name = "secp256k1"
    group_id = 1
    element_size = 33

    def __init__(self):
        self.order = _N
        self._gen = (_GX, _GY)

    # Jacobian helpers keep scalar multiplication inversion-free; a single
    # modular inverse converts back to affine at the end.

    @staticmethod
    def _jdbl(pt):
        if pt is None:
            return None
        x1, y1, z1 = pt
        a = x1 * x1 % _P
        b = y1 * y1 % _P
        c = b * b % _P
        d = 2 * ((x1 + b) * (x1 + b) - a - c) % _P
        e = 3 * a % _P
        f = e * e % _P
        x3 = (f - 2 * d) % _P
        y3 = (e * (d - x3) - 8 * c) % _P
        z3 = 2 * y1 * z1 % _P
        return (x3, y3, z3)

    @classmethod
    def _jadd(cls, p1, p2):
        if p1 is None:
            return p2
        if p2 is None:
            return p1
        x1, y1, z1 = p1
        x2, y2, z2 = p2
        z1z1 = z1 * z1 % _P
        z2z2 = z2 * z2 % _P
        u1 = x1 * z2z2 % _P
        u2 = x2 * z1z1 % _P
        s1 = y1 * z2 * z2z2 % _P
        s2 = y2 * z1 * z1z1 % _P
        if u1 == u2:
            if s1 != s2:
                return None
            return cls._jdbl(p1)
        h = (u2 - u1) % _P
        i = 4 * h * h % _P
        j = h * i % _P
        r = 2 * (s2 - s1) % _P
        v = u1 * i % _P
        x3 = (r * r - j - 2 * v) % _P
        y3 = (r * (v - x3) - 2 * s1 * j) % _P
        z3 = 2 * z1 * z2 * h % _P
        return (x3, y3, z3)

    @staticmethod
    def _to_affine(pt):
        if pt is None:
            return None
        x, y, z = pt
        zi = pow(z, -1, _P)
        zi2 = zi * zi % _P
        return (x * zi2 % _P, y * zi2 * zi % _P)

    def generator(self):
        return self._gen

    def exp(self, base, k: int):
        """base^k in multiplicative notation (scalar multiplication)."""
        k %= self.order
        if base is None or k == 0:
            return None
        acc = None
        add = (base[0], base[1], 1)
        while k:
            if k & 1:
                acc = self._jadd(acc, add)
            add = self._jdbl(add)
            k >>= 1
        return self._to_affine(acc)

    def mul(self, a, b):
        if a is None:
            return b
        if b is None:
            return a
        return self._to_affine(self._jadd((a[0], a[1], 1), (b[0], b[1], 1)))

    def inv(self, a):
        if a is None:
            return None
        return (a[0], (-a[1]) % _P)

    def random_scalar(self, rng=None) -> int:
        return _rand_scalar(self.order, rng)

    def encode(self, element) -> bytes:
        """Compressed canonical form: parity prefix plus x coordinate."""
        if element is None:
            raise ValueError("cannot encode the identity element")
        x, y = element
        return bytes([2 + (y & 1)]) + x.to_bytes(32, "big")

    def decode(self, data: bytes):
        if len(data) != 33 or data[0] not in (2, 3):
            raise ValueError("not a compressed secp256k1 point")
        x = int.from_bytes(data[1:], "big")
        if x >= _P:
            raise ValueError("x coordinate out of range")
        rhs = (x * x * x + 7) % _P
        y = pow(rhs, (_P + 1) // 4, _P)  # p = 3 mod 4
        if y * y % _P != rhs:
            raise ValueError("point not on curve")
        if (y & 1) != (data[0] & 1):
            y = _P - y
        return (x, y)


class SchnorrGroup:
    """Prime-order subgroup of Z_p*, elements as plain integers."""

    def __init__(self, p: int, q: int, g: int, name: str, group_id: int):
        self.p = p
        self.order = q
        self._gen = g
        self.name = name
        self.group_id = group_id
        self.element_size = (p.bit_length() + 7) // 8

    def generator(self):
        return self._gen

    def exp(self, base: int, k: int) -> int:
        return pow(base, k % self.order, self.p)

    def mul(self, a: int, b: int) -> int:
        return a * b % self.p

    def inv(self, a: int) -> int:
        return pow(a, -1, self.p)

    def random_scalar(self, rng=None) -> int:
        return _rand_scalar(self.order, rng)

    def encode(self, element: int) -> bytes:
        if element == 1:
            raise ValueError("cannot encode the identity element")
        return element.to_bytes(self.element_size, "big")

    def decode(self, data: bytes) -> int:
        if len(data) != self.element_size:
            raise ValueError("wrong element width")
        e = int.from_bytes(data, "big")
        if not 1 <= e < self.p or pow(e, self.order, self.p) != 1:
            raise ValueError("not a subgroup element")
        return e


# q = 65633 is the first Sophie Germain prime above 2^16; p = 2q + 1.
# 4 = 2^2 generates the order-q subgroup of quadratic residues.
_TOY = SchnorrGroup(p=131267, q=65633, g=4, name="toy", group_id=2)
_SECP = Secp256k1Group()

_BY_NAME = {_SECP.name: _SECP, _TOY.name: _TOY}
_BY_ID = {_SECP.group_id: _SECP, _TOY.group_id: _TOY}


def secp256k1() -> Secp256k1Group:
    return _SECP


def toy_group() -> SchnorrGroup:
    return _TOY


def by_name(name: str):
    try:
        return _BY_NAME[name]
    except KeyError:
        raise ValueError(f"unknown group {name!r}") from None


def by_id(group_id: int):
    try:
        return _BY_ID[group_id]
    except KeyError:
        raise ValueError(f"unknown group id {group_id}") from None
