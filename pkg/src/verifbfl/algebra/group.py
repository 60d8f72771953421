"""Prime-order groups used for vector commitments.

Two instantiations share one duck-typed interface:

* :class:`Secp256k1` -- short-Weierstrass curve, ~128-bit DLOG security.
  Points are affine ``(x, y)`` tuples, the identity is ``None``.
* :class:`SchnorrGroup` -- order-p subgroup of Z_q^*.  INSECURE-TEST only:
  small orders make exhaustive property tests possible.  Elements are ints,
  the identity is ``1``.

Group law is written additively in method names (``add``, ``mul``) for both.
"""
from __future__ import annotations

import hashlib

from verifbfl.errors import DecodeError


def _h(*parts: bytes) -> bytes:
    m = hashlib.sha256()
    for part in parts:
        m.update(len(part).to_bytes(4, "little"))
        m.update(part)
    return m.digest()


# ---------------------------------------------------------------------------
# secp256k1
# ---------------------------------------------------------------------------

_P = 2**256 - 2**32 - 977
_N = 0xFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFEBAAEDCE6AF48A03BBFD25E8CD0364141
_GX = 0x79BE667EF9DCBBAC55A06295CE870B07029BFCDB2DCE28D959F2815B16F81798
_GY = 0x483ADA7726A3C4655DA4FBFC0E1108A8FD17B448A68554199C47D08FFB10D4B8

_JINF = (1, 1, 0)


def _jdbl(p):
    X, Y, Z = p
    if Z == 0 or Y == 0:
        return _JINF
    P = _P
    YY = Y * Y % P
    S = 4 * X * YY % P
    M = 3 * X * X % P
    X3 = (M * M - 2 * S) % P
    return X3, (M * (S - X3) - 8 * YY * YY) % P, 2 * Y * Z % P


def _jadd(p, q):
    X1, Y1, Z1 = p
    X2, Y2, Z2 = q
    if Z1 == 0:
        return q
    if Z2 == 0:
        return p
    P = _P
    Z1Z1 = Z1 * Z1 % P
    Z2Z2 = Z2 * Z2 % P
    U1 = X1 * Z2Z2 % P
    U2 = X2 * Z1Z1 % P
    S1 = Y1 * Z2 * Z2Z2 % P
    S2 = Y2 * Z1 * Z1Z1 % P
    H = (U2 - U1) % P
    R = (S2 - S1) % P
    if H == 0:
        return _jdbl(p) if R == 0 else _JINF
    HH = H * H % P
    HHH = H * HH % P
    V = U1 * HH
    X3 = (R * R - HHH - 2 * V) % P
    return X3, (R * (V - X3) - S1 * HHH) % P, Z1 * Z2 * H % P


def _jmadd(p, x2, y2):
    """Jacobian + affine."""
    X1, Y1, Z1 = p
    if Z1 == 0:
        return (x2, y2, 1)
    P = _P
    Z1Z1 = Z1 * Z1 % P
    U2 = x2 * Z1Z1 % P
    S2 = y2 * Z1 * Z1Z1 % P
    H = (U2 - X1) % P
    R = (S2 - Y1) % P
    if H == 0:
        return _jdbl(p) if R == 0 else _JINF
    HH = H * H % P
    HHH = H * HH % P
    V = X1 * HH
    X3 = (R * R - HHH - 2 * V) % P
    return X3, (R * (V - X3) - Y1 * HHH) % P, Z1 * H % P


def _to_affine(p):
    X, Y, Z = p
    if Z == 0:
        return None
    zi = pow(Z, -1, _P)
    zi2 = zi * zi % _P
    return X * zi2 % _P, Y * zi2 * zi % _P


def _aff_add(a, b):
    if a is None:
        return b
    if b is None:
        return a
    x1, y1 = a
    x2, y2 = b
    if x1 == x2:
        if (y1 + y2) % _P == 0:
            return None
        lam = 3 * x1 * x1 * pow(2 * y1, -1, _P) % _P
    else:
        lam = (y2 - y1) * pow(x2 - x1, -1, _P) % _P
    x3 = (lam * lam - x1 - x2) % _P
    return x3, (lam * (x1 - x3) - y1) % _P


def _batch_sum_lists(lists):
    """Sum each list of affine points, batching inversions across lists.

    Each pass pairs neighbours inside every list, so the number of passes is
    logarithmic in the longest list.
    """
    P = _P
    while True:
        pairs = []
        nxt = []
        for li, pts in enumerate(lists):
            n = len(pts)
            if n <= 1:
                nxt.append(pts)
                continue
            nxt.append([pts[-1]] if n & 1 else [])
            for k in range(0, n - 1, 2):
                pairs.append((li, pts[k], pts[k + 1]))
        if not pairs:
            return [pts[0] if pts else None for pts in lists]
        dens = [((b[0] - a[0]) % P) or 1 for _, a, b in pairs]
        k = len(dens)
        prefix = [0] * k
        acc = 1
        for i in range(k):
            prefix[i] = acc
            acc = acc * dens[i] % P
        inv = pow(acc, -1, P)
        for i in range(k - 1, -1, -1):
            li, a, b = pairs[i]
            iv = inv * prefix[i] % P
            inv = inv * dens[i] % P
            x1, y1 = a
            x2, y2 = b
            if x1 == x2:
                r = _aff_add(a, b)
                if r is None:
                    continue
            else:
                lam = (y2 - y1) * iv % P
                x3 = (lam * lam - x1 - x2) % P
                r = (x3, (lam * (x1 - x3) - y1) % P)
            nxt[li].append(r)
        lists = nxt


def _batch_double(points, times):
    """Double every affine point ``times`` times (no identities expected)."""
    P = _P
    pts = list(points)
    for _ in range(times):
        dens = [2 * y % P for _, y in pts]
        k = len(dens)
        prefix = [0] * k
        acc = 1
        for i in range(k):
            prefix[i] = acc
            acc = acc * dens[i] % P
        inv = pow(acc, -1, P)
        out = [None] * k
        for i in range(k - 1, -1, -1):
            iv = inv * prefix[i] % P
            inv = inv * dens[i] % P
            x, y = pts[i]
            lam = 3 * x * x * iv % P
            x3 = (lam * lam - 2 * x) % P
            out[i] = (x3, (lam * (x - x3) - y) % P)
        pts = out
    return pts


class FixedBaseTable:
    """Lazily built tables ``rows[j][i] = 2^(c*j) * bases[i]``."""

    def __init__(self, bases, window: int = 12):
        if any(b is None for b in bases):
            raise ValueError("identity in fixed-base table")
        self.window = window
        self.rows = [list(bases)]

    def ensure(self, nwindows: int):
        while len(self.rows) < nwindows:
            self.rows.append(_batch_double(self.rows[-1], self.window))


class Secp256k1:
    name = "secp256k1"
    insecure = False
    order = _N
    identity = None
    element_width = 33
    generator = (_GX, _GY)

    def __repr__(self):
        return "Secp256k1()"

    def is_identity(self, a) -> bool:
        return a is None

    def add(self, a, b):
        return _aff_add(a, b)

    def neg(self, a):
        if a is None:
            return None
        return a[0], (-a[1]) % _P

    def sub(self, a, b):
        return _aff_add(a, self.neg(b))

    def mul(self, a, k: int):
        k %= _N
        if a is None or k == 0:
            return None
        if k > _N // 2:
            k = _N - k
            a = self.neg(a)
        r = _JINF
        x, y = a
        for bit in bin(k)[2:]:
            r = _jdbl(r)
            if bit == "1":
                r = _jmadd(r, x, y)
        return _to_affine(r)

    def is_on_curve(self, a) -> bool:
        if a is None:
            return True
        x, y = a
        return 0 <= x < _P and 0 <= y < _P and (y * y - x * x * x - 7) % _P == 0

    def encode(self, a) -> bytes:
        if a is None:
            return bytes(33)
        x, y = a
        return bytes([2 | (y & 1)]) + x.to_bytes(32, "big")

    def decode(self, data: bytes):
        if len(data) != 33:
            raise DecodeError("bad point width")
        tag = data[0]
        if tag == 0:
            if any(data):
                raise DecodeError("non-canonical identity")
            return None
        if tag not in (2, 3):
            raise DecodeError("bad point tag")
        x = int.from_bytes(data[1:], "big")
        if x >= _P:
            raise DecodeError("point x out of range")
        rhs = (x * x * x + 7) % _P
        y = pow(rhs, (_P + 1) // 4, _P)
        if y * y % _P != rhs:
            raise DecodeError("point not on curve")
        if (y & 1) != (tag & 1):
            y = _P - y
        return x, y

    def hash_to_group(self, *parts: bytes):
        """Try-and-increment hash onto the curve (even-y representative)."""
        ctr = 0
        while True:
            d = _h(b"verifbfl/h2c/secp256k1", *parts, ctr.to_bytes(4, "little"))
            d2 = _h(d)
            x = int.from_bytes(d + d2, "big") % _P
            rhs = (x * x * x + 7) % _P
            y = pow(rhs, (_P + 1) // 4, _P)
            if y * y % _P == rhs:
                if y & 1:
                    y = _P - y
                return x, y
            ctr += 1

    def precompute(self, bases) -> FixedBaseTable:
        return FixedBaseTable(bases)

    def msm(self, scalars, bases, table: FixedBaseTable | None = None):
        """sum_i scalars[i] * bases[i]; signed-digit bucket method."""
        n = len(scalars)
        if n == 0:
            return None
        if table is None:
            if n <= 16:
                acc = None
                for s, b in zip(scalars, bases):
                    acc = _aff_add(acc, self.mul(b, s))
                return acc
            table = FixedBaseTable(bases, window=8 if n < 512 else 12)
        c = table.window
        mask = (1 << c) - 1
        half = _N // 2
        mags = []
        maxbits = 0
        for s in scalars:
            s %= _N
            if s > half:
                mags.append((_N - s, True))
                s = _N - s
            else:
                mags.append((s, False))
            if s.bit_length() > maxbits:
                maxbits = s.bit_length()
        if maxbits == 0:
            return None
        nwin = (maxbits + c - 1) // c
        table.ensure(nwin)
        rows = table.rows
        buckets = [[] for _ in range(mask + 1)]
        top = 0
        for i, (s, neg) in enumerate(mags):
            j = 0
            while s:
                d = s & mask
                if d:
                    x, y = rows[j][i]
                    buckets[d].append((x, _P - y) if neg else (x, y))
                    if d > top:
                        top = d
                s >>= c
                j += 1
        sums = _batch_sum_lists(buckets[: top + 1])
        run = _JINF
        acc = _JINF
        for d in range(top, 0, -1):
            b = sums[d]
            if b is not None:
                run = _jmadd(run, b[0], b[1])
            if run[2] != 0:
                acc = _jadd(acc, run)
        return _to_affine(acc)


# ---------------------------------------------------------------------------
# Schnorr subgroup (INSECURE-TEST)
# ---------------------------------------------------------------------------


class SchnorrGroup:
    """Order-p subgroup of Z_q^* where p | q - 1.  INSECURE-TEST."""

    insecure = True
    identity = 1

    def __init__(self, p: int, q: int):
        if (q - 1) % p:
            raise ValueError("p must divide q - 1")
        self.order = p
        self.q = q
        self.cofactor = (q - 1) // p
        self.element_width = (q.bit_length() + 7) // 8
        self.name = f"INSECURE-TEST-schnorr-{p}"

    def __repr__(self):
        return f"SchnorrGroup(p={self.order}, q={self.q})  # INSECURE-TEST"

    def is_identity(self, a) -> bool:
        return a == 1

    def add(self, a, b):
        return a * b % self.q

    def neg(self, a):
        return pow(a, -1, self.q)

    def sub(self, a, b):
        return a * pow(b, -1, self.q) % self.q

    def mul(self, a, k: int):
        return pow(a, k % self.order, self.q)

    def encode(self, a) -> bytes:
        return a.to_bytes(self.element_width, "little")

    def decode(self, data: bytes):
        if len(data) != self.element_width:
            raise DecodeError("bad element width")
        v = int.from_bytes(data, "little")
        if not 1 <= v < self.q or pow(v, self.order, self.q) != 1:
            raise DecodeError("not a subgroup element")
        return v

    def hash_to_group(self, *parts: bytes):
        ctr = 0
        nbytes = self.element_width + 16
        while True:
            seed = _h(b"verifbfl/h2g/schnorr", *parts, ctr.to_bytes(4, "little"))
            raw = b""
            k = 0
            while len(raw) < nbytes:
                raw += _h(seed, k.to_bytes(4, "little"))
                k += 1
            x = int.from_bytes(raw[:nbytes], "little") % self.q
            g = pow(x, self.cofactor, self.q)
            if g not in (0, 1):
                return g
            ctr += 1

    def precompute(self, bases):
        return None

    def msm(self, scalars, bases, table=None):
        q, p = self.q, self.order
        acc = 1
        for s, b in zip(scalars, bases):
            s %= p
            if s:
                acc = acc * pow(b, s, q) % q
        return acc


SECP256K1 = Secp256k1()

# p ~ 2^80 with q = 2p + 1 prime and gcd(5, p - 1) = 1: large enough for the
# 32-bit fixed-point circuits, small enough to be fast.
TEST_GROUP = SchnorrGroup(1208925819614629174713353, 2417851639229258349426707)


def tiny_group(p: int = 101, q: int = 607) -> SchnorrGroup:
    """Very small INSECURE-TEST group, e.g. for hand-checkable examples."""
    return SchnorrGroup(p, q)


def group_for_level(level: str):
    if level == "standard":
        return SECP256K1
    if level == "test":
        return TEST_GROUP
    raise ValueError(f"unknown security level {level!r}")


def group_by_name(name: str):
    if name == SECP256K1.name:
        return SECP256K1
    if name == TEST_GROUP.name:
        return TEST_GROUP
    if name.startswith("INSECURE-TEST-schnorr-"):
        raise DecodeError("ad-hoc test groups are not serializable")
    raise DecodeError(f"unknown group {name!r}")
