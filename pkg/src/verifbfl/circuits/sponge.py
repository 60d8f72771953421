"""Arithmetic sponge hash over the scalar field, usable natively and in-circuit.

The permutation follows the partial-SPN layout: ``R_F`` full rounds split
around ``R_P`` partial rounds, an ``x^alpha`` S-box and a Cauchy MDS matrix.
Round constants are expanded from SHA-256 of a fixed seed and the modulus, so
every field gets its own reproducible instance.  The parameters are chosen
for desk-scale circuits, not taken from an audited parameter set.

State width is 17 (rate 16, capacity 1).  The capacity element is
initialised with ``domain + 2^32 * len(inputs)`` which separates message
lengths and call sites; the digest is ``state[1]`` after the last block.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass
from functools import lru_cache
from math import gcd

WIDTH = 17
RATE = WIDTH - 1
FULL_ROUNDS = 8
PARTIAL_ROUNDS = 60
SEED = b"verifbfl/sponge/v1"

# domain tags
DOMAIN_MODEL = 1
DOMAIN_SAMPLE = 2
DOMAIN_VECTOR = 3
DOMAIN_CHAIN = 4
DOMAIN_CONTEXT = 5
DOMAIN_EVALSET = 6


@dataclass(frozen=True)
class SpongeParams:
    p: int
    alpha: int
    round_constants: tuple  # (R_F + R_P) rows of WIDTH constants
    mds: tuple

    @property
    def rounds(self) -> int:
        return FULL_ROUNDS + PARTIAL_ROUNDS


def _pick_alpha(p: int) -> int:
    for a in (5, 7, 11, 13, 17, 3):
        if gcd(a, p - 1) == 1:
            return a
    raise ValueError(f"no small invertible S-box exponent for p={p}")


@lru_cache(maxsize=None)
def params_for(p: int) -> SpongeParams:
    width = (p.bit_length() + 7) // 8
    need = (FULL_ROUNDS + PARTIAL_ROUNDS) * WIDTH
    rc = []
    ctr = 0
    while len(rc) < need:
        h = hashlib.sha256(SEED + p.to_bytes(width, "little") + ctr.to_bytes(4, "little")).digest()
        h += hashlib.sha256(h).digest()
        rc.append(int.from_bytes(h, "little") % p)
        ctr += 1
    rows = tuple(tuple(rc[r * WIDTH : (r + 1) * WIDTH]) for r in range(FULL_ROUNDS + PARTIAL_ROUNDS))
    # Cauchy matrix 1/(x_i + y_j), x_i = i, y_j = WIDTH + j
    mds = tuple(
        tuple(pow(i + WIDTH + j, -1, p) for j in range(WIDTH)) for i in range(WIDTH)
    )
    return SpongeParams(p, _pick_alpha(p), rows, mds)


def _is_full(r: int) -> bool:
    half = FULL_ROUNDS // 2
    return r < half or r >= half + PARTIAL_ROUNDS


def permute(state, prm: SpongeParams):
    p = prm.p
    a = prm.alpha
    mds = prm.mds
    s = list(state)
    for r, rc in enumerate(prm.round_constants):
        s = [(v + c) % p for v, c in zip(s, rc)]
        if _is_full(r):
            s = [pow(v, a, p) for v in s]
        else:
            s[0] = pow(s[0], a, p)
        s = [sum(m * v for m, v in zip(row, s)) % p for row in mds]
    return s


def _initial_state(n: int, domain: int):
    return [domain + (n << 32)] + [0] * RATE


def hash_elements(p: int, inputs, domain: int = DOMAIN_VECTOR) -> int:
    prm = params_for(p)
    vals = [int(v) % p for v in inputs]
    s = _initial_state(len(vals), domain)
    s[0] %= p
    chunks = [vals[i : i + RATE] for i in range(0, len(vals), RATE)] or [[]]
    for chunk in chunks:
        for j, v in enumerate(chunk):
            s[1 + j] = (s[1 + j] + v) % p
        s = permute(s, prm)
    return s[1]


# ---------------------------------------------------------------------------
# gadget
# ---------------------------------------------------------------------------


def _sbox(cs, x, alpha):
    """x^alpha by square-and-multiply; one constraint per multiplication."""
    acc = None
    base = x
    e = alpha
    while e:
        if e & 1:
            acc = base if acc is None else cs.mul(acc, base)
        e >>= 1
        if e:
            base = cs.mul(base, base)
    return acc


def _mix(cs, state, mds):
    out = []
    for row in mds:
        acc = cs.const(0)
        for m, v in zip(row, state):
            acc = acc + v * m
        out.append(acc)
    return out


def permute_gadget(cs, state, prm: SpongeParams):
    s = list(state)
    for r, rc in enumerate(prm.round_constants):
        s = [v + c for v, c in zip(s, rc)]
        if _is_full(r):
            s = [_sbox(cs, v, prm.alpha) for v in s]
        else:
            s[0] = _sbox(cs, s[0], prm.alpha)
        s = _mix(cs, s, prm.mds)
        if _is_full(r) or r == FULL_ROUNDS // 2 + PARTIAL_ROUNDS - 1:
            continue
        # keep partial-round linear combinations from growing without bound
        if (r - FULL_ROUNDS // 2) % 8 == 7:
            s = [_materialize(cs, v) for v in s]
    return s


def _materialize(cs, lc):
    v = cs.alloc(lc.value)
    cs.enforce_equal(v, lc)
    return v


def hash_gadget(cs, inputs, domain: int = DOMAIN_VECTOR):
    """In-circuit twin of :func:`hash_elements`; returns the digest wire."""
    prm = params_for(cs.p)
    s = [cs.const(v) for v in _initial_state(len(inputs), domain)]
    chunks = [inputs[i : i + RATE] for i in range(0, len(inputs), RATE)] or [[]]
    for chunk in chunks:
        for j, v in enumerate(chunk):
            s[1 + j] = s[1 + j] + v
        s = permute_gadget(cs, s, prm)
    return s[1]
