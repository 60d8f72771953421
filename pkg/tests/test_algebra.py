import random

import pytest
import sympy
from hypothesis import given
from hypothesis import strategies as st

from verifbfl.algebra.commitment import CommitmentKey, commit
from verifbfl.algebra.field import Field
from verifbfl.algebra.group import SECP256K1, TEST_GROUP, group_by_name, tiny_group
from verifbfl.algebra.transcript import Transcript
from verifbfl.errors import DecodeError, DivisionByZero, KeyTooShort

P = TEST_GROUP.order
F = Field(P)

elems = st.integers(min_value=0, max_value=P - 1)


def test_test_group_parameters():
    assert sympy.isprime(P) and sympy.isprime(TEST_GROUP.q)
    assert (TEST_GROUP.q - 1) % P == 0


def test_field_rejects_composite():
    with pytest.raises(ValueError):
        Field(91)


@given(elems, elems, elems)
def test_field_ring_laws(a, b, c):
    x, y, z = F(a), F(b), F(c)
    assert (x + y) * z == x * z + y * z
    assert x - x == 0
    assert int(x * y) == a * b % P


@given(st.integers(min_value=1, max_value=P - 1))
def test_field_inverse_matches_fermat(a):
    assert F.inv(a) == pow(a, P - 2, P)
    assert int(F(a) / F(a)) == 1


def test_field_inverse_of_zero():
    with pytest.raises(DivisionByZero):
        F.inv(0)
    with pytest.raises(DivisionByZero):
        F(3) / F(0)


@given(st.integers(min_value=-(P // 2), max_value=P // 2))
def test_signed_roundtrip(v):
    assert F.to_signed(F.from_signed(v)) == v


@given(elems)
def test_field_encoding_roundtrip(v):
    assert F.decode(F.encode(v)) == v


def test_field_decode_rejects_noncanonical():
    with pytest.raises(DecodeError):
        F.decode(P.to_bytes(F.width, "little"))
    with pytest.raises(DecodeError):
        F.decode(b"\x00")


# secp256k1 multiples of G from the public curve test vectors
G2 = (0xC6047F9441ED7D6D3045406E95C07CD85C778E4B8CEF3CA7ABAC09B95C709EE5,
      0x1AE168FEA63DC339A3C58419466CEAEEF7F632653266D0E1236431A950CFE52A)
G3 = (0xF9308A019258C31049344F85F89D5229B531C845836F99B08601F113BCE036F9,
      0x388F7B0F632DE8140FE337E62A37F3566500A99934C2231B6CB9FD7584B8E672)


def test_secp256k1_known_multiples():
    g = SECP256K1.generator
    assert SECP256K1.mul(g, 2) == G2
    assert SECP256K1.add(g, g) == G2
    assert SECP256K1.mul(g, 3) == G3
    assert SECP256K1.is_identity(SECP256K1.mul(g, SECP256K1.order))
    assert SECP256K1.mul(g, SECP256K1.order - 1) == SECP256K1.neg(g)


@pytest.mark.parametrize("group", [TEST_GROUP, SECP256K1], ids=["test", "secp256k1"])
def test_group_law(group):
    rng = random.Random(1)
    g = group.hash_to_group(b"base")
    a, b = rng.randrange(group.order), rng.randrange(group.order)
    assert group.add(group.mul(g, a), group.mul(g, b)) == group.mul(g, (a + b) % group.order)
    assert group.mul(group.mul(g, a), b) == group.mul(g, a * b)
    assert group.is_identity(group.sub(group.mul(g, a), group.mul(g, a)))
    assert group.decode(group.encode(group.mul(g, a))) == group.mul(g, a)
    assert group.decode(group.encode(group.identity)) == group.identity


@pytest.mark.parametrize("group", [TEST_GROUP, SECP256K1], ids=["test", "secp256k1"])
def test_msm_matches_naive_sum(group):
    rng = random.Random(2)
    bases = [group.hash_to_group(b"msm", bytes([i])) for i in range(20)]
    scalars = [rng.randrange(group.order) for _ in bases]
    scalars[3] = 0
    scalars[4] = group.order - 1
    naive = group.identity
    for s, b in zip(scalars, bases):
        naive = group.add(naive, group.mul(b, s))
    assert group.msm(scalars, bases) == naive
    assert group.msm(scalars, bases, group.precompute(bases)) == naive


def test_secp256k1_decode_rejects_off_curve():
    bad = bytearray(SECP256K1.encode(G2))
    bad[0] = 5
    with pytest.raises(DecodeError):
        SECP256K1.decode(bytes(bad))
    x = 5  # x^3 + 7 = 132 is a non-residue mod p
    with pytest.raises(DecodeError):
        SECP256K1.decode(b"\x02" + x.to_bytes(32, "big"))


def test_schnorr_decode_rejects_non_members():
    # q - 1 has order 2, outside the order-p subgroup
    with pytest.raises(DecodeError):
        TEST_GROUP.decode((TEST_GROUP.q - 1).to_bytes(TEST_GROUP.element_width, "little"))


def test_group_names():
    assert group_by_name(TEST_GROUP.name) is TEST_GROUP
    assert group_by_name("secp256k1") is SECP256K1
    with pytest.raises(DecodeError):
        group_by_name("p-256")
    with pytest.raises(DecodeError):
        group_by_name(tiny_group().name)


CK = CommitmentKey(TEST_GROUP, 8)
vecs = st.lists(elems, min_size=8, max_size=8)


@given(vecs, vecs, elems, elems, elems)
def test_commitment_homomorphism(v, w, r1, r2, k):
    lhs = TEST_GROUP.add(commit(CK, v, r1), TEST_GROUP.mul(commit(CK, w, r2), k))
    combined = [(a + k * b) % P for a, b in zip(v, w)]
    assert lhs == commit(CK, combined, (r1 + k * r2) % P)


def test_commitment_generators_are_distinct_and_seeded():
    assert len(set(CK.generators)) == len(CK.generators)
    assert CommitmentKey(TEST_GROUP, 8).generators == CK.generators
    assert CommitmentKey(TEST_GROUP, 8, b"other").generators != CK.generators


def test_commitment_key_too_short():
    with pytest.raises(KeyTooShort):
        commit(CK, [1] * 9, 0)


def test_tiny_group_commitment_by_hand():
    g = tiny_group()
    ck = CommitmentKey(g, 2)
    g0, g1, h = ck.generators
    expected = pow(g0, 3, g.q) * pow(g1, 5, g.q) * pow(h, 7, g.q) % g.q
    assert commit(ck, [3, 5], 7) == expected


def test_transcript_is_deterministic_and_order_sensitive():
    def run(items):
        t = Transcript(b"t")
        for label, data in items:
            t.absorb(label, data)
        return t.challenge(b"c", P)

    a = run([(b"x", b"1"), (b"y", b"2")])
    assert a == run([(b"x", b"1"), (b"y", b"2")])
    assert a != run([(b"y", b"2"), (b"x", b"1")])
    assert a != run([(b"x", b"12")])
    # label/data boundaries are length-prefixed
    assert run([(b"ab", b"c")]) != run([(b"a", b"bc")])
    assert 0 <= a < P


def test_transcript_challenges_advance_state():
    t = Transcript()
    f = t.fork()
    c1 = t.challenge(b"c", P)
    assert t.challenge(b"c", P) != c1
    assert f.challenge(b"c", P) == c1


def test_transcript_challenge_is_roughly_uniform():
    t = Transcript()
    small = 7
    counts = [0] * small
    for _ in range(7000):
        counts[t.challenge(b"c", small)] += 1
    assert min(counts) > 850 and max(counts) < 1150
