import random

import pytest
from hypothesis import given
from hypothesis import strategies as st

from _circuits import CubeStep
from verifbfl.algebra.group import TEST_GROUP
from verifbfl.algebra.transcript import Transcript
from verifbfl.errors import NotSatisfied, ShapeError
from verifbfl.ivc import build_shape, commitment_key, cross_term, fold, synthesize_step, zero_pair
from verifbfl.r1cs import (
    ConstraintSystem,
    R1csShape,
    RelaxedInstance,
    RelaxedWitness,
    from_standard,
    is_satisfied,
    relation_holds,
)
from verifbfl.algebra.commitment import commit

P = TEST_GROUP.order
SHAPE = build_shape(CubeStep(P), P)
CK = commitment_key(TEST_GROUP, max(SHAPE.num_witness, SHAPE.num_constraints))


def random_relaxed(rng, shape=SHAPE, ck=CK):
    """Any (u, x, W) with E := Az*Bz - u*Cz is a satisfying relaxed instance."""
    u = rng.randrange(P)
    x = [rng.randrange(P) for _ in range(shape.num_io)]
    W = [rng.randrange(P) for _ in range(shape.num_witness)]
    Az, Bz, Cz = shape.products(shape.z_vector(u, x, W))
    E = [(a * b - u * c) % P for a, b, c in zip(Az, Bz, Cz)]
    bw, be = rng.randrange(P), rng.randrange(P)
    return RelaxedInstance(commit(ck, W, bw), commit(ck, E, be), u, x), RelaxedWitness(W, E, bw, be)


def test_shape_of_cube_step():
    # two products for the cube, two output bindings
    assert SHAPE.num_constraints == 4
    assert SHAPE.num_io == 5
    assert SHAPE.num_witness == 3


def test_standard_assignment_satisfies():
    cs = synthesize_step(CubeStep(P), P, [2, 5], 0, 1)
    x, W = cs.assignment()
    assert x == [2, 5, 32, 6, 0]
    inst, wit = from_standard(SHAPE, CK, x, W, rng=random.Random(0))
    assert is_satisfied(SHAPE, inst, wit, CK)


def test_wrong_assignment_is_caught():
    with pytest.raises(NotSatisfied):
        cs = ConstraintSystem(P)
        a = cs.alloc(3)
        cs.enforce(a, a, cs.const(10))
    cs = synthesize_step(CubeStep(P), P, [2, 5], 0, 1)
    x, W = cs.assignment()
    x[2] += 1
    with pytest.raises(NotSatisfied):
        from_standard(SHAPE, CK, x, W)
    assert not relation_holds(SHAPE, 1, x, W, [0] * SHAPE.num_constraints)


def test_unchecked_synthesis_records_violations():
    class Lying(CubeStep):
        def synthesize(self, cs, z_in, w):
            out = super().synthesize(cs, z_in, w)
            bad = cs.alloc(7)
            cs.enforce(bad, cs.one(), cs.const(8))
            return out

    cs = synthesize_step(Lying(P), P, [1, 1], 0, 0, check=False)
    assert cs.violations == 1


def test_shape_encoding_roundtrip_and_digest():
    enc = SHAPE.encode()
    back = R1csShape.decode(enc)
    assert back == SHAPE
    assert back.digest == SHAPE.digest


def test_shape_rejects_bad_columns():
    with pytest.raises(ShapeError):
        R1csShape(P, 1, 1, (((5,), (1,)),), (((), ()),), (((), ()),))
    with pytest.raises(ShapeError):
        R1csShape(P, 1, 1, (((0,), (1,)),), (), ())


def test_is_satisfied_checks_openings():
    inst, wit = random_relaxed(random.Random(3))
    assert is_satisfied(SHAPE, inst, wit, CK)
    wit.blind_W = (wit.blind_W + 1) % P
    assert not is_satisfied(SHAPE, inst, wit, CK)
    assert is_satisfied(SHAPE, inst, wit)  # relation alone still holds


def test_relaxed_relation_detects_slack_change():
    inst, wit = random_relaxed(random.Random(4))
    wit.E[0] = (wit.E[0] + 1) % P
    assert not relation_holds(SHAPE, inst.u, inst.x, wit.W, wit.E)


def test_zero_pair_is_satisfying():
    inst, wit = zero_pair(SHAPE, TEST_GROUP)
    assert is_satisfied(SHAPE, inst, wit, CK)


@given(st.integers(min_value=0, max_value=2**64))
def test_fold_preserves_satisfiability(seed):
    rng = random.Random(seed)
    p1, p2 = random_relaxed(rng), random_relaxed(rng)
    comm_T, (inst, wit), r = fold(SHAPE, CK, p1, p2, Transcript(b"t"), rng=rng)
    assert is_satisfied(SHAPE, inst, wit, CK)
    assert inst.u == (p1[0].u + r * p2[0].u) % P


def test_cross_term_matches_expansion():
    # (A(z1 + r z2))(B(z1 + r z2)) - (u1 + r u2) C(z1 + r z2) = E1 + r T + r^2 E2
    rng = random.Random(5)
    (i1, w1), (i2, w2) = random_relaxed(rng), random_relaxed(rng)
    pr1 = SHAPE.products(SHAPE.z_vector(i1.u, i1.x, w1.W))
    pr2 = SHAPE.products(SHAPE.z_vector(i2.u, i2.x, w2.W))
    T = cross_term(P, pr1, i1.u, pr2, i2.u)
    r = rng.randrange(P)
    u = (i1.u + r * i2.u) % P
    x = [(a + r * b) % P for a, b in zip(i1.x, i2.x)]
    W = [(a + r * b) % P for a, b in zip(w1.W, w2.W)]
    E = [(e1 + r * t + r * r * e2) % P for e1, t, e2 in zip(w1.E, T, w2.E)]
    assert relation_holds(SHAPE, u, x, W, E)


def test_fold_with_unsatisfying_input_is_unsatisfying():
    rng = random.Random(6)
    p1 = random_relaxed(rng)
    inst2, wit2 = random_relaxed(rng)
    wit2.E[1] = (wit2.E[1] + 1) % P
    inst2.comm_E = commit(CK, wit2.E, wit2.blind_E)
    _, (inst, wit), _ = fold(SHAPE, CK, p1, (inst2, wit2), Transcript(b"t"), rng=rng)
    assert not is_satisfied(SHAPE, inst, wit, CK)


def test_fold_rejects_wrong_io_length():
    rng = random.Random(7)
    p1, (inst2, wit2) = random_relaxed(rng), random_relaxed(rng)
    inst2.x = inst2.x[:-1]
    with pytest.raises(ShapeError):
        fold(SHAPE, CK, p1, (inst2, wit2), Transcript(b"t"))
