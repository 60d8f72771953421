"""Sponge, gadgets, fixed point, and the two step circuits."""
import math
import random
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st
from sympy import isprime
from sympy.polys.domains import GF
from sympy.polys.matrices import DomainMatrix

from verifbfl.algebra.group import TEST_GROUP
from verifbfl.circuits import gadgets
from verifbfl.circuits.aggregation import (
    AggregationStep,
    AggregationStepSpec,
    aggregation_witnesses,
    inputs_chain,
    weight_factors,
    zero_sum_digest,
)
from verifbfl.circuits.fixedpoint import FixedPointConfig, quantize, quantize_array, rescale_int
from verifbfl.circuits.inference import (
    InferenceStep,
    InferenceStepSpec,
    accuracy_from_counter,
    sample_chain,
)
from verifbfl.circuits.sponge import (
    DOMAIN_MODEL,
    DOMAIN_SAMPLE,
    DOMAIN_VECTOR,
    FULL_ROUNDS,
    PARTIAL_ROUNDS,
    SEED,
    WIDTH,
    hash_elements,
    hash_gadget,
    params_for,
    permute,
    permute_gadget,
)
from verifbfl.errors import EmptyEvalSet, NotSatisfied, QuantizeOverflow, RangeViolation, ShapeError, UnsupportedArch
from verifbfl.fl.fedavg import fedavg
from verifbfl.fl.model import QuantizedModel, predict
from verifbfl.ivc import synthesize_step
from verifbfl.r1cs import ConstraintSystem

P = TEST_GROUP.q
CFG = FixedPointConfig()


def test_field_is_prime():
    assert isprime(P)


# -- sponge ------------------------------------------------------------------


def test_alpha_is_smallest_permuting_exponent():
    prm = params_for(P)
    assert math.gcd(prm.alpha, P - 1) == 1
    for a in (5, 7, 11, 13, 17, 3):
        if a == prm.alpha:
            break
        assert math.gcd(a, P - 1) != 1
    # x -> x^alpha is a bijection: the inverse exponent undoes it
    inv = pow(prm.alpha, -1, P - 1)
    for x in (0, 1, 2, 12345, P - 1):
        assert pow(pow(x, prm.alpha, P), inv, P) == x


def test_round_constants_follow_seeded_expansion():
    import hashlib

    prm = params_for(P)
    assert len(prm.round_constants) == FULL_ROUNDS + PARTIAL_ROUNDS
    width = (P.bit_length() + 7) // 8
    for ctr in (0, 1, 77, WIDTH * (FULL_ROUNDS + PARTIAL_ROUNDS) - 1):
        h = hashlib.sha256(SEED + P.to_bytes(width, "little") + ctr.to_bytes(4, "little")).digest()
        h += hashlib.sha256(h).digest()
        assert prm.round_constants[ctr // WIDTH][ctr % WIDTH] == int.from_bytes(h, "little") % P


def test_mds_is_invertible_cauchy():
    prm = params_for(P)
    F = GF(P)
    m = DomainMatrix([[F(v) for v in row] for row in prm.mds], (WIDTH, WIDTH), F)
    assert m.rank() == WIDTH
    rng = random.Random(3)
    # every square submatrix of a Cauchy matrix is nonsingular
    for _ in range(5):
        k = rng.randint(1, WIDTH - 1)
        rows = rng.sample(range(WIDTH), k)
        cols = rng.sample(range(WIDTH), k)
        sub = DomainMatrix([[F(prm.mds[i][j]) for j in cols] for i in rows], (k, k), F)
        assert sub.rank() == k
    for i in range(WIDTH):
        for j in range(WIDTH):
            assert prm.mds[i][j] * (i + WIDTH + j) % P == 1


def test_permutation_gadget_matches_native_and_cost():
    prm = params_for(P)
    rng = random.Random(1)
    state = [rng.randrange(P) for _ in range(WIDTH)]
    cs = ConstraintSystem(P)
    wires = [cs.alloc(v) for v in state]
    out = permute_gadget(cs, wires, prm)
    assert [w.value for w in out] == permute(state, prm)
    if prm.alpha == 5:
        sboxes = FULL_ROUNDS * WIDTH + PARTIAL_ROUNDS
        refresh = sum(1 for r in range(FULL_ROUNDS // 2, FULL_ROUNDS // 2 + PARTIAL_ROUNDS - 1)
                      if (r - FULL_ROUNDS // 2) % 8 == 7)
        assert cs.num_constraints == 3 * sboxes + WIDTH * refresh == 707


@given(st.lists(st.integers(min_value=0, max_value=P - 1), max_size=40), st.sampled_from([1, 2, 3, 6]))
def test_hash_gadget_matches_native(vals, domain):
    cs = ConstraintSystem(P)
    h = hash_gadget(cs, [cs.alloc(v) for v in vals], domain)
    assert h.value == hash_elements(P, vals, domain)
    assert cs.violations == 0


def test_hash_separates_domain_and_length():
    assert hash_elements(P, [1, 2], DOMAIN_MODEL) != hash_elements(P, [1, 2], DOMAIN_VECTOR)
    assert hash_elements(P, [1, 2]) != hash_elements(P, [1, 2, 0])
    assert hash_elements(P, []) != hash_elements(P, [0])
    assert hash_elements(P, list(range(16))) != hash_elements(P, list(range(16)) + [0])
    assert hash_elements(P, [5]) == hash_elements(P, [5 + P])


# -- gadgets ------------------------------------------------------------------


def _round_half_up(acc, s):
    return math.floor(Fraction(acc, 2**s) + Fraction(1, 2))


@given(st.integers(min_value=-(2**40), max_value=2**40), st.integers(min_value=1, max_value=20))
def test_rescale_matches_exact_rounding(acc, s):
    want = _round_half_up(acc, s)
    assert rescale_int(acc, s) == want
    cs = ConstraintSystem(P)
    q, nonneg = gadgets.rescale(cs, cs.alloc(acc), s, 48)
    assert gadgets.signed(q.value, P) == want
    assert nonneg.value == int(want >= 0)
    r = gadgets.relu(cs, q, nonneg)
    assert gadgets.signed(r.value, P) == max(want, 0)
    assert cs.violations == 0


def test_rescale_out_of_range_rejected():
    cs = ConstraintSystem(P)
    with pytest.raises(RangeViolation):
        gadgets.rescale(cs, cs.alloc(2**40), 4, 32)


@given(st.integers(min_value=-(2**12), max_value=2**12 + 8))
def test_range_check(v):
    cs = ConstraintSystem(P)
    x = cs.alloc(v)
    if 0 <= v < 2**12:
        gadgets.range_check(cs, x, 12)
        assert cs.violations == 0
    else:
        with pytest.raises(RangeViolation):
            gadgets.range_check(cs, x, 12)


def test_range_check_unchecked_leaves_violation():
    cs = ConstraintSystem(P, check=False)
    gadgets.range_check(cs, cs.alloc(-1), 8)
    assert cs.violations > 0


@given(st.integers(min_value=0, max_value=255), st.integers(min_value=0, max_value=255))
def test_is_less_than(a, b):
    cs = ConstraintSystem(P)
    bit = gadgets.is_less_than(cs, cs.alloc(a), cs.alloc(b), 8)
    assert bit.value == int(a < b)
    assert cs.violations == 0


@given(st.integers(min_value=-(2**15), max_value=2**15 - 1))
def test_signed_range_and_is_zero(v):
    cs = ConstraintSystem(P)
    x = cs.alloc(v)
    assert gadgets.signed_range_check(cs, x, 16).value == int(v >= 0)
    assert gadgets.is_zero(cs, x).value == int(v == 0)
    assert cs.violations == 0


def test_is_zero_bad_hint_caught():
    cs = ConstraintSystem(P, check=False)
    x = cs.alloc(7)
    m = cs.alloc(0)  # claims "is zero" for a nonzero value
    nz = cs.mul(x, m)
    cs.enforce(x, 1 - nz, cs.const(0))
    assert cs.violations == 1


def test_boolean_rejects_two():
    cs = ConstraintSystem(P)
    with pytest.raises(NotSatisfied):
        gadgets.boolean(cs, 2)


# -- fixed point --------------------------------------------------------------


def test_quantize_half_even():
    one = CFG.one
    assert quantize(0.5 / one, CFG) == 0
    assert quantize(1.5 / one, CFG) == 2
    assert quantize(-2.5 / one, CFG) == -2
    assert quantize(1.0, CFG) == one


@given(st.lists(st.floats(min_value=-1000, max_value=1000, allow_nan=False), max_size=20))
def test_quantize_matches_numpy(xs):
    q = quantize_array(xs, CFG)
    assert q.tolist() == [int(np.round(x * CFG.one)) for x in xs]
    assert all(abs(v / CFG.one - x) <= 0.5 / CFG.one for v, x in zip(q, xs))


def test_quantize_overflow():
    limit = 2.0 ** (CFG.value_bits - CFG.scale_bits - 1)
    with pytest.raises(QuantizeOverflow):
        quantize(limit, CFG)
    with pytest.raises(QuantizeOverflow):
        quantize(float("nan"), CFG)
    assert quantize(-limit + 1, CFG) < 0


def test_field_size_check():
    with pytest.raises(RangeViolation):
        CFG.check_field(2**61 - 1, 8)
    CFG.check_field(P, 8)
    with pytest.raises(ValueError):
        FixedPointConfig(16, 16)


# -- inference step -----------------------------------------------------------


def _forward_exact(dims, flat, x, s):
    """Independent forward pass with exact rational rounding."""
    pos = 0
    h = list(x)
    for li, (n_in, n_out) in enumerate(zip(dims[:-1], dims[1:])):
        W = flat[pos : pos + n_in * n_out]
        pos += n_in * n_out
        b = flat[pos : pos + n_out]
        pos += n_out
        out = []
        for o in range(n_out):
            acc = sum(W[o * n_in + j] * h[j] for j in range(n_in)) + b[o] * 2**s
            q = _round_half_up(acc, s)
            out.append(q if li == len(dims) - 2 else max(q, 0))
        h = out
    return h


def _run_inference(circuit, z, witness, check=True):
    cs = synthesize_step(circuit, P, z, 0, witness, check=check)
    return cs, cs.pub_values[4:8]


@pytest.mark.parametrize("seed", range(6))
def test_inference_step_matches_exact_forward(seed):
    dims = (3, 4, 3)
    spec = InferenceStepSpec(dims)
    circuit = InferenceStep(spec, P)
    rng = random.Random(seed)
    flat = [rng.randint(-2 * CFG.one, 2 * CFG.one) for _ in range(spec.num_params)]
    x = [rng.randint(-3 * CFG.one, 3 * CFG.one) for _ in range(3)]
    logits = _forward_exact(dims, flat, x, CFG.scale_bits)
    pred = max(range(3), key=lambda c: (logits[c], -c))
    digest = hash_elements(P, [v % P for v in flat], DOMAIN_MODEL)
    for label in range(3):
        z = [5, digest, 99, 7]
        cs, out = _run_inference(circuit, z, (flat, x, label))
        assert cs.violations == 0
        assert out[0] == 5 + int(pred == label)
        assert out[1:3] == [digest, 99]
        assert out[3] == sample_chain(P, 7, [(x, label)])
        assert out == circuit.step(z, (flat, x, label))


def test_inference_argmax_tie_goes_to_lowest_index():
    spec = InferenceStepSpec((2, 3))
    circuit = InferenceStep(spec, P)
    flat = [0] * spec.num_params
    digest = hash_elements(P, flat, DOMAIN_MODEL)
    _, out0 = _run_inference(circuit, [0, digest, 0, 0], (flat, [1, 2], 0))
    _, out1 = _run_inference(circuit, [0, digest, 0, 0], (flat, [1, 2], 1))
    assert out0[0] == 1 and out1[0] == 0


def test_inference_rejects_wrong_model_digest():
    spec = InferenceStepSpec((2, 2))
    circuit = InferenceStep(spec, P)
    flat = [1, 2, 3, 4, 5, 6]
    with pytest.raises(NotSatisfied):
        _run_inference(circuit, [0, 123, 0, 0], (flat, [1, 1], 0))


def test_inference_spec_errors():
    with pytest.raises(UnsupportedArch):
        InferenceStepSpec((3, 2), activation="tanh")
    with pytest.raises(UnsupportedArch):
        InferenceStepSpec((3, 1))
    with pytest.raises(UnsupportedArch):
        InferenceStepSpec((3,))
    with pytest.raises(RangeViolation):
        InferenceStep(InferenceStepSpec((3, 2)), 2**61 - 1)


def test_accuracy_from_counter():
    assert accuracy_from_counter(3, 4) == Fraction(3, 4)
    with pytest.raises(EmptyEvalSet):
        accuracy_from_counter(0, 0)
    with pytest.raises(ValueError):
        accuracy_from_counter(5, 4)


# -- aggregation step ---------------------------------------------------------


@given(st.lists(st.integers(min_value=1, max_value=10**6), min_size=1, max_size=8))
def test_weight_factors_round_half_up(vols):
    n = sum(vols)
    assert weight_factors(vols, CFG) == [math.floor(Fraction(v * CFG.one, n) + Fraction(1, 2)) for v in vols]


def test_weight_factors_reject_nonpositive():
    with pytest.raises(ValueError):
        weight_factors([1, 0], CFG)
    with pytest.raises(ValueError):
        weight_factors([], CFG)


@pytest.mark.parametrize("seed", range(4))
def test_aggregation_chain_equals_fedavg(seed):
    rng = random.Random(seed)
    dims = (2, 2)
    k = rng.randint(1, 4)
    models = [QuantizedModel.from_flat(dims, [rng.randint(-(2**20), 2**20) for _ in range(6)]) for _ in range(k)]
    vols = [rng.randint(1, 50) for _ in range(k)]
    factors = weight_factors(vols, CFG)
    circuit = AggregationStep(AggregationStepSpec(6, k), P)
    z = [1, zero_sum_digest(P, 6), 0, 42]
    for wit in aggregation_witnesses([m.flat() for m in models], factors, CFG.scale_bits):
        cs = synthesize_step(circuit, P, z, 0, wit)
        assert cs.violations == 0
        z = cs.pub_values[4:8]
        assert z == circuit.step(cs.pub_values[:4], wit)
    g = fedavg(models, vols)
    assert z[1] == g.digest(P)
    assert z[2] == inputs_chain(P, 0, [(m.digest(P), f) for m, f in zip(models, factors)])
    assert z[0] == 1 and z[3] == 42
    # independent weighted mean: per-term rounding stays within k/2 ulps of the exact value
    exact = [sum(Fraction(f * m.flat()[j], CFG.one) for m, f in zip(models, factors)) for j in range(6)]
    assert all(abs(g.flat()[j] - exact[j]) <= Fraction(k, 2) for j in range(6))


def test_aggregation_rejects_substituted_local():
    circuit = AggregationStep(AggregationStepSpec(2, 1), P)
    z = [1, 999, 0, 0]  # running-sum digest does not match the zero vector
    with pytest.raises(NotSatisfied):
        synthesize_step(circuit, P, z, 0, ([0, 0], [1, 1], CFG.one))
    with pytest.raises(NotSatisfied):
        synthesize_step(circuit, P, [0, zero_sum_digest(P, 2), 0, 0], 0, ([0, 0], [1, 1], CFG.one))
    with pytest.raises(ShapeError):
        synthesize_step(circuit, P, [1, zero_sum_digest(P, 2), 0, 0], 0, ([0], [1], CFG.one))


# -- worked examples and equivalence sweeps -------------------------------------


def test_quantize_examples():
    from verifbfl.circuits.fixedpoint import to_field

    assert quantize(0.0, CFG) == 0
    assert quantize(1.5, CFG) == 98304
    assert to_field(quantize(-0.25, CFG), P) == P - 16384


def test_linear_two_class_example():
    # logits [3.0, 1.0] from a zero weight matrix and biases 3, 1
    spec = InferenceStepSpec((2, 2))
    circuit = InferenceStep(spec, P)
    flat = [0, 0, 0, 0, 3 * CFG.one, 1 * CFG.one]
    digest = hash_elements(P, flat, DOMAIN_MODEL)
    _, out = _run_inference(circuit, [0, digest, 0, 0], (flat, [CFG.one, -CFG.one], 0))
    assert out[0] == 1


def test_wrong_argmax_hint_is_unsatisfiable(monkeypatch):
    import verifbfl.circuits.inference as inf

    spec = InferenceStepSpec((2, 3))
    circuit = InferenceStep(spec, P)
    flat = [0] * 6 + [CFG.one, 5 * CFG.one, 2 * CFG.one]  # argmax is 1
    z = [0, hash_elements(P, flat, DOMAIN_MODEL), 0, 0]
    cs, _ = _run_inference(circuit, z, (flat, [0, 0], 1), check=False)
    assert cs.violations == 0
    for wrong in (0, 2):
        monkeypatch.setattr(inf, "max", lambda *a, w=wrong, **k: w, raising=False)
        cs, _ = _run_inference(circuit, z, (flat, [0, 0], wrong), check=False)
        assert cs.violations > 0
    monkeypatch.undo()


def test_exhaustive_comparison_gadget():
    for a in range(16):
        for b in range(16):
            cs = ConstraintSystem(P)
            assert gadgets.is_less_than(cs, cs.alloc(a), cs.alloc(b), 4).value == int(a < b)


def test_inference_equivalence_200_random_models():
    dims = (3, 4, 3)
    spec = InferenceStepSpec(dims)
    circuit = InferenceStep(spec, P)
    rng = random.Random(2024)
    bound = 2 ** (CFG.value_bits - 1)
    for _ in range(200):
        flat = [rng.randint(-CFG.one, CFG.one) for _ in range(spec.num_params)]
        x = [rng.randint(-4 * CFG.one, 4 * CFG.one) for _ in range(3)]
        label = rng.randrange(3)
        m = QuantizedModel.from_flat(dims, flat)
        digest = m.digest(P)
        cs, out = _run_inference(circuit, [0, digest, 0, 0], (flat, x, label))
        assert cs.violations == 0
        assert out[0] == int(predict(m, x) == label)
        assert cs.max_abs_signed < bound


def test_aggregation_examples():
    from verifbfl.fl.fedavg import fedavg_vectors

    assert fedavg_vectors([[2, 4], [4, 8]], [1, 1]) == [3, 6]
    assert fedavg_vectors([[4, 0], [0, 4]], [1, 3]) == [1, 3]
    one = QuantizedModel.from_flat((1, 1), [7, -3])
    assert fedavg([one], [5]).flat() == [7, -3]
    circuit = AggregationStep(AggregationStepSpec(2, 2), P)
    z = [1, zero_sum_digest(P, 2), 0, 0]
    for wit in aggregation_witnesses([[2, 4], [4, 8]], weight_factors([1, 1], CFG), CFG.scale_bits):
        z = synthesize_step(circuit, P, z, 0, wit).pub_values[4:8]
    assert z[1] == hash_elements(P, [3, 6], DOMAIN_MODEL)


def test_aggregation_tampered_coordinate_breaks_chain():
    # the proof binds each local digest into the inputs chain; a tampered
    # coordinate changes that chain away from the ledger's digest
    p_flat = [2, 4]
    circuit = AggregationStep(AggregationStepSpec(2, 1), P)
    z0 = [1, zero_sum_digest(P, 2), 0, 0]
    good = synthesize_step(circuit, P, z0, 0, ([0, 0], p_flat, CFG.one)).pub_values[4:8]
    bad = synthesize_step(circuit, P, z0, 0, ([0, 0], [2, 5], CFG.one)).pub_values[4:8]
    ledger_chain = inputs_chain(P, 0, [(hash_elements(P, p_flat, DOMAIN_MODEL), CFG.one)])
    assert good[2] == ledger_chain and bad[2] != ledger_chain
