"""Incrementally verifiable computation by folding committed relaxed R1CS.

The prover folds every step instance into a running instance.  The proof is
the folding transcript (one header per step plus the cross-term commitment),
the final folded instance and its opening.  The verifier recomputes every
challenge, folds the headers itself on the instance side and checks the
final pair once.  It never sees a step witness.

Proofs are O(n) in the step count; there is no compression layer and the
final opening is not zero-knowledge.

Public IO of every step is ``[z_in (arity), z_out (arity), step_index]``.
"""
from __future__ import annotations

import hashlib
import logging
import random
import secrets
from dataclasses import dataclass, field

from verifbfl.algebra import CK_SEED, CommitmentKey, Field, Transcript, commit
from verifbfl.algebra.group import group_by_name, group_for_level
from verifbfl.codec import Reader, Writer
from verifbfl.errors import DecodeError, KeyTooShort, NotSatisfied, ParamMismatch, ShapeError
from verifbfl.r1cs import (
    ConstraintSystem,
    R1csShape,
    RelaxedInstance,
    RelaxedWitness,
    relation_holds,
)

log = logging.getLogger(__name__)

LEVELS = ("test", "standard")
MAX_KEY_LENGTH = 1 << 18
PROOF_MAGIC = b"VBFL1"
VK_MAGIC = b"VBFLVK1"

_CK_CACHE: dict = {}


def commitment_key(group, length: int, seed: bytes = CK_SEED) -> CommitmentKey:
    """Shared, cached commitment keys (tables are expensive to rebuild)."""
    key = (group.name, seed)
    ck = _CK_CACHE.get(key)
    if ck is None or ck.length < length:
        ck = CommitmentKey(group, length, seed)
        _CK_CACHE[key] = ck
    return ck


# ---------------------------------------------------------------------------
# step circuits
# ---------------------------------------------------------------------------


class StepCircuit:
    """Interface for a step function F(z, w) -> z'.

    Subclasses implement :meth:`synthesize` (constraints + values),
    :meth:`step` (plaintext oracle), and the dummies used to derive the shape.
    """

    arity: int = 1

    def synthesize(self, cs, z_in, witness):
        raise NotImplementedError

    def step(self, z, witness):
        raise NotImplementedError

    def dummy_input(self):
        return [0] * self.arity

    def dummy_witness(self):
        raise NotImplementedError


def synthesize_step(circuit: StepCircuit, p: int, z_in, step_index: int, witness,
                    recording: bool = False, check: bool = True) -> ConstraintSystem:
    cs = ConstraintSystem(p, recording=recording, check=check)
    a = circuit.arity
    zin = [cs.alloc_public(v) for v in z_in]
    slots = [cs.alloc_public_slot() for _ in range(a)]
    cs.alloc_public(step_index)
    z_out = circuit.synthesize(cs, zin, witness)
    if len(z_out) != a:
        raise ShapeError(f"step circuit returned {len(z_out)} outputs, arity is {a}")
    for (idx, var), out in zip(slots, z_out):
        cs.set_public(idx, out.value)
        var.value = out.value
        cs.enforce_equal(var, out)
    return cs


def build_shape(circuit: StepCircuit, p: int) -> R1csShape:
    cs = synthesize_step(circuit, p, circuit.dummy_input(), 0, circuit.dummy_witness(),
                         recording=True, check=False)
    return cs.shape()


# ---------------------------------------------------------------------------
# keys
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PublicParams:
    level: str
    group_name: str
    p: int
    ck_seed: bytes
    ck_length: int
    shape_digest: bytes
    insecure: bool
    ck: CommitmentKey = field(compare=False, repr=False)

    @property
    def group(self):
        return self.ck.group

    def to_bytes(self) -> bytes:
        f = Field(self.p, check_prime=False)
        w = Writer().raw(b"VBFLPP1").text(self.level).text(self.group_name)
        w.u32(f.width).raw(f.encode(self.p - 1))
        w.blob(self.ck_seed).u32(self.ck_length).raw(self.shape_digest).u8(int(self.insecure))
        return w.getvalue()

    @property
    def digest(self) -> bytes:
        return hashlib.sha256(self.to_bytes()).digest()


def setup(level: str, shape: R1csShape, max_key_length: int = MAX_KEY_LENGTH, group=None) -> PublicParams:
    """G(1^lambda): deterministic public parameters for ``shape``."""
    if level not in LEVELS:
        raise ValueError(f"security level must be one of {LEVELS}")
    group = group or group_for_level(level)
    if group.order != shape.p:
        raise ParamMismatch("shape field does not match the group order")
    need = max(shape.num_witness, shape.num_constraints)
    if need > max_key_length:
        raise KeyTooShort(f"shape needs {need} generators, bound is {max_key_length}")
    ck = commitment_key(group, need)
    return PublicParams(level, group.name, group.order, ck.seed, need, shape.digest,
                        bool(getattr(group, "insecure", False)), ck)


@dataclass(frozen=True)
class VerifyingKey:
    pp: PublicParams
    shape: R1csShape

    @property
    def num_io(self) -> int:
        return self.shape.num_io

    @property
    def arity(self) -> int:
        return (self.shape.num_io - 1) // 2

    @property
    def shape_digest(self) -> bytes:
        return self.pp.shape_digest

    @property
    def digest(self) -> bytes:
        return hashlib.sha256(b"VBFLVKD1" + self.pp.digest + self.pp.shape_digest
                              + self.num_io.to_bytes(4, "little")).digest()

    def to_bytes(self) -> bytes:
        return Writer().raw(VK_MAGIC).text(self.pp.level).text(self.pp.group_name) \
            .blob(self.shape.encode()).getvalue()

    @classmethod
    def from_bytes(cls, data: bytes) -> "VerifyingKey":
        r = Reader(data)
        if r.raw(len(VK_MAGIC)) != VK_MAGIC:
            raise DecodeError("bad vk magic")
        level = r.text()
        group = group_by_name(r.text())
        shape = R1csShape.decode(r.blob())
        r.done()
        try:
            pp = setup(level, shape, group=group)
        except (ValueError, ParamMismatch, KeyTooShort) as exc:
            raise DecodeError(str(exc)) from exc
        return keygen(pp, shape)[1]


@dataclass(frozen=True)
class ProvingKey:
    pp: PublicParams
    shape: R1csShape

    @property
    def vk(self) -> VerifyingKey:
        return VerifyingKey(self.pp, self.shape)


def keygen(pp: PublicParams, shape: R1csShape):
    """K(pp, F) -> (pk, vk)."""
    if pp.shape_digest != shape.digest:
        raise ParamMismatch("public parameters were generated for a different shape")
    if shape.num_io % 2 != 1:
        raise ShapeError("IVC shapes carry [z_in, z_out, index] as public IO")
    pk = ProvingKey(pp, shape)
    return pk, pk.vk


# ---------------------------------------------------------------------------
# folding
# ---------------------------------------------------------------------------


def _encode_instance(group, fld, inst: RelaxedInstance) -> bytes:
    return Writer().point(group, inst.comm_W).point(group, inst.comm_E) \
        .felem(fld, inst.u).fvec(fld, inst.x).getvalue()


def _absorb_fold(transcript: Transcript, group, fld, inst1, inst2, comm_T) -> int:
    transcript.absorb(b"running", _encode_instance(group, fld, inst1))
    transcript.absorb(b"incoming", _encode_instance(group, fld, inst2))
    transcript.absorb(b"cross-term", group.encode(comm_T))
    return transcript.challenge(b"r", fld.p)


def cross_term(p, prods1, u1, prods2, u2):
    Az1, Bz1, Cz1 = prods1
    Az2, Bz2, Cz2 = prods2
    return [(a1 * b2 + a2 * b1 - u1 * c2 - u2 * c1) % p
            for a1, b1, c1, a2, b2, c2 in zip(Az1, Bz1, Cz1, Az2, Bz2, Cz2)]


def fold_instances(group, p, inst1: RelaxedInstance, inst2: RelaxedInstance, comm_T, r: int) -> RelaxedInstance:
    """Instance-side fold; what the verifier computes."""
    r2 = r * r % p
    comm_W = group.add(inst1.comm_W, group.mul(inst2.comm_W, r))
    comm_E = group.add(inst1.comm_E, group.mul(comm_T, r))
    if not group.is_identity(inst2.comm_E):
        comm_E = group.add(comm_E, group.mul(inst2.comm_E, r2))
    return RelaxedInstance(
        comm_W, comm_E, (inst1.u + r * inst2.u) % p,
        [(a + r * b) % p for a, b in zip(inst1.x, inst2.x)],
    )


def fold_witnesses(p, wit1: RelaxedWitness, wit2: RelaxedWitness, T, blind_T, r: int) -> RelaxedWitness:
    r2 = r * r % p
    W = [(a + r * b) % p for a, b in zip(wit1.W, wit2.W)]
    if any(wit2.E):
        E = [(e1 + r * t + r2 * e2) % p for e1, t, e2 in zip(wit1.E, T, wit2.E)]
    else:
        E = [(e1 + r * t) % p for e1, t in zip(wit1.E, T)]
    return RelaxedWitness(
        W, E,
        (wit1.blind_W + r * wit2.blind_W) % p,
        (wit1.blind_E + r * blind_T + r2 * wit2.blind_E) % p,
    )


def fold(shape: R1csShape, ck: CommitmentKey, pair1, pair2, transcript: Transcript,
         rng=None, products1=None, products2=None):
    """Fold two relaxed (instance, witness) pairs; returns ``(comm_T, (inst, wit), r)``.

    ``products*`` may carry precomputed ``(Az, Bz, Cz)`` to skip mat-vecs.
    """
    inst1, wit1 = pair1
    inst2, wit2 = pair2
    if len(inst1.x) != shape.num_io or len(inst2.x) != shape.num_io:
        raise ShapeError("instance does not match shape")
    p = shape.p
    group = ck.group
    fld = Field(p, check_prime=False)
    if products1 is None:
        products1 = shape.products(shape.z_vector(inst1.u, inst1.x, wit1.W))
    if products2 is None:
        products2 = shape.products(shape.z_vector(inst2.u, inst2.x, wit2.W))
    T = cross_term(p, products1, inst1.u, products2, inst2.u)
    blind_T = rng.randrange(p) if rng is not None else secrets.randbelow(p)
    comm_T = commit(ck, T, blind_T)
    r = _absorb_fold(transcript, group, fld, inst1, inst2, comm_T)
    inst = fold_instances(group, p, inst1, inst2, comm_T, r)
    wit = fold_witnesses(p, wit1, wit2, T, blind_T, r)
    return comm_T, (inst, wit), r


def zero_pair(shape: R1csShape, group):
    """The trivially satisfying relaxed instance u=0, E=0, x=0, W=0."""
    inst = RelaxedInstance(group.identity, group.identity, 0, [0] * shape.num_io)
    wit = RelaxedWitness([0] * shape.num_witness, [0] * shape.num_constraints, 0, 0)
    return inst, wit


# ---------------------------------------------------------------------------
# prover
# ---------------------------------------------------------------------------


@dataclass
class StepHeader:
    comm_W: object
    comm_E: object
    u: int
    x: list
    comm_T: object


def _new_transcript(vk_digest: bytes) -> Transcript:
    t = Transcript(b"verifbfl/ivc/v1")
    t.absorb(b"vk", vk_digest)
    return t


@dataclass
class IvcState:
    pk: ProvingKey
    circuit: StepCircuit
    z0: list
    z_i: list
    i: int = 0
    running: RelaxedInstance = None
    running_wit: RelaxedWitness = None
    headers: list = field(default_factory=list)
    transcript: Transcript = None
    rng: object = None
    finalized: bool = False
    _products: tuple = None

    @classmethod
    def start(cls, pk: ProvingKey, circuit: StepCircuit, z0, rng=None) -> "IvcState":
        """Begin a recursive proof from ``z0`` (no steps yet)."""
        p = pk.shape.p
        z0 = [v % p for v in z0]
        if len(z0) != circuit.arity or circuit.arity != pk.vk.arity:
            raise ShapeError("z0 length does not match the circuit arity")
        inst, wit = zero_pair(pk.shape, pk.pp.group)
        m = pk.shape.num_constraints
        if rng is None:
            rng = random.SystemRandom()
        elif isinstance(rng, int):
            rng = random.Random(rng)
        return cls(pk, circuit, z0, list(z0), 0, inst, wit, [], _new_transcript(pk.vk.digest),
                   rng, False, ([0] * m, [0] * m, [0] * m))


def prove_step(state: IvcState, circuit: StepCircuit, step_witness, check: bool = True) -> IvcState:
    """Fold one application of F into the running instance.

    With ``check=False`` an unsatisfying witness is folded anyway (used to
    model adversarial provers; the resulting proof will not verify).
    """
    if state.finalized:
        raise RuntimeError("prover state already consumed by finalize()")
    pk = state.pk
    shape = pk.shape
    p = shape.p
    group = pk.pp.group
    ck = pk.pp.ck
    cs = synthesize_step(circuit, p, state.z_i, state.i, step_witness, recording=False, check=check)
    x2, W2 = cs.assignment()
    z2 = shape.z_vector(1, x2, W2)
    prods2 = shape.products(z2)
    if check and any((a * b - c) % p for a, b, c in zip(*prods2)):
        raise NotSatisfied("step witness does not satisfy the step circuit")
    rng = state.rng
    blind_W2 = rng.randrange(p)
    inst2 = RelaxedInstance(commit(ck, W2, blind_W2), group.identity, 1, x2)
    wit2 = RelaxedWitness(W2, [0] * shape.num_constraints, blind_W2, 0)
    comm_T, (inst, wit), r = fold(shape, ck, (state.running, state.running_wit), (inst2, wit2),
                                  state.transcript, rng, state._products, prods2)
    state._products = tuple(
        [(a + r * b) % p for a, b in zip(v1, v2)] for v1, v2 in zip(state._products, prods2)
    )
    state.headers.append(StepHeader(inst2.comm_W, inst2.comm_E, 1, x2, comm_T))
    state.running, state.running_wit = inst, wit
    a = circuit.arity
    state.z_i = x2[a : 2 * a]
    state.i += 1
    return state


@dataclass
class IvcProof:
    group_name: str
    vk_digest: bytes
    i: int
    z0: list
    z_n: list
    headers: list
    final_instance: RelaxedInstance
    final_witness: RelaxedWitness

    def to_bytes(self) -> bytes:
        group = group_by_name(self.group_name)
        fld = Field(group.order, check_prime=False)
        w = Writer().raw(PROOF_MAGIC).text(self.group_name).raw(self.vk_digest).u64(self.i)
        w.fvec(fld, self.z0).fvec(fld, self.z_n)
        w.u32(len(self.headers))
        for h in self.headers:
            w.point(group, h.comm_W).point(group, h.comm_E).felem(fld, h.u).fvec(fld, h.x)
            w.point(group, h.comm_T)
        fi = self.final_instance
        w.point(group, fi.comm_W).point(group, fi.comm_E).felem(fld, fi.u).fvec(fld, fi.x)
        fw = self.final_witness
        w.fvec(fld, fw.W).fvec(fld, fw.E).felem(fld, fw.blind_W).felem(fld, fw.blind_E)
        return w.getvalue()

    @classmethod
    def from_bytes(cls, data: bytes) -> "IvcProof":
        r = Reader(data)
        if r.raw(len(PROOF_MAGIC)) != PROOF_MAGIC:
            raise DecodeError("bad proof magic")
        name = r.text()
        group = group_by_name(name)
        fld = Field(group.order, check_prime=False)
        vk_digest = r.raw(32)
        i = r.u64()
        z0 = r.fvec(fld)
        z_n = r.fvec(fld)
        nh = r.u32()
        if nh > len(data):
            raise DecodeError("header count exceeds input")
        headers = []
        for _ in range(nh):
            cw = r.point(group)
            ce = r.point(group)
            u = r.felem(fld)
            x = r.fvec(fld)
            ct = r.point(group)
            headers.append(StepHeader(cw, ce, u, x, ct))
        fi = RelaxedInstance(r.point(group), r.point(group), r.felem(fld), r.fvec(fld))
        fw = RelaxedWitness(r.fvec(fld), r.fvec(fld), r.felem(fld), r.felem(fld))
        r.done()
        return cls(name, vk_digest, i, z0, z_n, headers, fi, fw)

    def __len__(self):
        return len(self.to_bytes())


def finalize(state: IvcState, pk: ProvingKey) -> IvcProof:
    """Package the folding transcript and the final opening."""
    if state.pk is not pk and state.pk.vk.digest != pk.vk.digest:
        raise ParamMismatch("state was produced under a different proving key")
    state.finalized = True
    return IvcProof(pk.pp.group_name, pk.vk.digest, state.i, list(state.z0), list(state.z_i),
                    list(state.headers), state.running, state.running_wit)


def prove(pk: ProvingKey, circuit: StepCircuit, z0, witnesses, rng=None) -> IvcProof:
    state = IvcState.start(pk, circuit, z0, rng)
    for w in witnesses:
        prove_step(state, circuit, w)
    return finalize(state, pk)


# ---------------------------------------------------------------------------
# verifier
# ---------------------------------------------------------------------------


def verify(vk: VerifyingKey, i: int, z0, z_n, proof: IvcProof) -> bool:
    """V(vk, (i, z0, z_n), pi) -> bool."""
    try:
        return _verify(vk, i, z0, z_n, proof)
    except (ShapeError, ValueError) as exc:
        log.debug("proof rejected: %s", exc)
        return False


def verify_bytes(vk: VerifyingKey, i: int, z0, z_n, data: bytes) -> bool:
    """Decode then verify; malformed encodings raise DecodeError."""
    return verify(vk, i, z0, z_n, IvcProof.from_bytes(data))


def _verify(vk, i, z0, z_n, proof) -> bool:
    shape = vk.shape
    p = shape.p
    group = vk.pp.group
    a = vk.arity
    ell = shape.num_io
    if proof.group_name != vk.pp.group_name or proof.vk_digest != vk.digest:
        return False
    z0 = [v % p for v in z0]
    z_n = [v % p for v in z_n]
    if len(z0) != a or len(z_n) != a or proof.z0 != z0 or proof.z_n != z_n:
        return False
    if i < 0 or proof.i != i or len(proof.headers) != i:
        return False
    if i == 0 and z0 != z_n:
        return False
    fld = Field(p, check_prime=False)
    transcript = _new_transcript(vk.digest)
    running, _ = zero_pair(shape, group)
    prev = z0
    for k, h in enumerate(proof.headers):
        if h.u != 1 or not group.is_identity(h.comm_E) or len(h.x) != ell:
            return False
        if h.x[:a] != prev or h.x[2 * a] != k:
            return False
        prev = h.x[a : 2 * a]
        inst2 = RelaxedInstance(h.comm_W, h.comm_E, 1, h.x)
        r = _absorb_fold(transcript, group, fld, running, inst2, h.comm_T)
        running = fold_instances(group, p, running, inst2, h.comm_T, r)
    if prev != z_n:
        return False
    fi = proof.final_instance
    if (fi.comm_W, fi.comm_E, fi.u, list(fi.x)) != (running.comm_W, running.comm_E, running.u, running.x):
        return False
    fw = proof.final_witness
    if len(fw.W) != shape.num_witness or len(fw.E) != shape.num_constraints:
        return False
    ck = vk.pp.ck
    if commit(ck, fw.W, fw.blind_W) != running.comm_W:
        return False
    if commit(ck, fw.E, fw.blind_E) != running.comm_E:
        return False
    return relation_holds(shape, running.u, running.x, fw.W, fw.E)
