"""Step circuit for the proof of accuracy: one inference per step.

Public state ``z = [counter, model_digest, context, sample_chain]``:

* ``counter`` counts correct predictions so far;
* ``model_digest`` is the sponge digest of the weights, re-checked every step
  against the private weights;
* ``context`` binds the task, round, trainer and starting global model and is
  carried unchanged;
* ``sample_chain`` absorbs every evaluated sample, so the final value pins the
  exact eval set and its order.

The step witness is ``(weights, features, label)`` where weights and features
are signed fixed-point integers.
"""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

from verifbfl.circuits.fixedpoint import FixedPointConfig
from verifbfl.circuits.gadgets import boolean, relu, rescale, range_check
from verifbfl.circuits.sponge import DOMAIN_CONTEXT, DOMAIN_MODEL, DOMAIN_SAMPLE, hash_elements, hash_gadget
from verifbfl.errors import EmptyEvalSet, UnsupportedArch
from verifbfl.fl.model import QuantizedModel, predict
from verifbfl.ivc import StepCircuit, build_shape
from verifbfl.r1cs import lc_sum

COUNTER, MODEL, CONTEXT, CHAIN = range(4)


@dataclass(frozen=True)
class InferenceStepSpec:
    dims: tuple
    cfg: FixedPointConfig = FixedPointConfig()
    activation: str = "relu"

    def __post_init__(self):
        if self.activation != "relu":
            raise UnsupportedArch(f"unsupported activation {self.activation!r}")
        if len(self.dims) < 2 or min(self.dims) < 1:
            raise UnsupportedArch("an MLP needs at least an input and an output layer")
        if self.dims[-1] < 2:
            raise UnsupportedArch("classification needs at least two classes")

    @property
    def num_features(self) -> int:
        return self.dims[0]

    @property
    def num_classes(self) -> int:
        return self.dims[-1]

    @property
    def num_params(self) -> int:
        return sum(i * o + o for i, o in zip(self.dims[:-1], self.dims[1:]))

    def encode(self) -> bytes:
        d = b"".join(int(x).to_bytes(4, "little") for x in self.dims)
        return b"INF1" + len(self.dims).to_bytes(4, "little") + d + bytes(
            [self.cfg.scale_bits, self.cfg.value_bits]
        ) + self.activation.encode()


class InferenceStep(StepCircuit):
    arity = 4

    def __init__(self, spec: InferenceStepSpec, p: int):
        spec.cfg.check_field(p, max(spec.dims[:-1]))
        self.spec = spec
        self.p = p

    def dummy_witness(self):
        return [0] * self.spec.num_params, [0] * self.spec.num_features, 0

    def synthesize(self, cs, z_in, witness):
        spec = self.spec
        s = spec.cfg.scale_bits
        b = spec.cfg.value_bits
        weights, features, label = witness
        if len(weights) != spec.num_params or len(features) != spec.num_features:
            raise UnsupportedArch("witness does not match the architecture")

        wv = [cs.alloc(v) for v in weights]
        cs.enforce_equal(hash_gadget(cs, wv, DOMAIN_MODEL), z_in[MODEL])

        x = [cs.alloc(v) for v in features]
        C = spec.num_classes
        onehot_t = [boolean(cs, int(c == label)) for c in range(C)]
        cs.enforce_equal(lc_sum(onehot_t, cs), cs.one())
        label_lc = lc_sum((t * c for c, t in enumerate(onehot_t)), cs)
        chain_out = hash_gadget(cs, [z_in[CHAIN], *x, label_lc], DOMAIN_SAMPLE)

        # forward pass
        h = x
        pos = 0
        n_layers = len(spec.dims) - 1
        for li, (n_in, n_out) in enumerate(zip(spec.dims[:-1], spec.dims[1:])):
            W = wv[pos : pos + n_in * n_out]
            pos += n_in * n_out
            bias = wv[pos : pos + n_out]
            pos += n_out
            out = []
            for o in range(n_out):
                acc = bias[o] * (1 << s)
                for j in range(n_in):
                    acc = acc + cs.mul(W[o * n_in + j], h[j])
                q, nonneg = rescale(cs, acc, s, b)
                out.append(q if li == n_layers - 1 else relu(cs, q, nonneg))
            h = out
        logits = h

        # argmax by one-hot hint; strict inequality below the index
        vals = [_signed(lg.value, cs.p) for lg in logits]
        idx = max(range(C), key=lambda c: (vals[c], -c))
        sel = [boolean(cs, int(c == idx)) for c in range(C)]
        cs.enforce_equal(lc_sum(sel, cs), cs.one())
        best = lc_sum((cs.mul(sc, lg) for sc, lg in zip(sel, logits)), cs)
        for c in range(C):
            below = lc_sum(sel[c + 1 :], cs)  # 1 iff c < idx
            range_check(cs, best - logits[c] - below, b + 1)

        correct = lc_sum((cs.mul(sc, tc) for sc, tc in zip(sel, onehot_t)), cs)
        return [z_in[COUNTER] + correct, z_in[MODEL], z_in[CONTEXT], chain_out]

    def step(self, z, witness):
        weights, features, label = witness
        p = self.p
        model = QuantizedModel.from_flat(self.spec.dims, weights, self.spec.cfg)
        c = int(predict(model, features) == label)
        chain = hash_elements(p, [z[CHAIN], *[v % p for v in features], label], DOMAIN_SAMPLE)
        return [(z[COUNTER] + c) % p, z[MODEL], z[CONTEXT], chain]


def _signed(v, p):
    return v - p if v > p // 2 else v


def build_inference_step(spec: InferenceStepSpec, p: int):
    """Returns ``(shape, circuit)``; the circuit synthesizes step witnesses."""
    circuit = InferenceStep(spec, p)
    return build_shape(circuit, p), circuit


def context_digest(p: int, *parts) -> int:
    """Field digest of public context values (ints or bytes)."""
    return hash_elements(p, pack_parts(p, parts), DOMAIN_CONTEXT)


def pack_parts(p: int, parts) -> list:
    """Bytes are split into chunks that fit below p, prefixed by their length."""
    chunk = max(1, (p.bit_length() - 1) // 8)
    vals = []
    for part in parts:
        if isinstance(part, str):
            part = part.encode("utf-8")
        if isinstance(part, (bytes, bytearray)):
            part = bytes(part)
            vals.append(len(part))
            vals.extend(int.from_bytes(part[i : i + chunk], "little") for i in range(0, len(part), chunk))
        else:
            vals.append(int(part) % p)
    return vals


def sample_chain(p: int, start: int, samples) -> int:
    """Native replay of the chain the circuit builds over (features, label)."""
    h = start
    for features, label in samples:
        h = hash_elements(p, [h, *[int(v) % p for v in features], int(label)], DOMAIN_SAMPLE)
    return h


def accuracy_from_counter(z_n: int, n: int) -> Fraction:
    """Correct predictions over total predictions, exactly."""
    if n == 0:
        raise EmptyEvalSet("accuracy of an empty evaluation set")
    if not 0 <= z_n <= n:
        raise ValueError("counter must lie in [0, n]")
    return Fraction(z_n, n)
