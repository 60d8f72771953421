"""Rank-1 constraint systems, the relaxed variant, and a circuit builder.

Variable layout is fixed as ``z = (u, x, W)``: column 0 is the constant-one
wire (scaled by ``u`` in the relaxed relation), then the public IO ``x``,
then the private witness ``W``.  Folding relies on this layout never
changing between synthesis and verification.
"""
from __future__ import annotations

import hashlib
import operator
import secrets
import struct
from dataclasses import dataclass

from verifbfl.algebra import commit
from verifbfl.errors import DecodeError, NotSatisfied, ShapeError

ONE = 0


def _matvec(rows, z, p):
    mul = operator.mul
    out = []
    for cols, vals in rows:
        if not cols:
            out.append(0)
        elif len(cols) == 1:
            out.append(vals[0] * z[cols[0]] % p)
        else:
            out.append(sum(map(mul, vals, [z[c] for c in cols])) % p)
    return out


@dataclass(frozen=True)
class R1csShape:
    """A, B, C as sparse rows of (column tuple, value tuple), columns ascending."""

    p: int
    num_io: int
    num_witness: int
    A: tuple
    B: tuple
    C: tuple

    def __post_init__(self):
        m = len(self.A)
        if len(self.B) != m or len(self.C) != m:
            raise ShapeError("A, B, C must have the same number of rows")
        ncols = self.num_cols
        for mat in (self.A, self.B, self.C):
            for cols, vals in mat:
                if len(cols) != len(vals):
                    raise ShapeError("ragged sparse row")
                if cols and (cols[-1] >= ncols or cols[0] < 0):
                    raise ShapeError("column index out of range")

    @property
    def num_constraints(self) -> int:
        return len(self.A)

    @property
    def num_cols(self) -> int:
        return 1 + self.num_io + self.num_witness

    def triples(self, which: str):
        mat = getattr(self, which)
        for r, (cols, vals) in enumerate(mat):
            for c, v in zip(cols, vals):
                yield r, c, v

    def nnz(self) -> int:
        return sum(len(cols) for mat in (self.A, self.B, self.C) for cols, _ in mat)

    def z_vector(self, u: int, x, W):
        if len(x) != self.num_io:
            raise ShapeError(f"expected {self.num_io} public inputs, got {len(x)}")
        if len(W) != self.num_witness:
            raise ShapeError(f"expected {self.num_witness} witness values, got {len(W)}")
        return [u % self.p, *x, *W]

    def products(self, z):
        p = self.p
        return _matvec(self.A, z, p), _matvec(self.B, z, p), _matvec(self.C, z, p)

    def encode(self) -> bytes:
        """Deterministic binary encoding, hashed into keys."""
        width = (self.p.bit_length() + 7) // 8
        out = [b"R1CS1", struct.pack("<H", width), self.p.to_bytes(width, "little")]
        out.append(struct.pack("<III", self.num_constraints, self.num_io, self.num_witness))
        for name in "ABC":
            trip = list(self.triples(name))
            out.append(struct.pack("<I", len(trip)))
            for r, c, v in trip:
                out.append(struct.pack("<II", r, c))
                out.append(v.to_bytes(width, "little"))
        return b"".join(out)

    @classmethod
    def decode(cls, data: bytes) -> "R1csShape":
        try:
            if data[:5] != b"R1CS1":
                raise DecodeError("bad shape magic")
            pos = 5
            (width,) = struct.unpack_from("<H", data, pos)
            pos += 2
            p = int.from_bytes(data[pos : pos + width], "little")
            pos += width
            m, ell, w = struct.unpack_from("<III", data, pos)
            pos += 12
            mats = []
            for _ in range(3):
                (nnz,) = struct.unpack_from("<I", data, pos)
                pos += 4
                rows = [([], []) for _ in range(m)]
                for _ in range(nnz):
                    r, c = struct.unpack_from("<II", data, pos)
                    pos += 8
                    v = int.from_bytes(data[pos : pos + width], "little")
                    pos += width
                    if r >= m or v >= p:
                        raise DecodeError("bad shape entry")
                    rows[r][0].append(c)
                    rows[r][1].append(v)
                mats.append(tuple((tuple(c), tuple(v)) for c, v in rows))
            if pos != len(data):
                raise DecodeError("trailing bytes in shape")
            return cls(p, ell, w, *mats)
        except (struct.error, IndexError, ShapeError) as exc:
            raise DecodeError(f"malformed shape: {exc}") from exc

    @property
    def digest(self) -> bytes:
        return hashlib.sha256(self.encode()).digest()


@dataclass
class RelaxedInstance:
    comm_W: object
    comm_E: object
    u: int
    x: list


@dataclass
class RelaxedWitness:
    W: list
    E: list
    blind_W: int = 0
    blind_E: int = 0


def relation_holds(shape: R1csShape, u: int, x, W, E) -> bool:
    """Az o Bz == u*Cz + E with z = (u, x, W)."""
    if len(E) != shape.num_constraints:
        raise ShapeError("E length must equal the number of constraints")
    p = shape.p
    z = shape.z_vector(u, x, W)
    Az, Bz, Cz = shape.products(z)
    return all((a * b - u * c - e) % p == 0 for a, b, c, e in zip(Az, Bz, Cz, E))


def is_satisfied(shape: R1csShape, inst: RelaxedInstance, wit: RelaxedWitness, ck=None) -> bool:
    """Relaxed relation plus commitment openings (skipped when ``ck`` is None)."""
    if len(inst.x) != shape.num_io:
        raise ShapeError("instance IO length does not match shape")
    if len(wit.W) != shape.num_witness or len(wit.E) != shape.num_constraints:
        raise ShapeError("witness dimensions do not match shape")
    if ck is not None:
        if commit(ck, wit.W, wit.blind_W) != inst.comm_W:
            return False
        if commit(ck, wit.E, wit.blind_E) != inst.comm_E:
            return False
    return relation_holds(shape, inst.u, inst.x, wit.W, wit.E)


def from_standard(shape: R1csShape, ck, public_io, witness, blind_W=None, blind_E=0, rng=None):
    """Embed a satisfying standard assignment as (u=1, E=0)."""
    p = shape.p
    x = [v % p for v in public_io]
    W = [v % p for v in witness]
    E = [0] * shape.num_constraints
    if not relation_holds(shape, 1, x, W, E):
        raise NotSatisfied("witness does not satisfy the R1CS")
    if blind_W is None:
        blind_W = rng.randrange(p) if rng is not None else secrets.randbelow(p)
    inst = RelaxedInstance(commit(ck, W, blind_W), commit(ck, E, blind_E), 1, x)
    return inst, RelaxedWitness(W, E, blind_W % p, blind_E % p)


# ---------------------------------------------------------------------------
# circuit builder
# ---------------------------------------------------------------------------


class LC:
    """Linear combination of variables with its current value.

    ``terms`` is ``None`` when the system is not recording constraints, which
    keeps witness-only synthesis cheap.
    """

    __slots__ = ("terms", "value", "p")

    def __init__(self, terms, value: int, p: int):
        self.terms = terms
        self.value = value % p
        self.p = p

    def _merge(self, other_terms, scale):
        p = self.p
        t = dict(self.terms)
        get = t.get
        for k, v in other_terms.items():
            nv = (get(k, 0) + scale * v) % p
            if nv:
                t[k] = nv
            else:
                t.pop(k, None)
        return t

    def __add__(self, other):
        p = self.p
        if isinstance(other, LC):
            terms = None if self.terms is None else self._merge(other.terms, 1)
            return LC(terms, self.value + other.value, p)
        other = int(other)
        terms = None if self.terms is None else self._merge({ONE: other}, 1)
        return LC(terms, self.value + other, p)

    __radd__ = __add__

    def __sub__(self, other):
        p = self.p
        if isinstance(other, LC):
            terms = None if self.terms is None else self._merge(other.terms, -1)
            return LC(terms, self.value - other.value, p)
        other = int(other)
        terms = None if self.terms is None else self._merge({ONE: other}, -1)
        return LC(terms, self.value - other, p)

    def __rsub__(self, other):
        return (-self) + other

    def __neg__(self):
        p = self.p
        terms = None if self.terms is None else {k: (-v) % p for k, v in self.terms.items()}
        return LC(terms, -self.value, p)

    def __mul__(self, k):
        if isinstance(k, LC):
            raise TypeError("use ConstraintSystem.mul for products of variables")
        p = self.p
        k = int(k) % p
        if self.terms is None:
            return LC(None, self.value * k, p)
        if k == 0:
            return LC({}, 0, p)
        return LC({v: c * k % p for v, c in self.terms.items()}, self.value * k, p)

    __rmul__ = __mul__

    def __repr__(self):
        return f"LC(value={self.value}, nterms={None if self.terms is None else len(self.terms)})"


def lc_sum(items, cs):
    acc = cs.const(0)
    for it in items:
        acc = acc + it
    return acc


class ConstraintSystem:
    """Records constraints (optional) and assigns values in one pass.

    ``check=True`` raises :class:`NotSatisfied` at the first violated
    constraint; ``check=False`` lets adversarial assignments through so the
    resulting instance can be shown unsatisfiable by the checker.
    """

    def __init__(self, p: int, recording: bool = True, check: bool = True):
        self.p = p
        self.recording = recording
        self.check = check
        self.pub_values = []
        self.wit_values = []
        self.rows = []
        self.violations = 0
        self.max_abs_signed = 0

    def _var(self, key, value):
        return LC({key: 1} if self.recording else None, value, self.p)

    def const(self, v: int) -> LC:
        v %= self.p
        return LC(({ONE: v} if v else {}) if self.recording else None, v, self.p)

    def one(self) -> LC:
        return self.const(1)

    def alloc(self, value: int) -> LC:
        value = int(value)
        self.wit_values.append(value % self.p)
        return self._var(len(self.wit_values), value)

    def alloc_public(self, value: int) -> LC:
        value = int(value)
        self.pub_values.append(value % self.p)
        return self._var(-len(self.pub_values), value)

    def alloc_public_slot(self):
        """Reserve a public input whose value is filled in later.

        Returns ``(index, var)``; pass ``index`` to :meth:`set_public`.
        """
        self.pub_values.append(0)
        idx = len(self.pub_values) - 1
        return idx, self._var(-(idx + 1), 0)

    def set_public(self, index: int, value: int) -> None:
        self.pub_values[index] = value % self.p

    def enforce(self, a: LC, b: LC, c: LC) -> None:
        if self.recording:
            self.rows.append((a.terms, b.terms, c.terms))
        if (a.value * b.value - c.value) % self.p:
            self.violations += 1
            if self.check:
                raise NotSatisfied(f"constraint {len(self.rows) - 1} violated")

    def enforce_equal(self, a: LC, b) -> None:
        self.enforce(a - b, self.one(), self.const(0))

    def mul(self, a: LC, b: LC) -> LC:
        c = self.alloc(a.value * b.value)
        self.enforce(a, b, c)
        return c

    def track(self, signed_value: int) -> None:
        """Instrumentation hook: record magnitudes of range-checked wires."""
        a = abs(signed_value)
        if a > self.max_abs_signed:
            self.max_abs_signed = a

    @property
    def num_constraints(self) -> int:
        return len(self.rows)

    def shape(self) -> R1csShape:
        if not self.recording:
            raise ShapeError("constraint system was not recording")
        ell = len(self.pub_values)

        def col(key):
            if key == ONE:
                return 0
            if key < 0:
                return -key
            return ell + key

        def conv(terms):
            items = sorted((col(k), v) for k, v in terms.items() if v)
            return tuple(c for c, _ in items), tuple(v for _, v in items)

        A = tuple(conv(a) for a, _, _ in self.rows)
        B = tuple(conv(b) for _, b, _ in self.rows)
        C = tuple(conv(c) for _, _, c in self.rows)
        return R1csShape(self.p, ell, len(self.wit_values), A, B, C)

    def assignment(self):
        return list(self.pub_values), list(self.wit_values)
