"""Pedersen-style vector commitments over a prime-order group."""
from __future__ import annotations

from verifbfl.errors import KeyTooShort

CK_SEED = b"verifbfl/ck/v1"


class CommitmentKey:
    """Generators G_0..G_{n-1} followed by the blinding generator H.

    All generators are hash-to-group images of the public seed, so there is
    no trapdoor beyond the seed itself.
    """

    def __init__(self, group, length: int, seed: bytes = CK_SEED):
        self.group = group
        self.seed = seed
        self.length = length
        gens = [group.hash_to_group(seed, i.to_bytes(8, "little")) for i in range(length)]
        gens.append(group.hash_to_group(seed, b"blind"))
        self.generators = gens
        self._table = None

    def __repr__(self):
        return f"CommitmentKey({self.group!r}, length={self.length})"

    @property
    def blinding_generator(self):
        return self.generators[-1]

    @property
    def table(self):
        if self._table is None:
            self._table = self.group.precompute(self.generators[:-1])
        return self._table

    def commit(self, v, blind: int):
        return commit(self, v, blind)


def commit(ck: CommitmentKey, v, blind: int):
    """sum_i v_i * G_i + blind * H."""
    if len(v) > len(ck.generators) - 1:
        raise KeyTooShort(f"vector of length {len(v)} exceeds key length {ck.length}")
    g = ck.group
    vals = [int(x) for x in v]
    if not vals:
        body = g.identity
    else:
        table = ck.table
        if table is not None and len(table.rows[0]) != len(vals):
            # fixed-base tables are indexed by generator position; pad
            vals = vals + [0] * (len(table.rows[0]) - len(vals))
        body = g.msm(vals, ck.generators[: len(vals)], table)
    blind = int(blind) % g.order
    if blind == 0:
        return body
    return g.add(body, g.mul(ck.blinding_generator, blind))
