from verifbfl.algebra.commitment import CK_SEED, CommitmentKey, commit
from verifbfl.algebra.field import Field, FieldElement
from verifbfl.algebra.group import (
    SECP256K1,
    TEST_GROUP,
    SchnorrGroup,
    Secp256k1,
    group_by_name,
    group_for_level,
    tiny_group,
)
from verifbfl.algebra.transcript import Transcript

__all__ = [
    "CK_SEED",
    "CommitmentKey",
    "commit",
    "Field",
    "FieldElement",
    "SECP256K1",
    "TEST_GROUP",
    "SchnorrGroup",
    "Secp256k1",
    "group_by_name",
    "group_for_level",
    "tiny_group",
    "Transcript",
]
