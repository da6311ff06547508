"""Additive group Z_{2^l} and tau-wide vectors over it."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

from .errors import ParameterError

ALLOWED_BITS = (32, 64, 128)


@dataclass(frozen=True)
class GroupParams:
    l: int = 128
    tau: int = 1

    def __post_init__(self) -> None:
        if self.l not in ALLOWED_BITS:
            raise ParameterError(f"l must be one of {ALLOWED_BITS}, got {self.l}")
        if self.tau < 1:
            raise ParameterError(f"tau must be >= 1, got {self.tau}")

    @property
    def modulus(self) -> int:
        return 1 << self.l

    @property
    def mask(self) -> int:
        return (1 << self.l) - 1

    @property
    def element_bits(self) -> int:
        """Mega-element size L = tau * l."""
        return self.tau * self.l

    @property
    def element_bytes(self) -> int:
        return self.tau * self.l // 8

    def zero(self) -> "GroupVector":
        return GroupVector(self, (0,) * self.tau)

    def one(self) -> "GroupVector":
        return GroupVector(self, (1,) * self.tau)

    def vector(self, values: Iterable[int]) -> "GroupVector":
        mask = self.mask
        return GroupVector(self, tuple(int(v) & mask for v in values))

    def scalar(self, value: int) -> "GroupVector":
        return self.vector([value] * self.tau)


@dataclass(frozen=True, slots=True)
class GroupVector:
    params: GroupParams
    elems: tuple

    def __post_init__(self) -> None:
        if len(self.elems) != self.params.tau:
            raise ParameterError(
                f"expected {self.params.tau} components, got {len(self.elems)}"
            )

    def __add__(self, other: "GroupVector") -> "GroupVector":
        return group_add(self, other)

    def __neg__(self) -> "GroupVector":
        return group_neg(self)

    def __sub__(self, other: "GroupVector") -> "GroupVector":
        return group_add(self, group_neg(other))

    def is_zero(self) -> bool:
        return not any(self.elems)

    def to_bytes(self) -> bytes:
        width = self.params.l // 8
        return b"".join(v.to_bytes(width, "big") for v in self.elems)

    @classmethod
    def from_bytes(cls, data: bytes, params: GroupParams) -> "GroupVector":
        width = params.l // 8
        if len(data) != width * params.tau:
            raise ParameterError(
                f"expected {width * params.tau} bytes for {params}, got {len(data)}"
            )
        return cls(
            params,
            tuple(
                int.from_bytes(data[i : i + width], "big")
                for i in range(0, len(data), width)
            ),
        )


def group_add(a: GroupVector, b: GroupVector) -> GroupVector:
    if a.params != b.params:
        raise ParameterError(f"group mismatch: {a.params} vs {b.params}")
    mask = a.params.mask
    return GroupVector(a.params, tuple((x + y) & mask for x, y in zip(a.elems, b.elems)))


def group_neg(a: GroupVector) -> GroupVector:
    mask = a.params.mask
    return GroupVector(a.params, tuple((-x) & mask for x in a.elems))


def group_sum(vectors: Iterable[GroupVector], params: GroupParams) -> GroupVector:
    mask = params.mask
    acc = [0] * params.tau
    for v in vectors:
        if v.params != params:
            raise ParameterError(f"group mismatch: {v.params} vs {params}")
        for i, x in enumerate(v.elems):
            acc[i] += x
    return GroupVector(params, tuple(x & mask for x in acc))


def group_weights(flat: Sequence[int], params: GroupParams) -> list[GroupVector]:
    """Pack a flat weight list into mega-elements of width tau, zero-padding the tail."""
    tau = params.tau
    out = []
    for start in range(0, len(flat), tau):
        chunk = list(flat[start : start + tau])
        chunk.extend([0] * (tau - len(chunk)))
        out.append(params.vector(chunk))
    return out


def ungroup_weights(vectors: Sequence[GroupVector], m: int) -> list[int]:
    flat = [x for v in vectors for x in v.elems]
    return flat[:m]
