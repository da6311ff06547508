"""Updatable DPF: epoch-keyed output conversion with replaceable final CW.

Leaf outputs are converted with the random oracle ``H(s, epoch)`` instead of the
PRG, so the final correction word for epoch ``e`` is
``(-1)^t1 * [beta - H(s0, e) + H(s1, e)]`` and re-targeting beta only needs a
fresh final CW (the hint). Epoch 0 already uses ``H(., 0)``.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field
from random import Random
from typing import Sequence

import numpy as np

from . import kernels
from .dpf import (
    DpfKey,
    DpfParams,
    _gen_with,
    eval_full_rows,
    eval_seed,
    final_correction,
    leaf_share,
)
from .errors import FormatError, ParameterError, SequencingError
from .group import GroupParams, GroupVector
from .primitives import ro_hash_to_group

HINT_MAGIC = b"UHNT"
HINT_HEADER = struct.Struct(">4sQI")


@dataclass(frozen=True)
class UdpfKey:
    inner: DpfKey
    epoch: int = 0

    @property
    def party(self) -> int:
        return self.inner.party

    @property
    def params(self) -> DpfParams:
        return self.inner.params


@dataclass
class ClientTrapdoor:
    """Final-level seeds and t1 on the path to alpha; enough to issue hints."""

    s0: bytes
    s1: bytes
    t1: int
    group: GroupParams
    epoch: int = 0


@dataclass(frozen=True)
class Hint:
    epoch: int
    new_final_cws: tuple = field(default_factory=tuple)

    def to_bytes(self) -> bytes:
        return HINT_HEADER.pack(HINT_MAGIC, self.epoch, len(self.new_final_cws)) + b"".join(
            cw.to_bytes() for cw in self.new_final_cws
        )

    @classmethod
    def from_bytes(cls, data: bytes, group: GroupParams) -> "Hint":
        if len(data) < HINT_HEADER.size:
            raise FormatError("truncated hint header")
        magic, epoch, count = HINT_HEADER.unpack_from(data)
        if magic != HINT_MAGIC:
            raise FormatError(f"bad hint magic {magic!r}")
        width = group.element_bytes
        body = data[HINT_HEADER.size :]
        if len(body) != count * width:
            raise FormatError(f"hint body is {len(body)} bytes, expected {count * width}")
        cws = tuple(GroupVector.from_bytes(body[i * width : (i + 1) * width], group) for i in range(count))
        return cls(epoch, cws)

    def per_key_bits(self) -> int:
        if not self.new_final_cws:
            return 0
        return self.new_final_cws[0].params.element_bits


def merge_hints(hints: Sequence[Hint]) -> Hint:
    epochs = {h.epoch for h in hints}
    if len(epochs) > 1:
        raise SequencingError(f"hints span several epochs: {sorted(epochs)}")
    return Hint(hints[0].epoch, tuple(cw for h in hints for cw in h.new_final_cws))


def split_hint(hint: Hint) -> list[Hint]:
    return [Hint(hint.epoch, (cw,)) for cw in hint.new_final_cws]


def udpf_gen(
    params: DpfParams,
    alpha: int,
    beta: GroupVector,
    seeds: tuple[bytes, bytes] | None = None,
    rng: Random | None = None,
) -> tuple[UdpfKey, UdpfKey, ClientTrapdoor]:
    group = params.group
    (k0, k1), (s0, s1, t1) = _gen_with(
        params, alpha, beta, seeds, rng, lambda s: ro_hash_to_group(s, 0, group)
    )
    return UdpfKey(k0, 0), UdpfKey(k1, 0), ClientTrapdoor(s0, s1, t1, group, 0)


def next_final_cw(s0: bytes, s1: bytes, t1: int, beta: GroupVector, epoch: int) -> GroupVector:
    group = beta.params
    return final_correction(
        beta, ro_hash_to_group(s0, epoch, group), ro_hash_to_group(s1, epoch, group), t1
    )


def udpf_next(trapdoor: ClientTrapdoor, beta_prime: GroupVector, epoch: int) -> Hint:
    """Issue the hint moving a key pair to ``beta_prime`` at ``epoch``.

    Advances the trapdoor's epoch; epochs must increase by exactly one.
    """
    if epoch != trapdoor.epoch + 1:
        raise SequencingError(f"next epoch must be {trapdoor.epoch + 1}, got {epoch}")
    if beta_prime.params != trapdoor.group:
        raise ParameterError("beta' group does not match the key group")
    cw = next_final_cw(trapdoor.s0, trapdoor.s1, trapdoor.t1, beta_prime, epoch)
    trapdoor.epoch = epoch
    return Hint(epoch, (cw,))


def udpf_next_from_keys(k0: UdpfKey, k1: UdpfKey, alpha: int, beta_prime: GroupVector, epoch: int) -> Hint:
    """Two-key form of Next: re-walk both keys to alpha instead of using a trapdoor."""
    if k0.epoch != k1.epoch or epoch != k0.epoch + 1:
        raise SequencingError("keys must share an epoch one below the target")
    s0, _ = eval_seed(k0.inner, alpha)
    s1, t1 = eval_seed(k1.inner, alpha)
    return Hint(epoch, (next_final_cw(s0, s1, t1, beta_prime, epoch),))


def udpf_update(key: UdpfKey, hint: Hint, index: int = 0) -> UdpfKey:
    if hint.epoch != key.epoch + 1:
        raise SequencingError(f"hint epoch {hint.epoch} does not follow key epoch {key.epoch}")
    cw = hint.new_final_cws[index]
    if cw.params != key.params.group:
        raise ParameterError("hint group does not match key group")
    inner = key.inner
    return UdpfKey(DpfKey(inner.party, inner.root_seed, inner.public.with_final_cw(cw), inner.params), hint.epoch)


def udpf_eval(key: UdpfKey, x: int) -> GroupVector:
    seed, t = eval_seed(key.inner, x)
    group = key.params.group
    return leaf_share(key.party, ro_hash_to_group(seed, key.epoch, group), t, key.inner.public.final_cw)


def udpf_converter(epoch: int):
    def convert(seeds: np.ndarray, nbytes: int) -> np.ndarray:
        return kernels.ro_hash_many(seeds, epoch, nbytes)

    return convert


def udpf_eval_full_rows(keys: Sequence[UdpfKey], count: int | None = None) -> list[list[tuple]]:
    epochs = {k.epoch for k in keys}
    if len(epochs) != 1:
        raise SequencingError("batched UDPF keys must share one epoch")
    return eval_full_rows([k.inner for k in keys], count, udpf_converter(epochs.pop()))


def udpf_eval_full(key: UdpfKey) -> list[GroupVector]:
    group = key.params.group
    (rows,) = udpf_eval_full_rows([key])
    return [GroupVector(group, r) for r in rows]
