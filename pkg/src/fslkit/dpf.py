"""Two-party tree DPF over Z_{2^l}^tau.

Party 0 starts with control bit 0 and party 1 with control bit 1. Level ``i``
consumes bit ``depth-1-i`` of the input, so leaves come out in index order.
A party's share at ``x`` is ``(-1)^b * (convert(s) + t * final_cw)``.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from functools import cached_property
from random import Random
from typing import Callable, Sequence

import numpy as np

from . import kernels, limbs
from .errors import DomainError, FormatError, ParameterError, ResourceError
from .group import GroupParams, GroupVector, group_add, group_neg
from .primitives import (
    LAMBDA,
    SEED_BYTES,
    check_seed,
    convert_to_group,
    random_seed,
)

MAX_DEPTH = 32
MAX_FULL_DEPTH = 24
MAGIC_KEY = b"DPF1"
MAGIC_PUBLIC = b"DPFP"
HEADER = struct.Struct(">4sBBH")


@dataclass(frozen=True)
class DpfParams:
    depth: int
    group: GroupParams = GroupParams()

    def __post_init__(self) -> None:
        if not 1 <= self.depth <= MAX_DEPTH:
            raise ParameterError(f"depth must be in [1, {MAX_DEPTH}], got {self.depth}")

    @property
    def domain_size(self) -> int:
        return 1 << self.depth

    def public_bits(self) -> int:
        return self.depth * (LAMBDA + 2) + self.group.element_bits

    def key_bits(self) -> int:
        """Payload size n(lambda+2) + lambda + tau*l of one key."""
        return self.public_bits() + LAMBDA

    def public_bytes(self) -> int:
        return -(-self.public_bits() // 8)

    def key_bytes(self) -> int:
        return -(-self.key_bits() // 8)


@dataclass(frozen=True)
class CorrectionWord:
    seed_cw: bytes
    t_left_cw: int
    t_right_cw: int


@dataclass(frozen=True)
class DpfPublicPart:
    cws: tuple
    final_cw: GroupVector

    @cached_property
    def cw_seed_bytes(self) -> bytes:
        return b"".join(cw.seed_cw for cw in self.cws)

    @cached_property
    def cw_bit_bytes(self) -> bytes:
        return bytes(cw.t_left_cw | (cw.t_right_cw << 1) for cw in self.cws)

    def with_final_cw(self, final_cw: GroupVector) -> "DpfPublicPart":
        return DpfPublicPart(self.cws, final_cw)


@dataclass(frozen=True)
class DpfKey:
    party: int
    root_seed: bytes
    public: DpfPublicPart
    params: DpfParams

    @property
    def depth(self) -> int:
        return self.params.depth


def _check_index(x: int, params: DpfParams) -> None:
    if not 0 <= x < params.domain_size:
        raise DomainError(f"index {x} outside [0, {params.domain_size})")


def gen_tree(params: DpfParams, alpha: int, seeds: tuple[bytes, bytes]):
    """Walk both parties down the path to ``alpha``.

    Returns the correction words and the final (seed, control bit) of each party.
    """
    depth = params.depth
    cw_seeds, cw_bits, s0, s1, t1 = kernels.gen_tree(seeds[0], seeds[1], alpha, depth)
    cws = tuple(
        CorrectionWord(cw_seeds[16 * i : 16 * i + 16], cw_bits[i] & 1, cw_bits[i] >> 1) for i in range(depth)
    )
    return cws, (s0, 0), (s1, t1)


def final_correction(beta: GroupVector, c0: GroupVector, c1: GroupVector, t1: int) -> GroupVector:
    cw = group_add(group_add(beta, group_neg(c0)), c1)
    return group_neg(cw) if t1 else cw


def _gen_with(params: DpfParams, alpha: int, beta: GroupVector, seeds, rng, to_group):
    _check_index(alpha, params)
    if beta.params != params.group:
        raise ParameterError(f"beta group {beta.params} does not match {params.group}")
    if seeds is None:
        seeds = (random_seed(rng), random_seed(rng))
    seeds = (check_seed(seeds[0]), check_seed(seeds[1]))
    cws, (s0, _t0), (s1, t1) = gen_tree(params, alpha, seeds)
    final_cw = final_correction(beta, to_group(s0), to_group(s1), t1)
    public = DpfPublicPart(cws, final_cw)
    keys = (DpfKey(0, seeds[0], public, params), DpfKey(1, seeds[1], public, params))
    return keys, (s0, s1, t1)


def dpf_gen(
    params: DpfParams,
    alpha: int,
    beta: GroupVector,
    seeds: tuple[bytes, bytes] | None = None,
    rng: Random | None = None,
) -> tuple[DpfKey, DpfKey]:
    """Share the point function ``f(alpha) = beta`` between two keys.

    ``seeds`` fixes the two root seeds (the master-seed path); otherwise they are
    drawn from ``rng`` or the OS.
    """
    keys, _ = _gen_with(params, alpha, beta, seeds, rng, lambda s: convert_to_group(s, params.group))
    return keys


def dummy_keys(params: DpfParams, seeds=None, rng: Random | None = None) -> tuple[DpfKey, DpfKey]:
    return dpf_gen(params, 0, params.group.zero(), seeds, rng)


def eval_seed(key: DpfKey, x: int) -> tuple[bytes, int]:
    _check_index(x, key.params)
    return kernels.eval_path(
        key.root_seed, key.party, key.public.cw_seed_bytes, key.public.cw_bit_bytes, x, key.depth
    )


def leaf_share(party: int, converted: GroupVector, t: int, final_cw: GroupVector) -> GroupVector:
    out = group_add(converted, final_cw) if t else converted
    return group_neg(out) if party else out


def dpf_eval(key: DpfKey, x: int) -> GroupVector:
    seed, t = eval_seed(key, x)
    return leaf_share(key.party, convert_to_group(seed, key.params.group), t, key.public.final_cw)


# --- full-domain evaluation -------------------------------------------------


def expand_leaves(keys: Sequence[DpfKey]):
    """Leaf seeds (K, 2^d, 16) and control bits (K, 2^d) for same-depth keys."""
    depth = keys[0].depth
    if depth > MAX_FULL_DEPTH:
        raise ResourceError(f"full-domain evaluation limited to depth {MAX_FULL_DEPTH}")
    if any(k.depth != depth for k in keys):
        raise ParameterError("batched keys must share one depth")
    roots = np.frombuffer(b"".join(k.root_seed for k in keys), dtype=np.uint8).reshape(-1, 16)
    ts = np.array([k.party for k in keys], dtype=np.uint8)
    cws = np.frombuffer(
        b"".join(k.public.cw_seed_bytes for k in keys), dtype=np.uint8
    ).reshape(len(keys), depth, 16)
    bits = np.frombuffer(b"".join(k.public.cw_bit_bytes for k in keys), dtype=np.uint8).reshape(
        len(keys), depth
    )
    return kernels.eval_full_many(roots, ts, cws, bits, depth)


ConvertFn = Callable[[np.ndarray, int], np.ndarray]


def convert_leaves(seeds: np.ndarray, nbytes: int) -> np.ndarray:
    return kernels.convert_many(seeds, nbytes)


def leaf_limbs(
    seeds: np.ndarray,
    tbits: np.ndarray,
    cw_limbs: np.ndarray,
    group: GroupParams,
    convert: ConvertFn = convert_leaves,
) -> np.ndarray:
    """Unsigned leaf values ``convert(s) + t * final_cw`` as unreduced limbs.

    ``cw_limbs`` is one final CW per leaf, shape (N, tau, L).
    """
    vals = limbs.bytes_to_limbs(convert(seeds, group.element_bytes), group)
    vals += cw_limbs * tbits.astype(np.uint64)[:, None, None]
    return vals


def signed_rows(party: int, vals: np.ndarray) -> list[tuple]:
    vals = limbs.normalize(vals)
    return limbs.to_rows(limbs.negate(vals) if party else vals)


def eval_full_rows(keys: Sequence[DpfKey], count: int | None = None, convert: ConvertFn = convert_leaves):
    """Raw full-domain shares for each key, truncated to the first ``count`` leaves."""
    seeds, bits = expand_leaves(keys)
    n = seeds.shape[1] if count is None else min(count, seeds.shape[1])
    group = keys[0].params.group
    cw = limbs.vectors_to_limbs([k.public.final_cw for k in keys], group)
    out = []
    for i, key in enumerate(keys):
        per_leaf = np.broadcast_to(cw[i], (n,) + cw.shape[1:])
        vals = leaf_limbs(seeds[i, :n].reshape(-1, 16), bits[i, :n], per_leaf, group, convert)
        out.append(signed_rows(key.party, vals))
    return out


def dpf_eval_full(key: DpfKey) -> list[GroupVector]:
    params = key.params.group
    (rows,) = eval_full_rows([key])
    return [GroupVector(params, r) for r in rows]


# --- wire format ------------------------------------------------------------


def _pack_bits(cws) -> bytes:
    acc = 0
    nbits = 2 * len(cws)
    for cw in cws:
        acc = (acc << 2) | (cw.t_left_cw << 1) | cw.t_right_cw
    nbytes = -(-nbits // 8)
    return (acc << (8 * nbytes - nbits)).to_bytes(nbytes, "big")


def _unpack_bits(data: bytes, depth: int) -> list[tuple[int, int]]:
    nbits = 2 * depth
    raw = int.from_bytes(data, "big")
    pad = 8 * len(data) - nbits
    if raw & ((1 << pad) - 1):
        raise FormatError("nonzero padding after control bits")
    acc = raw >> pad
    out = []
    for i in range(depth):
        shift = 2 * (depth - 1 - i)
        out.append(((acc >> (shift + 1)) & 1, (acc >> shift) & 1))
    return out


def _header(magic: bytes, params: DpfParams) -> bytes:
    return HEADER.pack(magic, params.depth, params.group.l, params.group.tau)


def _public_body(public: DpfPublicPart) -> bytes:
    return public.cw_seed_bytes + _pack_bits(public.cws) + public.final_cw.to_bytes()


def dpf_serialize(key: DpfKey) -> bytes:
    """Header, root seed, seed CWs, packed control-bit CWs, final CW."""
    return _header(MAGIC_KEY, key.params) + key.root_seed + _public_body(key.public)


def serialize_public(key_or_public, params: DpfParams | None = None) -> bytes:
    if isinstance(key_or_public, DpfKey):
        params = key_or_public.params
        public = key_or_public.public
    else:
        public = key_or_public
        if params is None:
            raise ParameterError("params required to serialize a bare public part")
    return _header(MAGIC_PUBLIC, params) + _public_body(public)


def _parse_header(data: bytes, magic: bytes, params: DpfParams | None) -> DpfParams:
    if len(data) < HEADER.size:
        raise FormatError("truncated header")
    got_magic, depth, l, tau = HEADER.unpack_from(data)
    if got_magic != magic:
        raise FormatError(f"bad magic {got_magic!r}, expected {magic!r}")
    try:
        parsed = DpfParams(depth, GroupParams(l, tau))
    except ParameterError as exc:
        raise FormatError(str(exc)) from exc
    if params is not None and parsed != params:
        raise FormatError(f"key parameters {parsed} do not match expected {params}")
    return parsed


def _parse_public(body: bytes, params: DpfParams) -> DpfPublicPart:
    depth = params.depth
    nbits_bytes = -(-2 * depth // 8)
    expect = 16 * depth + nbits_bytes + params.group.element_bytes
    if len(body) != expect:
        raise FormatError(f"public part is {len(body)} bytes, expected {expect}")
    seeds = body[: 16 * depth]
    bits = _unpack_bits(body[16 * depth : 16 * depth + nbits_bytes], depth)
    final = GroupVector.from_bytes(body[16 * depth + nbits_bytes :], params.group)
    cws = tuple(
        CorrectionWord(seeds[16 * i : 16 * i + 16], tl, tr) for i, (tl, tr) in enumerate(bits)
    )
    return DpfPublicPart(cws, final)


def dpf_deserialize(data: bytes, params: DpfParams | None = None, party: int | None = None) -> DpfKey:
    """Parse a full key. The party bit is not on the wire; pass it explicitly."""
    parsed = _parse_header(data, MAGIC_KEY, params)
    body = data[HEADER.size :]
    if len(body) < SEED_BYTES:
        raise FormatError("truncated root seed")
    public = _parse_public(body[SEED_BYTES:], parsed)
    if party is None:
        raise ParameterError("party bit must be supplied")
    return DpfKey(party, body[:SEED_BYTES], public, parsed)


def deserialize_public(data: bytes, params: DpfParams | None = None) -> tuple[DpfPublicPart, DpfParams]:
    parsed = _parse_header(data, MAGIC_PUBLIC, params)
    return _parse_public(data[HEADER.size :], parsed), parsed
