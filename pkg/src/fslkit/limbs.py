"""Vectorized Z_{2^l}^tau arithmetic on 32-bit limbs held in uint64 cells.

A batch of group vectors is an array of shape (N, tau, L) with L = l/32 and
limbs ordered least significant first. Sums are accumulated without carrying;
each cell has 32 bits of headroom, so up to 2^31 additions of reduced values
are exact. ``normalize`` propagates carries and reduces mod 2^l.
"""
from __future__ import annotations

from typing import Sequence

import numpy as np

from .group import GroupParams, GroupVector

LIMB_BITS = 32
LIMB_MASK = np.uint64(0xFFFFFFFF)


def limb_count(params: GroupParams) -> int:
    return params.l // LIMB_BITS


def bytes_to_limbs(raw: np.ndarray, params: GroupParams) -> np.ndarray:
    """(N, tau*l/8) big-endian bytes to (N, tau, L) limbs."""
    L = limb_count(params)
    raw = np.ascontiguousarray(raw, dtype=np.uint8)
    words = raw.view(">u4").reshape(-1, params.tau, L)
    return words[..., ::-1].astype(np.uint64)


def vectors_to_limbs(vectors: Sequence[GroupVector], params: GroupParams) -> np.ndarray:
    raw = np.frombuffer(b"".join(v.to_bytes() for v in vectors), dtype=np.uint8)
    return bytes_to_limbs(raw.reshape(len(vectors), -1), params)


def zeros(n: int, params: GroupParams) -> np.ndarray:
    return np.zeros((n, params.tau, limb_count(params)), dtype=np.uint64)


def normalize(acc: np.ndarray) -> np.ndarray:
    """Carry-propagate in place; the carry out of the top limb is dropped."""
    L = acc.shape[-1]
    for i in range(L - 1):
        acc[..., i + 1] += acc[..., i] >> np.uint64(LIMB_BITS)
        acc[..., i] &= LIMB_MASK
    acc[..., L - 1] &= LIMB_MASK
    return acc


def negate(acc: np.ndarray) -> np.ndarray:
    """Additive inverse of normalized limbs: two's complement per element."""
    out = acc ^ LIMB_MASK
    out[..., 0] += np.uint64(1)
    return normalize(out)


def to_rows(acc: np.ndarray) -> list[tuple]:
    """Normalized limbs to a list of int tuples, one tuple per vector."""
    n, tau, L = acc.shape
    width = L * 4
    raw = acc[..., ::-1].astype(">u4").tobytes()
    frm = int.from_bytes
    flat = [frm(raw[i : i + width], "big") for i in range(0, len(raw), width)]
    if tau == 1:
        return [(v,) for v in flat]
    return [tuple(flat[i : i + tau]) for i in range(0, len(flat), tau)]


def to_vectors(acc: np.ndarray, params: GroupParams) -> list[GroupVector]:
    return [GroupVector(params, r) for r in to_rows(acc)]
