"""Deterministic symmetric primitives: PRG, PRF, output conversion, random oracle.

* PRG: fixed-key AES-128 in Matyas-Meyer-Oseas mode (see ``_pykernels``).
* PRF: HMAC-SHA256 keyed by the master seed over ``b"PRF" || index``.
* Random oracle: SHAKE-256 over ``b"ROH" || seed || epoch``.
"""
from __future__ import annotations

import hashlib
import hmac
import secrets
from random import Random

from . import kernels
from .errors import ParameterError
from .group import GroupParams, GroupVector

LAMBDA = 128
SEED_BYTES = LAMBDA // 8

Seed = bytes


def check_seed(s: bytes) -> bytes:
    if not isinstance(s, (bytes, bytearray)) or len(s) != SEED_BYTES:
        raise ParameterError(f"seed must be {SEED_BYTES} bytes")
    return bytes(s)


def random_seed(rng: Random | None = None) -> bytes:
    if rng is None:
        return secrets.token_bytes(SEED_BYTES)
    return rng.getrandbits(LAMBDA).to_bytes(SEED_BYTES, "big")


def xor_bytes(a: bytes, b: bytes) -> bytes:
    return (int.from_bytes(a, "big") ^ int.from_bytes(b, "big")).to_bytes(len(a), "big")


def prg_expand(s: bytes) -> tuple[bytes, int, bytes, int]:
    """Expand one seed into (s_left, t_left, s_right, t_right)."""
    return kernels.prg_expand(check_seed(s))


def prf_derive(msk: bytes, index: int) -> bytes:
    if index < 0:
        raise ParameterError("index must be non-negative")
    mac = hmac.new(check_seed(msk), b"PRF" + index.to_bytes(8, "big"), hashlib.sha256)
    return mac.digest()[:SEED_BYTES]


def bytes_to_elems(data: bytes, params: GroupParams) -> tuple:
    width = params.l // 8
    return tuple(int.from_bytes(data[i : i + width], "big") for i in range(0, len(data), width))


def convert_to_group(s: bytes, params: GroupParams) -> GroupVector:
    data = kernels.convert(check_seed(s), params.element_bytes)
    return GroupVector(params, bytes_to_elems(data, params))


def ro_hash_bytes(s: bytes, epoch: int, nbytes: int) -> bytes:
    return hashlib.shake_256(b"ROH" + s + epoch.to_bytes(8, "big")).digest(nbytes)


def ro_hash_to_group(s: bytes, epoch: int, params: GroupParams) -> GroupVector:
    if epoch < 0:
        raise ParameterError("epoch must be non-negative")
    data = ro_hash_bytes(check_seed(s), epoch, params.element_bytes)
    return GroupVector(params, bytes_to_elems(data, params))
