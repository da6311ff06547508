"""Pure-Python tree kernels (numpy + cryptography AES-ECB).

Layout conventions shared with the compiled backend:

* a seed is 16 bytes; PRG input block i is the seed with its last byte XORed by i
  (i = 0, 1, 2) and each output block is AES_k(x) XOR x;
* block 0 is the left child seed, block 1 the right, bit 0 / bit 1 of byte 0 of
  block 2 are the left / right control bits;
* conversion block j XORs j (4-byte big-endian) into the seed's last 4 bytes.
"""
from __future__ import annotations

import threading

import numpy as np
from cryptography.hazmat.primitives.ciphers import Cipher, algorithms, modes

from ._keys import CONVERT_KEY, PRG_KEY

_local = threading.local()

_TWEAK = np.zeros((3, 16), dtype=np.uint8)
_TWEAK[1, 15] = 1
_TWEAK[2, 15] = 2


def _encryptor(key: bytes, name: str):
    enc = getattr(_local, name, None)
    if enc is None:
        enc = Cipher(algorithms.AES(key), modes.ECB()).encryptor()
        setattr(_local, name, enc)
    return enc


def _mmo(key: bytes, name: str, blocks: np.ndarray) -> np.ndarray:
    data = np.ascontiguousarray(blocks, dtype=np.uint8)
    enc = _encryptor(key, name)
    out = np.frombuffer(enc.update(data.tobytes()), dtype=np.uint8).reshape(data.shape)
    return out ^ data


def prg_expand(seed: bytes) -> tuple[bytes, int, bytes, int]:
    s = int.from_bytes(seed, "big")
    x = (s ^ 0).to_bytes(16, "big") + (s ^ 1).to_bytes(16, "big") + (s ^ 2).to_bytes(16, "big")
    y = _encryptor(PRG_KEY, "prg").update(x)
    yi = int.from_bytes(y, "big") ^ int.from_bytes(x, "big")
    out = yi.to_bytes(48, "big")
    ctl = out[32]
    return out[:16], ctl & 1, out[16:32], (ctl >> 1) & 1


def prg_expand_many(seeds: np.ndarray):
    n = seeds.shape[0]
    x = np.repeat(seeds.reshape(n, 1, 16), 3, axis=1) ^ _TWEAK
    y = _mmo(PRG_KEY, "prg", x)
    ctl = y[:, 2, 0]
    return y[:, 0, :], ctl & 1, y[:, 1, :], (ctl >> 1) & 1


def eval_path(root: bytes, t: int, cw_seeds: bytes, cw_bits: bytes, x: int, depth: int):
    seed = root
    for level in range(depth):
        s_l, t_l, s_r, t_r = prg_expand(seed)
        bit = (x >> (depth - 1 - level)) & 1
        if bit:
            seed, nt = s_r, t_r
        else:
            seed, nt = s_l, t_l
        if t:
            cw = cw_seeds[16 * level : 16 * level + 16]
            seed = (int.from_bytes(seed, "big") ^ int.from_bytes(cw, "big")).to_bytes(16, "big")
            nt ^= (cw_bits[level] >> bit) & 1
        t = nt
    return seed, t


def eval_full_many(roots: np.ndarray, ts: np.ndarray, cw_seeds: np.ndarray,
                   cw_bits: np.ndarray, depth: int):
    """Expand K same-depth trees level by level.

    roots (K,16) uint8, ts (K,) uint8, cw_seeds (K,depth,16) uint8,
    cw_bits (K,depth) uint8 packing (t_left | t_right << 1).
    Returns leaf seeds (K, 2**depth, 16) and leaf control bits (K, 2**depth).
    """
    k = roots.shape[0]
    seeds = roots.reshape(k, 1, 16).astype(np.uint8, copy=True)
    bits = ts.reshape(k, 1).astype(np.uint8, copy=True)
    for level in range(depth):
        width = seeds.shape[1]
        s_l, t_l, s_r, t_r = prg_expand_many(seeds.reshape(k * width, 16))
        s_l = s_l.reshape(k, width, 16)
        s_r = s_r.reshape(k, width, 16)
        t_l = t_l.reshape(k, width)
        t_r = t_r.reshape(k, width)
        gate = bits.astype(bool)
        cw = cw_seeds[:, level, :].reshape(k, 1, 16)
        corr = np.where(gate[:, :, None], cw, np.uint8(0))
        s_l = s_l ^ corr
        s_r = s_r ^ corr
        cb = cw_bits[:, level].reshape(k, 1)
        t_l = t_l ^ (bits & (cb & 1))
        t_r = t_r ^ (bits & ((cb >> 1) & 1))
        seeds = np.stack([s_l, s_r], axis=2).reshape(k, 2 * width, 16)
        bits = np.stack([t_l, t_r], axis=2).reshape(k, 2 * width)
    return seeds, bits


def convert_many(seeds: np.ndarray, nbytes: int) -> np.ndarray:
    n = seeds.shape[0]
    nblocks = -(-nbytes // 16)
    counters = np.zeros((nblocks, 16), dtype=np.uint8)
    ctr = np.arange(nblocks, dtype=">u4").view(np.uint8).reshape(nblocks, 4)
    counters[:, 12:] = ctr
    x = seeds.reshape(n, 1, 16) ^ counters
    y = _mmo(CONVERT_KEY, "conv", x)
    return y.reshape(n, nblocks * 16)[:, :nbytes]


def convert(seed: bytes, nbytes: int) -> bytes:
    arr = np.frombuffer(seed, dtype=np.uint8).reshape(1, 16)
    return convert_many(arr, nbytes).tobytes()


def gen_tree(s0: bytes, s1: bytes, alpha: int, depth: int):
    """Both parties' walk to ``alpha``.

    Returns (cw_seeds, cw_bits, s0_final, s1_final, t1_final); cw_bits packs
    t_left | t_right << 1 per level.
    """
    seeds = [int.from_bytes(s0, "big"), int.from_bytes(s1, "big")]
    t = [0, 1]
    cw_seeds = []
    cw_bits = bytearray()
    for level in range(depth):
        bit = (alpha >> (depth - 1 - level)) & 1
        e0 = prg_expand(seeds[0].to_bytes(16, "big"))
        e1 = prg_expand(seeds[1].to_bytes(16, "big"))
        lose = 2 if bit == 0 else 0
        keep = 0 if bit == 0 else 2
        scw = int.from_bytes(e0[lose], "big") ^ int.from_bytes(e1[lose], "big")
        tl = e0[1] ^ e1[1] ^ bit ^ 1
        tr = e0[3] ^ e1[3] ^ bit
        tkeep = tr if bit else tl
        cw_seeds.append(scw.to_bytes(16, "big"))
        cw_bits.append(tl | (tr << 1))
        for b, e in ((0, e0), (1, e1)):
            ks = int.from_bytes(e[keep], "big")
            kt = e[keep + 1]
            if t[b]:
                ks ^= scw
                kt ^= tkeep
            seeds[b], t[b] = ks, kt
    return b"".join(cw_seeds), bytes(cw_bits), seeds[0].to_bytes(16, "big"), seeds[1].to_bytes(16, "big"), t[1]


def ro_hash_many(seeds: np.ndarray, epoch: int, nbytes: int) -> np.ndarray:
    import hashlib

    raw = np.ascontiguousarray(seeds, dtype=np.uint8).tobytes()
    tail = epoch.to_bytes(8, "big")
    out = b"".join(
        hashlib.shake_256(b"ROH" + raw[i : i + 16] + tail).digest(nbytes) for i in range(0, len(raw), 16)
    )
    return np.frombuffer(out, dtype=np.uint8).reshape(-1, nbytes)
