# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled tree kernels; bit-identical to ``_pykernels``."""
import numpy as np

cimport numpy as cnp
from libc.stdint cimport uint8_t, uint32_t
from libc.stdlib cimport free, malloc
from libc.string cimport memcpy

from ._keys import CONVERT_KEY, PRG_KEY

cnp.import_array()

cdef extern from "openssl/evp.h" nogil:
    ctypedef struct EVP_CIPHER_CTX:
        pass
    ctypedef struct EVP_CIPHER:
        pass
    ctypedef struct ENGINE:
        pass
    EVP_CIPHER_CTX* EVP_CIPHER_CTX_new()
    void EVP_CIPHER_CTX_free(EVP_CIPHER_CTX* ctx)
    const EVP_CIPHER* EVP_aes_128_ecb()
    int EVP_EncryptInit_ex(EVP_CIPHER_CTX* ctx, const EVP_CIPHER* cipher, ENGINE* impl,
                           const unsigned char* key, const unsigned char* iv)
    int EVP_EncryptUpdate(EVP_CIPHER_CTX* ctx, unsigned char* out, int* outl,
                          const unsigned char* inp, int inl)
    int EVP_CIPHER_CTX_set_padding(EVP_CIPHER_CTX* ctx, int pad)
    ctypedef struct EVP_MD_CTX:
        pass
    ctypedef struct EVP_MD:
        pass
    EVP_MD_CTX* EVP_MD_CTX_new()
    void EVP_MD_CTX_free(EVP_MD_CTX* ctx)
    const EVP_MD* EVP_shake256()
    int EVP_DigestInit_ex(EVP_MD_CTX* ctx, const EVP_MD* type, ENGINE* impl)
    int EVP_DigestUpdate(EVP_MD_CTX* ctx, const void* d, size_t cnt)
    int EVP_DigestFinalXOF(EVP_MD_CTX* ctx, unsigned char* md, size_t len)

cdef bytes _PRG_KEY = PRG_KEY
cdef bytes _CONVERT_KEY = CONVERT_KEY
# EVP_EncryptUpdate takes an int length; stay well below it.
cdef Py_ssize_t _CHUNK = 1 << 24


cdef EVP_CIPHER_CTX* _new_ctx(const unsigned char* key) except NULL:
    cdef EVP_CIPHER_CTX* ctx = EVP_CIPHER_CTX_new()
    if ctx == NULL:
        raise MemoryError()
    if EVP_EncryptInit_ex(ctx, EVP_aes_128_ecb(), NULL, key, NULL) != 1:
        EVP_CIPHER_CTX_free(ctx)
        raise RuntimeError("AES init failed")
    EVP_CIPHER_CTX_set_padding(ctx, 0)
    return ctx


cdef int _mmo(EVP_CIPHER_CTX* ctx, uint8_t* buf, uint8_t* out, Py_ssize_t nbytes) nogil:
    # out = AES(buf) ^ buf
    cdef Py_ssize_t off = 0, i, step
    cdef int outl
    while off < nbytes:
        step = nbytes - off
        if step > _CHUNK:
            step = _CHUNK
        if EVP_EncryptUpdate(ctx, out + off, &outl, buf + off, <int>step) != 1:
            return -1
        off += step
    for i in range(nbytes):
        out[i] ^= buf[i]
    return 0


cdef void _expand_one(EVP_CIPHER_CTX* ctx, const uint8_t* seed, uint8_t* x, uint8_t* y) nogil:
    cdef int j
    for j in range(3):
        memcpy(x + 16 * j, seed, 16)
    x[31] ^= 1
    x[47] ^= 2
    _mmo(ctx, x, y, 48)


def prg_expand(bytes seed):
    cdef uint8_t x[48]
    cdef uint8_t y[48]
    cdef EVP_CIPHER_CTX* ctx = _new_ctx(_PRG_KEY)
    _expand_one(ctx, <const uint8_t*><char*>seed, x, y)
    EVP_CIPHER_CTX_free(ctx)
    out = (<char*>y)[:48]
    return out[:16], y[32] & 1, out[16:32], (y[32] >> 1) & 1


def prg_expand_many(cnp.ndarray seeds):
    cdef cnp.ndarray[cnp.uint8_t, ndim=2] s = np.ascontiguousarray(seeds, dtype=np.uint8)
    cdef Py_ssize_t n = s.shape[0], i
    cdef cnp.ndarray[cnp.uint8_t, ndim=3] x = np.empty((n, 3, 16), dtype=np.uint8)
    cdef cnp.ndarray[cnp.uint8_t, ndim=3] y = np.empty((n, 3, 16), dtype=np.uint8)
    cdef uint8_t* xp = <uint8_t*>x.data
    cdef uint8_t* sp = <uint8_t*>s.data
    for i in range(n):
        memcpy(xp + 48 * i, sp + 16 * i, 16)
        memcpy(xp + 48 * i + 16, sp + 16 * i, 16)
        memcpy(xp + 48 * i + 32, sp + 16 * i, 16)
        xp[48 * i + 31] ^= 1
        xp[48 * i + 47] ^= 2
    cdef EVP_CIPHER_CTX* ctx = _new_ctx(_PRG_KEY)
    _mmo(ctx, xp, <uint8_t*>y.data, n * 48)
    EVP_CIPHER_CTX_free(ctx)
    ctl = y[:, 2, 0]
    return y[:, 0, :], ctl & 1, y[:, 1, :], (ctl >> 1) & 1


def eval_path(bytes root, int t, bytes cw_seeds, bytes cw_bits, unsigned long long x, int depth):
    cdef uint8_t seed[16]
    cdef uint8_t xb[48]
    cdef uint8_t yb[48]
    cdef const uint8_t* cws = <const uint8_t*><char*>cw_seeds
    cdef const uint8_t* cbits = <const uint8_t*><char*>cw_bits
    cdef int level, bit, j, nt
    cdef EVP_CIPHER_CTX* ctx = _new_ctx(_PRG_KEY)
    memcpy(seed, <const uint8_t*><char*>root, 16)
    with nogil:
        for level in range(depth):
            _expand_one(ctx, seed, xb, yb)
            bit = (x >> (depth - 1 - level)) & 1
            memcpy(seed, yb + 16 * bit, 16)
            nt = (yb[32] >> bit) & 1
            if t:
                for j in range(16):
                    seed[j] ^= cws[16 * level + j]
                nt ^= (cbits[level] >> bit) & 1
            t = nt
    EVP_CIPHER_CTX_free(ctx)
    return (<char*>seed)[:16], t


def eval_full_many(cnp.ndarray roots, cnp.ndarray ts, cnp.ndarray cw_seeds,
                   cnp.ndarray cw_bits, int depth):
    cdef cnp.ndarray[cnp.uint8_t, ndim=2] r = np.ascontiguousarray(roots, dtype=np.uint8)
    cdef cnp.ndarray[cnp.uint8_t, ndim=1] t0 = np.ascontiguousarray(ts, dtype=np.uint8).reshape(-1)
    cdef cnp.ndarray[cnp.uint8_t, ndim=3] cs = np.ascontiguousarray(cw_seeds, dtype=np.uint8)
    cdef cnp.ndarray[cnp.uint8_t, ndim=2] cb = np.ascontiguousarray(cw_bits, dtype=np.uint8)
    cdef Py_ssize_t k = r.shape[0]
    cdef Py_ssize_t leaves = (<Py_ssize_t>1) << depth
    cdef cnp.ndarray[cnp.uint8_t, ndim=3] seeds = np.empty((k, leaves, 16), dtype=np.uint8)
    cdef cnp.ndarray[cnp.uint8_t, ndim=2] bits = np.empty((k, leaves), dtype=np.uint8)
    cdef uint8_t* sp = <uint8_t*>seeds.data
    cdef uint8_t* bp = <uint8_t*>bits.data
    cdef uint8_t* csp = <uint8_t*>cs.data
    cdef uint8_t* cbp = <uint8_t*>cb.data
    cdef Py_ssize_t key, node, width, level, j, src, dst, stride
    cdef uint8_t* rp = <uint8_t*>r.data
    cdef uint8_t* tp = <uint8_t*>t0.data
    cdef uint8_t* xb
    cdef uint8_t* yb
    cdef uint8_t* cw
    cdef uint8_t tcur, tl, tr, cbits_
    cdef EVP_CIPHER_CTX* ctx = _new_ctx(_PRG_KEY)
    xb = <uint8_t*>malloc(48 * (leaves // 2 + 1) * k)
    yb = <uint8_t*>malloc(48 * (leaves // 2 + 1) * k)
    if xb == NULL or yb == NULL:
        free(xb)
        free(yb)
        EVP_CIPHER_CTX_free(ctx)
        raise MemoryError()
    with nogil:
        # in-place expansion: level w nodes live at stride leaves/w inside each key's row
        for key in range(k):
            memcpy(sp + key * leaves * 16, rp + key * 16, 16)
            bp[key * leaves] = tp[key]
        width = 1
        for level in range(depth):
            stride = leaves // width
            for key in range(k):
                for node in range(width):
                    src = key * leaves + node * stride
                    dst = 48 * (key * width + node)
                    for j in range(3):
                        memcpy(xb + dst + 16 * j, sp + src * 16, 16)
                    xb[dst + 31] ^= 1
                    xb[dst + 47] ^= 2
            _mmo(ctx, xb, yb, 48 * k * width)
            for key in range(k):
                cw = csp + (key * depth + level) * 16
                cbits_ = cbp[key * depth + level]
                for node in range(width):
                    src = key * leaves + node * stride
                    dst = 48 * (key * width + node)
                    tcur = bp[src]
                    tl = yb[dst + 32] & 1
                    tr = (yb[dst + 32] >> 1) & 1
                    memcpy(sp + src * 16, yb + dst, 16)
                    memcpy(sp + (src + stride // 2) * 16, yb + dst + 16, 16)
                    if tcur:
                        for j in range(16):
                            sp[src * 16 + j] ^= cw[j]
                            sp[(src + stride // 2) * 16 + j] ^= cw[j]
                        tl ^= cbits_ & 1
                        tr ^= (cbits_ >> 1) & 1
                    bp[src] = tl
                    bp[src + stride // 2] = tr
            width *= 2
    free(xb)
    free(yb)
    EVP_CIPHER_CTX_free(ctx)
    return seeds, bits


def convert_many(cnp.ndarray seeds, int nbytes):
    cdef cnp.ndarray[cnp.uint8_t, ndim=2] s = np.ascontiguousarray(seeds, dtype=np.uint8)
    cdef Py_ssize_t n = s.shape[0], i, b
    cdef Py_ssize_t nblocks = (nbytes + 15) // 16
    cdef cnp.ndarray[cnp.uint8_t, ndim=2] x = np.empty((n, nblocks * 16), dtype=np.uint8)
    cdef cnp.ndarray[cnp.uint8_t, ndim=2] y = np.empty((n, nblocks * 16), dtype=np.uint8)
    cdef uint8_t* xp = <uint8_t*>x.data
    cdef uint8_t* sp = <uint8_t*>s.data
    cdef uint8_t* blk
    cdef uint32_t ctr
    for i in range(n):
        for b in range(nblocks):
            blk = xp + (i * nblocks + b) * 16
            memcpy(blk, sp + i * 16, 16)
            ctr = <uint32_t>b
            blk[12] ^= (ctr >> 24) & 0xFF
            blk[13] ^= (ctr >> 16) & 0xFF
            blk[14] ^= (ctr >> 8) & 0xFF
            blk[15] ^= ctr & 0xFF
    cdef EVP_CIPHER_CTX* ctx = _new_ctx(_CONVERT_KEY)
    _mmo(ctx, xp, <uint8_t*>y.data, n * nblocks * 16)
    EVP_CIPHER_CTX_free(ctx)
    return y[:, :nbytes]


def convert(bytes seed, int nbytes):
    arr = np.frombuffer(seed, dtype=np.uint8).reshape(1, 16)
    return convert_many(arr, nbytes).tobytes()


def gen_tree(bytes s0, bytes s1, unsigned long long alpha, int depth):
    cdef uint8_t seeds[2][16]
    cdef uint8_t t[2]
    cdef uint8_t xb[48]
    cdef uint8_t e[2][48]
    cdef uint8_t scw[16]
    cdef int level, bit, b, j, lose, keep
    cdef uint8_t tl, tr, tkeep, kt
    out_seeds = bytearray(16 * depth)
    out_bits = bytearray(depth)
    cdef uint8_t* os = out_seeds
    cdef uint8_t* ob = out_bits
    memcpy(seeds[0], <const uint8_t*><char*>s0, 16)
    memcpy(seeds[1], <const uint8_t*><char*>s1, 16)
    t[0] = 0
    t[1] = 1
    cdef EVP_CIPHER_CTX* ctx = _new_ctx(_PRG_KEY)
    with nogil:
        for level in range(depth):
            bit = (alpha >> (depth - 1 - level)) & 1
            _expand_one(ctx, seeds[0], xb, e[0])
            _expand_one(ctx, seeds[1], xb, e[1])
            lose = 16 if bit == 0 else 0
            keep = 0 if bit == 0 else 16
            for j in range(16):
                scw[j] = e[0][lose + j] ^ e[1][lose + j]
            tl = (e[0][32] & 1) ^ (e[1][32] & 1) ^ bit ^ 1
            tr = ((e[0][32] >> 1) & 1) ^ ((e[1][32] >> 1) & 1) ^ bit
            tkeep = tr if bit else tl
            memcpy(os + 16 * level, scw, 16)
            ob[level] = tl | (tr << 1)
            for b in range(2):
                memcpy(seeds[b], e[b] + keep, 16)
                kt = (e[b][32] >> bit) & 1
                if t[b]:
                    for j in range(16):
                        seeds[b][j] ^= scw[j]
                    kt ^= tkeep
                t[b] = kt
    EVP_CIPHER_CTX_free(ctx)
    return bytes(out_seeds), bytes(out_bits), (<char*>seeds[0])[:16], (<char*>seeds[1])[:16], t[1]


def ro_hash_many(cnp.ndarray seeds, unsigned long long epoch, int nbytes):
    cdef cnp.ndarray[cnp.uint8_t, ndim=2] s = np.ascontiguousarray(seeds, dtype=np.uint8).reshape(-1, 16)
    cdef Py_ssize_t n = s.shape[0], i
    cdef cnp.ndarray[cnp.uint8_t, ndim=2] out = np.empty((n, nbytes), dtype=np.uint8)
    cdef uint8_t tail[8]
    cdef uint8_t* sp = <uint8_t*>s.data
    cdef uint8_t* op = <uint8_t*>out.data
    cdef int j
    cdef const char* tag = b"ROH"
    for j in range(8):
        tail[j] = (epoch >> (56 - 8 * j)) & 0xFF
    cdef EVP_MD_CTX* ctx = EVP_MD_CTX_new()
    if ctx == NULL:
        raise MemoryError()
    cdef int ok = 1
    with nogil:
        for i in range(n):
            if EVP_DigestInit_ex(ctx, EVP_shake256(), NULL) != 1:
                ok = 0
                break
            EVP_DigestUpdate(ctx, tag, 3)
            EVP_DigestUpdate(ctx, sp + 16 * i, 16)
            EVP_DigestUpdate(ctx, tail, 8)
            if EVP_DigestFinalXOF(ctx, op + nbytes * i, nbytes) != 1:
                ok = 0
                break
    EVP_MD_CTX_free(ctx)
    if not ok:
        raise RuntimeError("SHAKE-256 failed")
    return out
