"""Cuckoo/simple hash tables that turn a k-index query into B single-index queries.

Every party derives the same eta hash functions from the public ``hash_seed``.
Simple bins list their members in ascending order; an element's rank inside a
bin is the DPF input used for that bin.
"""
from __future__ import annotations

import bisect
import hashlib
import math
from dataclasses import dataclass, field, replace
from functools import cached_property
from random import Random
from typing import Iterable, Sequence

import numpy as np

from .errors import CuckooInsertionError, LookupFailure, ParameterError

DEFAULT_HASH_SEED = hashlib.sha256(b"fslkit/cuckoo/public-seed").digest()[:16]
MAX_RELOCATIONS = 500

# scale factor by input size (upper bracket bound -> epsilon)
SCALE_FACTORS = ((1 << 15, 1.25), (1 << 20, 1.27), (1 << 25, 1.28))
# maximum simple-bin size by compression rate (%) and log2(m)
MAX_BIN_LOG2M = (10, 15, 20, 25)
MAX_BIN_TABLE = {
    1: (324, 315, 336, 366),
    10: (45, 54, 66, 78),
    30: (27, 36, 39, 48),
    50: (21, 24, 30, 36),
    70: (18, 21, 27, 30),
}
DEPTH_CAP = 9

_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_GOLDEN = np.uint64(0x9E3779B97F4A7C15)


def _mix64(x: np.ndarray) -> np.ndarray:
    # splitmix64 finalizer
    x = x ^ (x >> np.uint64(30))
    x = x * _M1
    x = x ^ (x >> np.uint64(27))
    x = x * _M2
    return x ^ (x >> np.uint64(31))


def scale_factor(k: int) -> float:
    for bound, eps in SCALE_FACTORS:
        if k <= bound:
            return eps
    return SCALE_FACTORS[-1][1]


@dataclass(frozen=True)
class TableSpec:
    m: int
    k: int
    epsilon: float = 1.25
    eta: int = 3
    sigma: int = 0
    hash_seed: bytes = DEFAULT_HASH_SEED
    kappa: int = 40
    bins_override: int | None = None

    def __post_init__(self) -> None:
        if self.m < 1:
            raise ParameterError("m must be positive")
        if not 0 <= self.k:
            raise ParameterError("k must be non-negative")
        if self.eta < 2:
            raise ParameterError("eta must be >= 2")
        if self.epsilon <= 1:
            raise ParameterError("epsilon must exceed 1")
        if self.sigma < 0:
            raise ParameterError("sigma must be non-negative")
        if len(self.hash_seed) != 16:
            raise ParameterError("hash_seed must be 16 bytes")
        if self.bins_override is not None and self.bins_override < 1:
            raise ParameterError("bins override must be positive")
        if self.bins_override is None and self.bins < max(self.k, 1):
            raise ParameterError("B must be at least k")

    @property
    def bins(self) -> int:
        """B = ceil(epsilon * k); an explicit override exists to force stash use in tests."""
        if self.bins_override is not None:
            return self.bins_override
        return max(1, math.ceil(round(self.epsilon * self.k, 9)))

    @cached_property
    def _hash_keys(self) -> np.ndarray:
        keys = [
            int.from_bytes(hashlib.sha256(self.hash_seed + b"H" + bytes([d])).digest()[:8], "big")
            for d in range(self.eta)
        ]
        return np.array(keys, dtype=np.uint64)

    def hash_matrix(self, indices) -> np.ndarray:
        """Raw hash values h_d(x) in [0, B), shape (N, eta)."""
        x = np.asarray(indices, dtype=np.uint64).reshape(-1, 1)
        with np.errstate(over="ignore"):
            h = _mix64(x * _GOLDEN + self._hash_keys.reshape(1, -1))
        return (h % np.uint64(self.bins)).astype(np.int64)

    def to_text(self) -> str:
        fields = {
            "bins": self.bins,
            "epsilon": repr(float(self.epsilon)),
            "eta": self.eta,
            "hash_seed": self.hash_seed.hex(),
            "k": self.k,
            "kappa": self.kappa,
            "m": self.m,
            "sigma": self.sigma,
        }
        return "".join(f"{key}={fields[key]}\n" for key in sorted(fields))

    @classmethod
    def from_text(cls, text: str) -> "TableSpec":
        kv = {}
        for line in text.splitlines():
            line = line.strip()
            if not line:
                continue
            key, _, value = line.partition("=")
            kv[key.strip()] = value.strip()
        try:
            spec = cls(
                m=int(kv["m"]),
                k=int(kv["k"]),
                epsilon=float(kv["epsilon"]),
                eta=int(kv["eta"]),
                sigma=int(kv["sigma"]),
                hash_seed=bytes.fromhex(kv["hash_seed"]),
                kappa=int(kv["kappa"]),
            )
        except KeyError as exc:
            raise ParameterError(f"missing field {exc}") from exc
        if spec.bins != int(kv["bins"]):
            spec = replace(spec, bins_override=int(kv["bins"]))
        return spec


def dedup_rows(h: np.ndarray) -> np.ndarray:
    """Replace repeated hash values within a row by -1 (keep first occurrence)."""
    out = h.copy()
    for d in range(1, h.shape[1]):
        dup = np.zeros(h.shape[0], dtype=bool)
        for e in range(d):
            dup |= h[:, d] == h[:, e]
        out[dup, d] = -1
    return out


def candidate_bins(spec: TableSpec, element: int) -> tuple[int, ...]:
    row = spec.hash_matrix([element])[0].tolist()
    seen: list[int] = []
    for b in row:
        if b not in seen:
            seen.append(b)
    return tuple(seen)


@dataclass
class SimpleTable:
    spec: TableSpec
    domain: np.ndarray
    bins: list
    positions: np.ndarray = field(repr=False)
    candidates: np.ndarray = field(repr=False)

    @cached_property
    def theta(self) -> int:
        return max((len(b) for b in self.bins), default=0)

    @property
    def depth(self) -> int:
        return depth_for(self.theta)

    def row_of(self, element: int) -> int:
        i = int(np.searchsorted(self.domain, element))
        if i >= len(self.domain) or self.domain[i] != element:
            raise LookupFailure(f"{element} is not in the table domain")
        return i

    def placements(self, element: int) -> list[tuple[int, int]]:
        """(bin, pos) pairs of an element, one per distinct candidate bin."""
        row = self.row_of(element)
        return [
            (int(b), int(p))
            for b, p in zip(self.candidates[row], self.positions[row])
            if b >= 0
        ]


def depth_for(theta: int) -> int:
    return max(1, math.ceil(math.log2(theta))) if theta > 1 else 1


def build_simple_table(spec: TableSpec, domain: Sequence[int] | None = None) -> SimpleTable:
    if domain is None:
        domain = np.arange(spec.m, dtype=np.int64)
    dom = np.asarray(domain, dtype=np.int64)
    if dom.size == 0:
        raise ParameterError("domain must be non-empty")
    if dom.size > 1 and not np.all(dom[1:] > dom[:-1]):
        raise ParameterError("domain must be strictly increasing")
    if dom[0] < 0 or dom[-1] >= spec.m:
        raise ParameterError("domain indices must lie in [0, m)")
    cand = dedup_rows(spec.hash_matrix(dom))
    n, eta = cand.shape
    rows = np.repeat(np.arange(n), eta)
    flat_bins = cand.reshape(-1)
    valid = flat_bins >= 0
    rows, flat_bins = rows[valid], flat_bins[valid]
    order = np.lexsort((rows, flat_bins))  # by bin, then by element (domain sorted)
    sorted_bins = flat_bins[order]
    sorted_rows = rows[order]
    counts = np.bincount(sorted_bins, minlength=spec.bins)
    starts = np.concatenate(([0], np.cumsum(counts)[:-1]))
    pos_sorted = np.arange(len(order)) - starts[sorted_bins]
    pos_flat = np.full(n * eta, -1, dtype=np.int64)
    flat_idx = np.flatnonzero(valid)[order]
    pos_flat[flat_idx] = pos_sorted
    elems = dom[sorted_rows].tolist()
    bins = []
    for b in range(spec.bins):
        s = int(starts[b])
        bins.append(elems[s : s + int(counts[b])])
    return SimpleTable(spec, dom, bins, pos_flat.reshape(n, eta), cand)


def lookup_position(simple: SimpleTable, bin_index: int, element: int) -> int:
    members = simple.bins[bin_index]
    i = bisect.bisect_left(members, element)
    if i >= len(members) or members[i] != element:
        raise LookupFailure(f"{element} not in bin {bin_index}")
    return i


@dataclass
class CuckooTable:
    spec: TableSpec
    slots: list
    stash: list

    def occupied(self) -> Iterable[tuple[int, int]]:
        return ((j, u) for j, u in enumerate(self.slots) if u is not None)

    def location(self) -> dict[int, tuple[str, int]]:
        loc: dict[int, tuple[str, int]] = {}
        for j, u in self.occupied():
            loc[u] = ("bin", j)
        for t, u in enumerate(self.stash):
            loc[u] = ("stash", t)
        return loc


def build_cuckoo_table(
    spec: TableSpec,
    selection: Sequence[int],
    rng: Random | None = None,
    max_relocations: int = MAX_RELOCATIONS,
) -> CuckooTable:
    """Random-walk cuckoo insertion; overflow goes to the stash (capacity sigma)."""
    items = [int(u) for u in selection]
    if len(set(items)) != len(items):
        raise ParameterError("selection contains duplicates")
    if any(not 0 <= u < spec.m for u in items):
        raise ParameterError("selection index outside [0, m)")
    if rng is None:
        rng = Random(int.from_bytes(spec.hash_seed, "big"))
    slots: list = [None] * spec.bins
    stash: list[int] = []
    if not items:
        return CuckooTable(spec, slots, stash)
    cand_rows = dedup_rows(spec.hash_matrix(items)).tolist()
    cands = {u: [b for b in row if b >= 0] for u, row in zip(items, cand_rows)}
    for placed, item in enumerate(items):
        cur = item
        prev_bin = -1
        for _ in range(max_relocations + 1):
            options = cands[cur]
            free = next((b for b in options if slots[b] is None), None)
            if free is not None:
                slots[free] = cur
                cur = None
                break
            choices = [b for b in options if b != prev_bin] or options
            b = rng.choice(choices)
            slots[b], cur = cur, slots[b]
            prev_bin = b
        if cur is not None:
            if len(stash) < spec.sigma:
                stash.append(cur)
            else:
                raise CuckooInsertionError(
                    f"cuckoo insertion failed after {max_relocations} relocations with full stash",
                    placed=placed,
                    pending=len(items) - placed,
                )
    return CuckooTable(spec, slots, stash)


@dataclass(frozen=True)
class Recommendation:
    epsilon: float
    theta_estimate: int
    depth: int
    compression: float


def estimate_theta(m: int, c: float) -> float:
    """Bilinear interpolation of the max-bin-size table over (c %, log2 m), clamped."""
    pct = min(max(c * 100.0, 1.0), 70.0)
    lm = min(max(math.log2(m), 10.0), 25.0)
    rows = sorted(MAX_BIN_TABLE)
    hi_r = next(r for r in rows if r >= pct)
    lo_r = max(r for r in rows if r <= pct)
    cols = MAX_BIN_LOG2M
    hi_c = next(i for i, v in enumerate(cols) if v >= lm)
    lo_c = max(i for i, v in enumerate(cols) if v <= lm)

    def along_m(row: int) -> float:
        a, b = MAX_BIN_TABLE[row][lo_c], MAX_BIN_TABLE[row][hi_c]
        if hi_c == lo_c:
            return float(a)
        f = (lm - cols[lo_c]) / (cols[hi_c] - cols[lo_c])
        return a + f * (b - a)

    va, vb = along_m(lo_r), along_m(hi_r)
    if hi_r == lo_r:
        return va
    f = (pct - lo_r) / (hi_r - lo_r)
    return va + f * (vb - va)


def recommend_params(m: int, k: int) -> Recommendation:
    if not 0 < k <= m:
        raise ParameterError("need 0 < k <= m")
    c = k / m
    theta = round(estimate_theta(m, c))
    depth = depth_for(theta)
    if c >= 0.01 and m <= 1 << 25:
        depth = min(depth, DEPTH_CAP)
    return Recommendation(scale_factor(k), theta, depth, c)


def measure_theta(m: int, c: float, trials: int, seed: int = 0, epsilon: float | None = None) -> list[int]:
    """Max simple-bin size over ``trials`` independent public hash seeds."""
    k = math.ceil(c * m)
    eps = scale_factor(k) if epsilon is None else epsilon
    rng = Random(seed)
    out = []
    for _ in range(trials):
        spec = TableSpec(m=m, k=k, epsilon=eps, hash_seed=rng.randbytes(16))
        out.append(build_simple_table(spec).theta)
    return out
