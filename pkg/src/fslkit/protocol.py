"""Semi-honest two-server private submodel retrieval (PSR) and secure submodel
aggregation (SSA).

Key index convention: bins ``0..B-1`` then stash rows ``B..B+sigma-1``. The root
seed of key ``j`` at server ``b`` is ``prf(msk_b, j)``. The client sends every
public part to server 0 (which forwards them) and one master seed per server.
"""
from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field, replace
from enum import IntEnum
from random import Random
from typing import Mapping, Sequence

import numpy as np

from . import limbs
from .batch_code import (
    CuckooTable,
    SimpleTable,
    TableSpec,
    build_cuckoo_table,
    build_simple_table,
    lookup_position,
)
from .dpf import (
    DpfKey,
    DpfParams,
    DpfPublicPart,
    deserialize_public,
    dpf_eval,
    dpf_gen,
    convert_leaves,
    eval_full_rows,
    expand_leaves,
    leaf_limbs,
    serialize_public,
)
from .errors import FormatError, ModeError, ParameterError, ProtocolError, StateError
from .group import GroupParams, GroupVector
from .primitives import SEED_BYTES, prf_derive, random_seed
from .udpf import (
    ClientTrapdoor,
    Hint,
    UdpfKey,
    merge_hints,
    udpf_eval,
    udpf_converter,
    udpf_eval_full_rows,
    udpf_gen,
    udpf_next,
    udpf_update,
)

ENVELOPE_MAGIC = b"FSL1"
ENVELOPE = struct.Struct(">4sBQIQ")
KEY_BATCH = 1024


class Role(IntEnum):
    PSR_Q = 1
    PSR_A = 2
    SSA_U = 3
    SSA_HINT = 4
    SSA_SHARE = 5


FULL_DOMAIN = "full_domain"
UNION_RESTRICTED = "union_restricted"


def pack_envelope(role: Role, round_: int, client_id: int, payload: bytes) -> bytes:
    return ENVELOPE.pack(ENVELOPE_MAGIC, int(role), round_, client_id, len(payload)) + payload


def unpack_envelope(data: bytes) -> tuple[Role, int, int, bytes]:
    if len(data) < ENVELOPE.size:
        raise FormatError("truncated envelope")
    magic, role, round_, client_id, length = ENVELOPE.unpack_from(data)
    if magic != ENVELOPE_MAGIC:
        raise FormatError(f"bad envelope magic {magic!r}")
    payload = data[ENVELOPE.size :]
    if len(payload) != length:
        raise FormatError(f"payload length {len(payload)} != declared {length}")
    try:
        role = Role(role)
    except ValueError as exc:
        raise FormatError(f"unknown role byte {role}") from exc
    return role, round_, client_id, payload


@dataclass
class SystemSetup:
    spec: TableSpec
    group: GroupParams
    simple: SimpleTable
    n_clients: int = 1
    mode: str = FULL_DOMAIN

    @classmethod
    def create(
        cls,
        spec: TableSpec,
        group: GroupParams,
        n_clients: int = 1,
        union: Sequence[int] | None = None,
    ) -> "SystemSetup":
        mode = FULL_DOMAIN if union is None else UNION_RESTRICTED
        domain = None if union is None else sorted(set(int(u) for u in union))
        return cls(spec, group, build_simple_table(spec, domain), n_clients, mode)

    @property
    def domain(self) -> np.ndarray:
        return self.simple.domain

    @property
    def domain_size(self) -> int:
        return len(self.simple.domain)

    @property
    def n_bins(self) -> int:
        return self.spec.bins

    @property
    def n_keys(self) -> int:
        return self.spec.bins + self.spec.sigma

    @property
    def stash_depth(self) -> int:
        return max(1, math.ceil(math.log2(self.domain_size))) if self.domain_size > 1 else 1

    def bin_params(self, group: GroupParams | None = None) -> DpfParams:
        return DpfParams(self.simple.depth, group or self.group)

    def stash_params(self, group: GroupParams | None = None) -> DpfParams:
        return DpfParams(self.stash_depth, group or self.group)

    def key_params(self, j: int, group: GroupParams | None = None) -> DpfParams:
        return self.bin_params(group) if j < self.n_bins else self.stash_params(group)

    @property
    def psr_group(self) -> GroupParams:
        return GroupParams(self.group.l, 1)

    def to_text(self) -> str:
        lines = [self.spec.to_text().rstrip("\n"), f"l={self.group.l}", f"tau={self.group.tau}", f"mode={self.mode}"]
        if self.mode == UNION_RESTRICTED:
            lines.append("union=" + ",".join(str(int(u)) for u in self.domain))
        return "\n".join(sorted(lines)) + "\n"

    def bin_rows(self) -> list[list[int]]:
        """Domain rows of each bin's members, cached."""
        cached = getattr(self, "_bin_rows", None)
        if cached is None:
            if self.mode == FULL_DOMAIN and self.domain_size == self.spec.m:
                cached = self.simple.bins
            else:
                dom = self.domain
                cached = [np.searchsorted(dom, b).tolist() for b in self.simple.bins]
            self._bin_rows = cached
        return cached


@dataclass
class ClientState:
    client_id: int
    selection: list
    updates: dict
    cuckoo: CuckooTable | None = None
    msk0: bytes = b""
    msk1: bytes = b""
    trapdoors: list | None = None
    epoch: int = -1

    def check(self, setup: SystemSetup) -> None:
        if self.cuckoo is None:
            raise StateError("cuckoo table not built")


def make_client(
    setup: SystemSetup,
    client_id: int,
    selection: Sequence[int],
    updates: Mapping[int, GroupVector] | None = None,
    rng: Random | None = None,
) -> ClientState:
    sel = [int(u) for u in selection]
    if len(sel) > setup.spec.k:
        raise ParameterError(f"selection of {len(sel)} exceeds capacity k={setup.spec.k}")
    for u in sel:
        setup.simple.row_of(u)  # must be in the setup domain
    upd = dict(updates or {})
    if updates is not None and set(upd) != set(sel):
        raise ParameterError("updates must cover exactly the selection")
    cuckoo = build_cuckoo_table(setup.spec, sel, rng=rng)
    return ClientState(client_id, sel, upd, cuckoo, random_seed(rng), random_seed(rng))


# --- uploads ---------------------------------------------------------------


@dataclass
class ClientUpload:
    """What one server receives from (or on behalf of) one client in a round."""

    party: int
    client_id: int
    round: int
    role: Role
    master_seed: bytes = b""
    publics: tuple = ()
    hint: Hint | None = None

    def payload(self) -> bytes:
        if self.role == Role.SSA_HINT:
            return self.hint.to_bytes() if self.hint is not None else b""
        return self.master_seed + struct.pack(">I", len(self.publics)) + b"".join(self.publics)

    def to_bytes(self) -> bytes:
        return pack_envelope(self.role, self.round, self.client_id, self.payload())

    def header_bytes(self) -> int:
        """Envelope, count, and per-record headers; excluded from payload accounting."""
        if self.role == Role.SSA_HINT:
            return ENVELOPE.size + 16
        return ENVELOPE.size + 4 + 8 * len(self.publics)

    def with_publics(self, publics: Sequence[bytes]) -> "ClientUpload":
        return replace(self, publics=tuple(publics))

    def with_hint(self, hint: Hint) -> "ClientUpload":
        return replace(self, hint=hint)

    @classmethod
    def from_bytes(cls, data: bytes, party: int, group: GroupParams | None = None) -> "ClientUpload":
        role, round_, client_id, payload = unpack_envelope(data)
        if role == Role.SSA_HINT:
            if group is None:
                raise ParameterError("group needed to parse a hint")
            return cls(party, client_id, round_, role, hint=Hint.from_bytes(payload, group))
        if len(payload) < SEED_BYTES + 4:
            raise FormatError("truncated upload")
        msk = payload[:SEED_BYTES]
        (count,) = struct.unpack_from(">I", payload, SEED_BYTES)
        rest = payload[SEED_BYTES + 4 :]
        publics = []
        off = 0
        for _ in range(count):
            if off + 8 > len(rest):
                raise FormatError("truncated key record")
            depth = rest[off + 4]
            l = rest[off + 5]
            tau = int.from_bytes(rest[off + 6 : off + 8], "big")
            size = 8 + 16 * depth + -(-2 * depth // 8) + tau * l // 8
            publics.append(rest[off : off + size])
            off += size
        if off != len(rest):
            raise FormatError("trailing bytes after key records")
        return cls(party, client_id, round_, role, msk, tuple(publics))


def _placements(state: ClientState, setup: SystemSetup):
    """Per key index: (alpha, element or None)."""
    out = []
    for j, u in enumerate(state.cuckoo.slots):
        out.append((0, None) if u is None else (lookup_position(setup.simple, j, u), u))
    stash = state.cuckoo.stash
    for t in range(setup.spec.sigma):
        if t < len(stash):
            out.append((setup.simple.row_of(stash[t]), stash[t]))
        else:
            out.append((0, None))
    return out


def _root_seeds(state: ClientState, j: int) -> tuple[bytes, bytes]:
    return prf_derive(state.msk0, j), prf_derive(state.msk1, j)


def _uploads(state: ClientState, role: Role, round_: int, publics: list[bytes]):
    up0 = ClientUpload(0, state.client_id, round_, role, state.msk0, tuple(publics))
    up1 = ClientUpload(1, state.client_id, round_, role, state.msk1, ())
    return up0, up1


def psr_client_query(state: ClientState, setup: SystemSetup, round_: int = 0):
    """Bin keys with beta = 1 at the cuckoo element's rank, dummies elsewhere."""
    state.check(setup)
    group = setup.psr_group
    one = group.one()
    publics = []
    for j, (alpha, u) in enumerate(_placements(state, setup)):
        params = setup.key_params(j, group)
        beta = group.zero() if u is None else one
        k0, _ = dpf_gen(params, alpha, beta, seeds=_root_seeds(state, j))
        publics.append(serialize_public(k0))
    return _uploads(state, Role.PSR_Q, round_, publics)


def ssa_client_upload(state: ClientState, setup: SystemSetup, round_: int = 0, updatable: bool = False):
    """Bin keys with beta = the update of the element placed there.

    With ``updatable`` the keys are UDPF keys at epoch ``round_`` (must be 0 for a
    fresh chain) and the client keeps per-key trapdoors for later hints.
    """
    state.check(setup)
    if set(state.updates) != set(state.selection):
        raise StateError("updates do not match the selection")
    group = setup.group
    publics = []
    trapdoors = []
    for j, (alpha, u) in enumerate(_placements(state, setup)):
        params = setup.key_params(j)
        beta = group.zero() if u is None else state.updates[u]
        seeds = _root_seeds(state, j)
        if updatable:
            k0, _, trapdoor = udpf_gen(params, alpha, beta, seeds=seeds)
            trapdoors.append(trapdoor)
            publics.append(serialize_public(k0.inner))
        else:
            k0, _ = dpf_gen(params, alpha, beta, seeds=seeds)
            publics.append(serialize_public(k0))
    if updatable:
        state.trapdoors = trapdoors
        state.epoch = round_
    return _uploads(state, Role.SSA_U, round_, publics)


def ssa_udpf_round(
    state: ClientState,
    setup: SystemSetup,
    new_updates: Mapping[int, GroupVector],
    round_: int,
) -> ClientUpload:
    """Hint-only upload re-targeting every key (dummies get beta' = 0)."""
    if state.trapdoors is None:
        raise ModeError("client has no updatable keys; run round 0 with updatable=True")
    if round_ < 1:
        raise ModeError("hint rounds start at round 1")
    if set(new_updates) != set(state.selection):
        raise ModeError("fixed-submodel mode requires the same selection every round")
    group = setup.group
    hints = []
    for trapdoor, (_, u) in zip(state.trapdoors, _placements(state, setup)):
        beta = group.zero() if u is None else new_updates[u]
        hints.append(udpf_next(trapdoor, beta, round_))
    state.updates = dict(new_updates)
    state.epoch = round_
    return ClientUpload(0, state.client_id, round_, Role.SSA_HINT, hint=merge_hints(hints))


# --- server side -----------------------------------------------------------


def server_keys(upload: ClientUpload, setup: SystemSetup, group: GroupParams | None = None) -> list[DpfKey]:
    """Rebuild this server's DPF keys from its master seed and the public parts."""
    if len(upload.publics) != setup.n_keys:
        raise ProtocolError(f"expected {setup.n_keys} key records, got {len(upload.publics)}")
    if len(upload.master_seed) != SEED_BYTES:
        raise ProtocolError("missing master seed")
    keys = []
    for j, raw in enumerate(upload.publics):
        params = setup.key_params(j, group)
        public, _ = deserialize_public(raw, params)
        keys.append(DpfKey(upload.party, prf_derive(upload.master_seed, j), public, params))
    return keys


def server_udpf_keys(upload: ClientUpload, setup: SystemSetup) -> list[UdpfKey]:
    return [UdpfKey(k, upload.round) for k in server_keys(upload, setup)]


def apply_hint(keys: Sequence[UdpfKey], hint: Hint) -> list[UdpfKey]:
    if len(hint.new_final_cws) != len(keys):
        raise ProtocolError(f"hint carries {len(hint.new_final_cws)} words for {len(keys)} keys")
    return [udpf_update(k, hint, i) for i, k in enumerate(keys)]


@dataclass
class ServerShare:
    party: int
    values: list = field(default_factory=list)

    def to_bytes(self) -> bytes:
        return b"".join(v.to_bytes() for v in self.values)

    @classmethod
    def from_bytes(cls, data: bytes, party: int, group: GroupParams) -> "ServerShare":
        width = group.element_bytes
        if len(data) % width:
            raise FormatError("share length is not a whole number of elements")
        return cls(party, [GroupVector.from_bytes(data[i : i + width], group) for i in range(0, len(data), width)])


def _batch_size(depth: int) -> int:
    """Keys per full-domain batch, keeping about 2^20 leaves in flight."""
    return max(1, min(KEY_BATCH, (1 << 20) >> depth))


def _batched_rows(keys: Sequence, count_fn, udpf: bool) -> list[list[tuple]]:
    """Full-domain rows of same-depth keys, evaluated in batches."""
    out = []
    if not keys:
        return out
    step = _batch_size(keys[0].params.depth)
    for start in range(0, len(keys), step):
        chunk = keys[start : start + step]
        count = count_fn(start, len(chunk))
        if udpf:
            out.extend(udpf_eval_full_rows(chunk, count))
        else:
            out.extend(eval_full_rows(chunk, count))
    return out


def evaluate_keys(keys: Sequence, setup: SystemSetup, udpf: bool = False) -> list[list[tuple]]:
    """Per-key share rows: bin keys over their bin, stash keys over the domain."""
    B = setup.n_bins
    theta = max(setup.simple.theta, 1)
    rows = _batched_rows(keys[:B], lambda s, n: theta, udpf)
    if len(keys) > B:
        rows += _batched_rows(keys[B:], lambda s, n: setup.domain_size, udpf)
    return rows


def psr_server_answer(upload: ClientUpload, w: Sequence[GroupVector], setup: SystemSetup) -> ServerShare:
    """Per bin: sum over the bin's members of w[member] * share(rank)."""
    if len(w) != setup.domain_size:
        raise ParameterError(f"weights cover {len(w)} elements, domain has {setup.domain_size}")
    keys = server_keys(upload, setup, setup.psr_group)
    rows = evaluate_keys(keys, setup)
    mask = setup.group.mask
    tau = setup.group.tau
    wvals = [v.elems for v in w]
    bin_rows = setup.bin_rows()
    out = []
    for j, key_rows in enumerate(rows):
        members = bin_rows[j] if j < setup.n_bins else range(setup.domain_size)
        acc = [0] * tau
        for d, row in enumerate(members):
            s = key_rows[d][0]
            if s:
                wv = wvals[row]
                for c in range(tau):
                    acc[c] += wv[c] * s
        out.append(GroupVector(setup.group, tuple(a & mask for a in acc)))
    return ServerShare(upload.party, out)


def psr_client_reconstruct(
    state: ClientState, share0: ServerShare, share1: ServerShare, setup: SystemSetup | None = None
) -> dict[int, GroupVector]:
    cuckoo = state.cuckoo
    n = len(cuckoo.slots) + cuckoo.spec.sigma
    if len(share0.values) != n or len(share1.values) != n:
        raise ProtocolError(f"expected {n} answers per server")
    out = {}
    for j, u in enumerate(cuckoo.slots):
        if u is not None:
            out[u] = share0.values[j] + share1.values[j]
    B = len(cuckoo.slots)
    for t, u in enumerate(cuckoo.stash):
        out[u] = share0.values[B + t] + share1.values[B + t]
    return out


def _check_rounds(uploads: Sequence[ClientUpload]) -> None:
    rounds = {u.round for u in uploads}
    if len(rounds) > 1:
        raise ProtocolError(f"uploads mix rounds {sorted(rounds)}")


def scatter_plan(setup: SystemSetup) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(bin, rank, domain row) for every simple-table placement, sorted by bin."""
    cached = getattr(setup, "_scatter_plan", None)
    if cached is None:
        bin_rows = setup.bin_rows()
        sizes = np.array([len(b) for b in bin_rows], dtype=np.int64)
        key_ix = np.repeat(np.arange(len(bin_rows), dtype=np.int64), sizes)
        starts = np.cumsum(sizes) - sizes
        leaf_ix = np.arange(int(sizes.sum()), dtype=np.int64) - np.repeat(starts, sizes)
        target = np.fromiter((r for b in bin_rows for r in b), dtype=np.int64, count=int(sizes.sum()))
        cached = (key_ix, leaf_ix, target)
        setup._scatter_plan = cached
    return cached


def new_accumulator(setup: SystemSetup) -> np.ndarray:
    return limbs.zeros(setup.domain_size, setup.group)


def _dpf_view(keys: Sequence):
    if keys and isinstance(keys[0], UdpfKey):
        epochs = {k.epoch for k in keys}
        if len(epochs) > 1:
            raise ProtocolError(f"keys span epochs {sorted(epochs)}")
        return [k.inner for k in keys], udpf_converter(epochs.pop())
    return list(keys), convert_leaves


def accumulate_keys(acc: np.ndarray, keys: Sequence, setup: SystemSetup) -> None:
    """Add one client's unsigned leaf values into ``acc`` at domain coordinates.

    Bin keys are read at ranks ``0..|bin|-1``; stash keys at every domain row.
    The party sign is applied once in ``finish_share``.
    """
    group = setup.group
    B = setup.n_bins
    if len(keys) != setup.n_keys:
        raise ProtocolError(f"expected {setup.n_keys} keys, got {len(keys)}")
    inner, convert = _dpf_view(keys)
    cw = limbs.vectors_to_limbs([k.public.final_cw for k in inner], group)
    key_ix, leaf_ix, target = scatter_plan(setup)
    step = _batch_size(setup.simple.depth)
    for start in range(0, B, step):
        stop = min(B, start + step)
        a, b = np.searchsorted(key_ix, [start, stop])
        if a == b:
            continue
        seeds, bits = expand_leaves(inner[start:stop])
        k, lf = key_ix[a:b] - start, leaf_ix[a:b]
        vals = leaf_limbs(seeds[k, lf], bits[k, lf], cw[key_ix[a:b]], group, convert)
        np.add.at(acc, target[a:b], vals)
    n = setup.domain_size
    step = _batch_size(setup.stash_depth)
    for start in range(B, len(inner), step):
        chunk = inner[start : start + step]
        seeds, bits = expand_leaves(chunk)
        per_leaf = np.repeat(cw[start : start + len(chunk)], n, axis=0)
        vals = leaf_limbs(seeds[:, :n].reshape(-1, 16), bits[:, :n].reshape(-1), per_leaf, group, convert)
        acc += vals.reshape((len(chunk), n) + acc.shape[1:]).sum(axis=0)


def finish_share(acc: np.ndarray, setup: SystemSetup, party: int) -> ServerShare:
    vals = limbs.normalize(acc.copy())
    if party:
        vals = limbs.negate(vals)
    return ServerShare(party, limbs.to_vectors(vals, setup.group))


def aggregate_keys(keys_by_client: Sequence[Sequence], setup: SystemSetup, party: int) -> ServerShare:
    acc = new_accumulator(setup)
    for keys in keys_by_client:
        accumulate_keys(acc, keys, setup)
    return finish_share(acc, setup, party)


def ssa_server_aggregate(uploads: Sequence[ClientUpload], setup: SystemSetup, party: int | None = None) -> ServerShare:
    """Evaluate each bin key once over its bin and scatter into domain coordinates."""
    _check_rounds(uploads)
    if party is None:
        party = uploads[0].party if uploads else 0
    return aggregate_keys([server_keys(u, setup) for u in uploads], setup, party)


def ssa_server_aggregate_udpf(
    keys_by_client: Sequence[Sequence[UdpfKey]], setup: SystemSetup, party: int
) -> ServerShare:
    epochs = {k.epoch for keys in keys_by_client for k in keys}
    if len(epochs) > 1:
        raise ProtocolError(f"keys span epochs {sorted(epochs)}")
    return aggregate_keys(keys_by_client, setup, party)


def ssa_server_aggregate_literal(keys_by_client: Sequence[Sequence], setup: SystemSetup, party: int) -> ServerShare:
    """Per-coordinate reference: sum over candidate bins at the element's rank plus
    every stash key at the element's domain row. Pointwise evaluation only."""
    group = setup.group
    B = setup.n_bins
    out = []
    for row, j in enumerate(setup.domain.tolist()):
        total = group.zero()
        for keys in keys_by_client:
            ev = udpf_eval if keys and isinstance(keys[0], UdpfKey) else dpf_eval
            for b, pos in setup.simple.placements(j):
                total = total + ev(keys[b], pos)
            for t in range(B, len(keys)):
                total = total + ev(keys[t], row)
        out.append(total)
    return ServerShare(party, out)


def ssa_finalize(
    share0: ServerShare,
    share1: ServerShare,
    w_prev: Sequence[GroupVector],
    setup: SystemSetup | None = None,
) -> list[GroupVector]:
    """w_prev + share0 + share1; a union-restricted share is scattered back to length m."""
    if len(share0.values) != len(share1.values):
        raise ProtocolError("share lengths differ")
    if setup is not None and setup.mode == UNION_RESTRICTED:
        if len(share0.values) != setup.domain_size:
            raise ProtocolError("share length does not match the union domain")
        out = list(w_prev)
        for row, j in enumerate(setup.domain.tolist()):
            out[j] = out[j] + share0.values[row] + share1.values[row]
        return out
    if len(w_prev) != len(share0.values):
        raise ProtocolError(f"w_prev has {len(w_prev)} entries, shares have {len(share0.values)}")
    return [w + a + b for w, a, b in zip(w_prev, share0.values, share1.values)]


# --- server-to-server forwarding -------------------------------------------


def forward_bytes(upload: ClientUpload) -> bytes:
    """Server 0 relays the public key material (or hint) it received to server 1."""
    if upload.role == Role.SSA_HINT:
        payload = upload.hint.to_bytes()
    else:
        payload = struct.pack(">I", len(upload.publics)) + b"".join(upload.publics)
    return pack_envelope(upload.role, upload.round, upload.client_id, payload)


def parse_forward(data: bytes, group: GroupParams | None = None):
    """Inverse of :func:`forward_bytes`: returns (role, round, client_id, publics or hint)."""
    role, round_, client_id, payload = unpack_envelope(data)
    if role == Role.SSA_HINT:
        if group is None:
            raise ParameterError("group needed to parse a hint")
        return role, round_, client_id, Hint.from_bytes(payload, group)
    fake = pack_envelope(role, round_, client_id, bytes(SEED_BYTES) + payload)
    return role, round_, client_id, ClientUpload.from_bytes(fake, 1).publics
