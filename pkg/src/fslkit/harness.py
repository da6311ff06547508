"""Deterministic in-process simulation of PSR/SSA rounds with byte accounting."""
from __future__ import annotations

import csv
import hashlib
import io
import math
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from random import Random
from typing import Sequence

from . import protocol as P
from .batch_code import TableSpec, scale_factor
from .errors import FslError, ParameterError
from .group import GroupParams, GroupVector

MODES = ("full_domain", "union_restricted", "udpf_fixed")
SERVERS = ("S0", "S1")


class OracleMismatch(FslError):
    """Protocol output differs from the plaintext computation."""


@dataclass(frozen=True)
class Scenario:
    m: int
    k: int | tuple = 1
    n: int = 1
    l: int = 128
    tau: int = 1
    epsilon: float | None = None
    eta: int = 3
    sigma: int = 0
    bins: int | None = None
    mode: str = "full_domain"
    rounds: int = 1
    rng_seed: int = 0

    def __post_init__(self) -> None:
        if self.mode not in MODES:
            raise ParameterError(f"mode must be one of {MODES}")
        if self.m < 1 or self.n < 0 or self.rounds < 1:
            raise ParameterError("need m >= 1, n >= 0, rounds >= 1")
        if isinstance(self.k, tuple) and len(self.k) != self.n:
            raise ParameterError("per-client k list must have n entries")
        if max(self.k_list(), default=0) > self.mega_m:
            raise ParameterError("k exceeds the number of (mega-)elements")

    @property
    def mega_m(self) -> int:
        return math.ceil(self.m / self.tau)

    def k_list(self) -> list[int]:
        if isinstance(self.k, tuple):
            return list(self.k)
        return [self.k] * self.n

    def capacity(self) -> int:
        return max(self.k_list(), default=self.k if isinstance(self.k, int) else 0)

    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            value = getattr(self, f.name)
            if value is None:
                continue
            if isinstance(value, tuple):
                value = ",".join(str(v) for v in value)
            lines.append(f"{f.name} = {value}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "Scenario":
        kv = {}
        for raw in text.splitlines():
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ParameterError(f"malformed scenario line: {raw!r}")
            key, value = (s.strip() for s in line.split("=", 1))
            kv[key] = value
        if not kv:
            raise ParameterError("empty scenario")
        known = {f.name for f in fields(cls)}
        unknown = set(kv) - known
        if unknown:
            raise ParameterError(f"unknown scenario fields: {sorted(unknown)}")
        if "m" not in kv:
            raise ParameterError("scenario needs m")
        args: dict = {}
        for key, value in kv.items():
            if key == "k":
                parts = [int(v) for v in value.split(",")]
                args[key] = parts[0] if len(parts) == 1 else tuple(parts)
            elif key == "epsilon":
                args[key] = float(value)
            elif key == "mode":
                args[key] = value
            else:
                args[key] = int(value)
        return cls(**args)

    @classmethod
    def load(cls, path: str | Path) -> "Scenario":
        return cls.from_text(Path(path).read_text())


@dataclass(frozen=True)
class Message:
    round: int
    sender: str
    receiver: str
    role: str
    client_id: int
    nbytes: int
    header_bytes: int
    digest: str


@dataclass
class RoundTranscript:
    kind: str
    scenario: Scenario
    messages: list = field(default_factory=list)
    timings: list = field(default_factory=list)
    round_matches: list = field(default_factory=list)
    final_w: list | None = None
    oracle_w: list | None = None
    accounting: dict = field(default_factory=dict)

    @property
    def oracle_match(self) -> bool:
        return bool(self.round_matches) and all(self.round_matches) or (
            not self.round_matches and self.final_w == self.oracle_w
        )

    def log(self, round_: int, sender: str, receiver: str, role: P.Role, client_id: int,
            data: bytes, header_bytes: int) -> None:
        self.messages.append(
            Message(round_, sender, receiver, role.name, client_id, len(data), header_bytes,
                    hashlib.sha256(data).hexdigest()[:32])
        )

    def client_upload_bits(self, round_: int, client: int) -> int:
        """Client-to-server payload bits, envelope and record headers excluded."""
        name = f"C{client}"
        return 8 * sum(
            msg.nbytes - msg.header_bytes
            for msg in self.messages
            if msg.round == round_ and msg.sender == name
        )

    def client_upload_bytes(self, round_: int, client: int, headers: bool = True) -> int:
        name = f"C{client}"
        return sum(
            msg.nbytes if headers else msg.nbytes - msg.header_bytes
            for msg in self.messages
            if msg.round == round_ and msg.sender == name
        )

    def messages_csv(self) -> str:
        buf = io.StringIO()
        names = [f.name for f in fields(Message)]
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(names)
        for msg in self.messages:
            writer.writerow([getattr(msg, n) for n in names])
        return buf.getvalue()

    def canonical(self) -> str:
        """Everything except wall-clock timings."""
        parts = [self.kind, self.scenario.to_text(), self.messages_csv(), repr(self.round_matches)]
        if self.final_w is not None:
            parts.append(hashlib.sha256(repr(self.final_w).encode()).hexdigest())
        return "\n".join(parts)

    def digest(self) -> str:
        return hashlib.sha256(self.canonical().encode()).hexdigest()

    def summary(self) -> str:
        lines = [
            f"kind = {self.kind}",
            f"oracle_match = {str(self.oracle_match).lower()}",
            f"rounds = {len(self.round_matches)}",
            f"messages = {len(self.messages)}",
            f"digest = {self.digest()}",
        ]
        for key in sorted(self.accounting):
            lines.append(f"{key} = {self.accounting[key]}")
        for r, t in enumerate(self.timings):
            up = self.client_upload_bytes(r, 0) if self.scenario.n else 0
            lines.append(
                f"round {r}: client0_upload_bytes={up} gen_ms={t['gen_ms']:.1f} "
                f"eval_ms={t['eval_ms']:.1f} agg_ms={t['agg_ms']:.1f} match={self.round_matches[r]}"
            )
        return "\n".join(lines) + "\n"

    def channel_classes(self) -> set[tuple[str, str]]:
        out = set()
        for msg in self.messages:
            ends = sorted([msg.sender, msg.receiver], key=lambda s: (s[0] != "S", s))
            a, b = ends
            out.add(("S0", "S1") if {a, b} == {"S0", "S1"} else ("C", b if b in SERVERS else a))
        return out


def _random_vector(rng: Random, group: GroupParams, live: int) -> GroupVector:
    vals = [rng.getrandbits(group.l) if c < live else 0 for c in range(group.tau)]
    return GroupVector(group, tuple(vals))


def _live(sc: Scenario, u: int) -> int:
    """Number of real (unpadded) weights in mega-element u."""
    return min(sc.tau, sc.m - u * sc.tau)


def _flat_scatter(sc: Scenario, flat: list[int], updates: dict, mask: int) -> None:
    # plaintext ideal functionality: no DPF, no hashing
    for u, vec in updates.items():
        for c, v in enumerate(vec.elems):
            idx = u * sc.tau + c
            if idx < sc.m:
                flat[idx] = (flat[idx] + v) & mask


def _flatten(sc: Scenario, vectors: Sequence[GroupVector]) -> list[int]:
    return [x for v in vectors for x in v.elems][: sc.m]


def _table_spec(sc: Scenario, rng: Random) -> TableSpec:
    cap = sc.capacity()
    eps = sc.epsilon if sc.epsilon is not None else scale_factor(max(cap, 1))
    return TableSpec(
        m=sc.mega_m,
        k=cap,
        epsilon=eps,
        eta=sc.eta,
        sigma=sc.sigma,
        hash_seed=rng.randbytes(16),
        bins_override=sc.bins,
    )


def _accounting(setup: P.SystemSetup, sc: Scenario) -> dict:
    return {
        "bins": setup.n_bins,
        "depth": setup.simple.depth,
        "theta": setup.simple.theta,
        "stash_depth": setup.stash_depth,
        "tau": sc.tau,
        "l": sc.l,
        "sigma": sc.sigma,
        "k_per_client": tuple(sc.k_list()),
        "domain_size": setup.domain_size,
    }


def _exchange_shares(tr: RoundTranscript, round_: int, role: P.Role, s0: P.ServerShare, s1: P.ServerShare) -> None:
    for src, dst, share in (("S0", "S1", s0), ("S1", "S0", s1)):
        data = P.pack_envelope(role, round_, 0, share.to_bytes())
        tr.log(round_, src, dst, role, 0, data, P.ENVELOPE.size)


def run_round(sc: Scenario, strict: bool = True) -> RoundTranscript:
    """Run ``sc.rounds`` SSA rounds and compare each against the plaintext oracle."""
    rng = Random(sc.rng_seed)
    group = GroupParams(sc.l, sc.tau)
    mask = group.mask
    spec = _table_spec(sc, rng)
    tr = RoundTranscript("ssa", sc)
    flat_w = [rng.getrandbits(sc.l) for _ in range(sc.m)]
    oracle = list(flat_w)
    udpf = sc.mode == "udpf_fixed"
    fixed_setup = None if sc.mode == "union_restricted" else P.SystemSetup.create(spec, group, sc.n)
    states: list[P.ClientState] = []
    server_state: list[list] = [[], []]

    for r in range(sc.rounds):
        if udpf and r > 0:
            selections = [st.selection for st in states]
        else:
            selections = [rng.sample(range(sc.mega_m), k) for k in sc.k_list()]
        updates = [{u: _random_vector(rng, group, _live(sc, u)) for u in sel} for sel in selections]
        if fixed_setup is None:
            union = sorted({u for sel in selections for u in sel}) or [0]
            setup = P.SystemSetup.create(spec, group, sc.n, union=union)
        else:
            setup = fixed_setup
        tr.accounting = _accounting(setup, sc)

        t0 = time.perf_counter()
        wire0, wire1 = [], []
        if udpf and r > 0:
            for st, upd in zip(states, updates):
                up = P.ssa_udpf_round(st, setup, upd, r)
                wire0.append(up.to_bytes())
        else:
            states = []
            for i, (sel, upd) in enumerate(zip(selections, updates)):
                st = P.make_client(setup, i, sel, upd, rng=rng)
                states.append(st)
                up0, up1 = P.ssa_client_upload(st, setup, r, updatable=udpf)
                wire0.append(up0.to_bytes())
                wire1.append(up1.to_bytes())
        gen_ms = (time.perf_counter() - t0) * 1e3

        role = P.Role.SSA_HINT if udpf and r > 0 else P.Role.SSA_U
        uploads0, uploads1 = [], []
        for i, data in enumerate(wire0):
            up0 = P.ClientUpload.from_bytes(data, 0, group)
            tr.log(r, f"C{i}", "S0", role, i, data, up0.header_bytes())
            if wire1:
                up1 = P.ClientUpload.from_bytes(wire1[i], 1, group)
                tr.log(r, f"C{i}", "S1", role, i, wire1[i], up1.header_bytes())
            fwd = P.forward_bytes(up0)
            tr.log(r, "S0", "S1", role, i, fwd, len(fwd) - len(up0.payload()) + (16 if role == P.Role.SSA_U else 0))
            _, _, _, relayed = P.parse_forward(fwd, group)
            if role == P.Role.SSA_HINT:
                uploads0.append(up0)
                uploads1.append(P.ClientUpload(1, i, r, role, hint=relayed))
            else:
                uploads0.append(up0)
                uploads1.append(up1.with_publics(relayed))

        eval_ms = agg_ms = 0.0
        shares = []
        for party, uploads in ((0, uploads0), (1, uploads1)):
            t1 = time.perf_counter()
            if udpf:
                if r == 0:
                    server_state[party] = [P.server_udpf_keys(u, setup) for u in uploads]
                else:
                    server_state[party] = [P.apply_hint(keys, u.hint) for keys, u in zip(server_state[party], uploads)]
                client_keys = server_state[party]
            else:
                P._check_rounds(uploads)
                client_keys = [P.server_keys(u, setup) for u in uploads]
            acc = P.new_accumulator(setup)
            for keys in client_keys:
                P.accumulate_keys(acc, keys, setup)
            t2 = time.perf_counter()
            shares.append(P.finish_share(acc, setup, party))
            t3 = time.perf_counter()
            eval_ms += (t2 - t1) * 1e3
            agg_ms += (t3 - t2) * 1e3
        _exchange_shares(tr, r, P.Role.SSA_SHARE, shares[0], shares[1])

        w_mega = [GroupVector(group, tuple(flat_w[u * sc.tau + c] if u * sc.tau + c < sc.m else 0
                                           for c in range(sc.tau))) for u in range(sc.mega_m)]
        if setup.mode == P.FULL_DOMAIN:
            new_mega = P.ssa_finalize(shares[0], shares[1], w_mega)
        else:
            new_mega = P.ssa_finalize(shares[0], shares[1], w_mega, setup)
        flat_w = _flatten(sc, new_mega)
        for upd in updates:
            _flat_scatter(sc, oracle, upd, mask)
        match = flat_w == oracle
        tr.round_matches.append(match)
        tr.timings.append({"gen_ms": gen_ms, "eval_ms": eval_ms, "agg_ms": agg_ms})
        if strict and not match:
            tr.final_w, tr.oracle_w = flat_w, list(oracle)
            raise OracleMismatch(f"round {r}: aggregate differs from plaintext sum")
    tr.final_w, tr.oracle_w = flat_w, oracle
    return tr


def run_psr(sc: Scenario, strict: bool = True, zero_weights: bool = False) -> RoundTranscript:
    """Every client retrieves its selection; results are checked by direct lookup."""
    rng = Random(sc.rng_seed)
    group = GroupParams(sc.l, sc.tau)
    spec = _table_spec(sc, rng)
    tr = RoundTranscript("psr", sc)
    w_all = [group.zero() if zero_weights else _random_vector(rng, group, _live(sc, u)) for u in range(sc.mega_m)]
    for r in range(sc.rounds):
        selections = [rng.sample(range(sc.mega_m), k) for k in sc.k_list()]
        if sc.mode == "union_restricted":
            union = sorted({u for sel in selections for u in sel}) or [0]
            setup = P.SystemSetup.create(spec, group, sc.n, union=union)
        else:
            setup = P.SystemSetup.create(spec, group, sc.n)
        tr.accounting = _accounting(setup, sc)
        w_dom = [w_all[j] for j in setup.domain.tolist()]
        gen_ms = eval_ms = 0.0
        ok = True
        for i, sel in enumerate(selections):
            t0 = time.perf_counter()
            st = P.make_client(setup, i, sel, rng=rng)
            up0, up1 = P.psr_client_query(st, setup, r)
            gen_ms += (time.perf_counter() - t0) * 1e3
            d0, d1 = up0.to_bytes(), up1.to_bytes()
            tr.log(r, f"C{i}", "S0", P.Role.PSR_Q, i, d0, up0.header_bytes())
            tr.log(r, f"C{i}", "S1", P.Role.PSR_Q, i, d1, up1.header_bytes())
            p0 = P.ClientUpload.from_bytes(d0, 0)
            fwd = P.forward_bytes(p0)
            tr.log(r, "S0", "S1", P.Role.PSR_Q, i, fwd, P.ENVELOPE.size + 4 + 8 * len(p0.publics))
            _, _, _, relayed = P.parse_forward(fwd)
            p1 = P.ClientUpload.from_bytes(d1, 1).with_publics(relayed)
            t1 = time.perf_counter()
            a0 = P.psr_server_answer(p0, w_dom, setup)
            a1 = P.psr_server_answer(p1, w_dom, setup)
            eval_ms += (time.perf_counter() - t1) * 1e3
            answers = []
            for srv, ans in (("S0", a0), ("S1", a1)):
                data = P.pack_envelope(P.Role.PSR_A, r, i, ans.to_bytes())
                tr.log(r, srv, f"C{i}", P.Role.PSR_A, i, data, P.ENVELOPE.size)
                answers.append(P.ServerShare.from_bytes(P.unpack_envelope(data)[3], ans.party, group))
            got = P.psr_client_reconstruct(st, answers[0], answers[1])
            ok = ok and got == {u: w_all[u] for u in sel}
        tr.round_matches.append(ok)
        tr.timings.append({"gen_ms": gen_ms, "eval_ms": eval_ms, "agg_ms": 0.0})
        if strict and not ok:
            raise OracleMismatch(f"round {r}: retrieved weights differ from direct lookup")
    return tr


BENCH_COLUMNS = (
    "m", "k", "c", "tau", "sigma", "mode", "round",
    "client_upload_bytes", "gen_ms", "eval_ms", "agg_ms", "oracle_match",
)


def bench_rows(sc: Scenario) -> list[dict]:
    tr = run_round(sc, strict=False)
    k = sc.capacity()
    rows = []
    for r, t in enumerate(tr.timings):
        up = (
            sum(tr.client_upload_bytes(r, i, headers=False) for i in range(sc.n)) / sc.n if sc.n else 0
        )
        rows.append({
            "m": sc.m, "k": k, "c": round(k / sc.mega_m, 6), "tau": sc.tau, "sigma": sc.sigma,
            "mode": sc.mode, "round": r, "client_upload_bytes": up,
            "gen_ms": round(t["gen_ms"], 3), "eval_ms": round(t["eval_ms"], 3),
            "agg_ms": round(t["agg_ms"], 3), "oracle_match": str(tr.round_matches[r]).lower(),
        })
    return rows


def bench_sweep(grid: Sequence[Scenario]) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=list(BENCH_COLUMNS), lineterminator="\n")
    writer.writeheader()
    for sc in grid:
        for row in bench_rows(sc):
            writer.writerow(row)
    return buf.getvalue()


def default_grid(m_values=(1 << 10,), rates=(0.1, 0.2, 0.3), n: int = 1, seed: int = 0) -> list[Scenario]:
    return [
        Scenario(m=m, k=max(1, math.ceil(c * m)), n=n, rng_seed=seed)
        for m in m_values
        for c in rates
    ]
