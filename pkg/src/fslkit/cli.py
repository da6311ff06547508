"""Command-line front door.

Exit codes: 0 ok, 1 check failure, 2 usage error, 3 cuckoo insertion failure.
Files are written under ``--out``, defaulting to ``$FSLKIT_OUT`` or the current
directory.
"""
from __future__ import annotations

import argparse
import math
import os
import sys
from importlib import resources
from pathlib import Path
from random import Random

from . import analytics as A
from .batch_code import recommend_params
from .dpf import DpfParams, dpf_deserialize, dpf_eval, dpf_eval_full, dpf_gen, dpf_serialize
from .errors import CuckooInsertionError, DomainError, FormatError, FslError, ParameterError
from .group import GroupParams, GroupVector
from .harness import OracleMismatch, Scenario, bench_sweep, default_grid, run_psr, run_round

EXIT_OK, EXIT_CHECK, EXIT_USAGE, EXIT_CUCKOO = 0, 1, 2, 3
OUT_ENV = "FSLKIT_OUT"


class UsageError(Exception):
    pass


def _out_dir(arg: str | None) -> Path:
    path = Path(arg or os.environ.get(OUT_ENV) or ".")
    path.mkdir(parents=True, exist_ok=True)
    return path


def _group(args) -> GroupParams:
    try:
        return GroupParams(args.l, args.tau)
    except ParameterError as exc:
        raise UsageError(str(exc)) from exc


def _parse_beta(text: str, group: GroupParams) -> GroupVector:
    try:
        raw = bytes.fromhex(text)
    except ValueError as exc:
        raise UsageError(f"--beta-hex is not hex: {exc}") from exc
    if len(raw) > group.element_bytes:
        raise UsageError(f"beta needs at most {group.element_bytes} bytes, got {len(raw)}")
    return GroupVector.from_bytes(raw.rjust(group.element_bytes, b"\0"), group)


# --- dpf -------------------------------------------------------------------


def cmd_dpf_gen(args) -> int:
    group = _group(args)
    params = DpfParams(args.depth, group)
    if not 0 <= args.alpha < params.domain_size:
        raise UsageError(f"alpha must be in [0, {params.domain_size})")
    beta = _parse_beta(args.beta_hex, group)
    keys = dpf_gen(params, args.alpha, beta, rng=Random(args.seed))
    out = _out_dir(args.out)
    for key in keys:
        data = dpf_serialize(key)
        path = out / f"{args.prefix}{key.party}.dpf"
        path.write_bytes(data)
        print(f"{path}\t{len(data)} bytes\tpayload {params.key_bits()} bits")
    return EXIT_OK


def cmd_dpf_eval(args) -> int:
    try:
        key = dpf_deserialize(Path(args.key).read_bytes(), party=args.party)
    except (OSError, FormatError) as exc:
        raise UsageError(f"cannot read key: {exc}") from exc
    if args.full:
        for x, v in enumerate(dpf_eval_full(key)):
            print(f"{x}\t{v.to_bytes().hex()}")
        return EXIT_OK
    if args.x is None:
        raise UsageError("give --x or --full")
    try:
        share = dpf_eval(key, args.x)
    except DomainError as exc:
        raise UsageError(str(exc)) from exc
    print(share.to_bytes().hex())
    return EXIT_OK


def dpf_selftest(depth: int, trials: int, group: GroupParams, seed: int = 0) -> list[str]:
    """Exhaustive reconstruction check; returns a list of failure descriptions."""
    rng = Random(seed)
    params = DpfParams(depth, group)
    failures = []
    for _ in range(trials):
        alpha = rng.randrange(params.domain_size)
        beta = group.vector([rng.getrandbits(group.l) for _ in range(group.tau)])
        k0, k1 = dpf_gen(params, alpha, beta, rng=rng)
        f0, f1 = dpf_eval_full(k0), dpf_eval_full(k1)
        for x in range(params.domain_size):
            want = beta if x == alpha else group.zero()
            if f0[x] + f1[x] != want or f0[x] != dpf_eval(k0, x):
                failures.append(f"alpha={alpha} x={x}")
                break
    return failures


def cmd_dpf_selftest(args) -> int:
    failures = dpf_selftest(args.depth, args.trials, _group(args), args.seed)
    status = "ok" if not failures else f"{len(failures)} failures"
    print(f"dpf selftest depth={args.depth} trials={args.trials}: {status}")
    for f in failures:
        print(f"  {f}")
    return EXIT_OK if not failures else EXIT_CHECK


# --- run -------------------------------------------------------------------


def bundled_scenarios() -> list[str]:
    root = resources.files("fslkit") / "scenarios"
    return sorted(p.name for p in root.iterdir() if p.name.endswith(".scn"))


def resolve_scenario(name: str) -> str:
    """Scenario text from a path, falling back to a bundled file of the same name."""
    path = Path(name)
    if path.is_file():
        return path.read_text()
    stem = path.name if path.name.endswith(".scn") else path.name + ".scn"
    if stem in bundled_scenarios():
        return (resources.files("fslkit") / "scenarios" / stem).read_text()
    raise UsageError(f"no scenario file {name!r} (bundled: {', '.join(bundled_scenarios())})")


def cmd_run(args) -> int:
    try:
        sc = Scenario.from_text(resolve_scenario(args.scenario))
    except ParameterError as exc:
        raise UsageError(f"bad scenario: {exc}") from exc
    if args.seed is not None:
        sc = Scenario.from_text(sc.to_text().replace(f"rng_seed = {sc.rng_seed}", f"rng_seed = {args.seed}"))
    try:
        tr = run_psr(sc, strict=False) if args.psr else run_round(sc, strict=False)
    except CuckooInsertionError as exc:
        print(f"cuckoo insertion failed: {exc}", file=sys.stderr)
        print(f"  placed={exc.placed} pending={exc.pending}", file=sys.stderr)
        print("  raise epsilon or sigma, or lower k", file=sys.stderr)
        return EXIT_CUCKOO
    out = _out_dir(args.out)
    stem = Path(args.scenario).name.removesuffix(".scn")
    (out / f"{stem}.messages.csv").write_text(tr.messages_csv())
    (out / f"{stem}.summary.txt").write_text(tr.summary())
    print(tr.summary(), end="")
    return EXIT_OK if tr.oracle_match else EXIT_CHECK


# --- rate ------------------------------------------------------------------


def cmd_rate(args) -> int:
    if args.paper_check:
        checks = A.published_checks()
        for c in checks:
            flag = "PASS" if c.passed else "FAIL"
            note = f"  ({c.note})" if c.note else ""
            print(f"{flag}  {c.name}: expected {c.expected}, got {c.got:.6g}{note}")
        bad = sum(not c.passed for c in checks)
        print(f"{len(checks) - bad}/{len(checks)} checks passed")
        return EXIT_OK if not bad else EXIT_CHECK
    models = [
        A.CostModel.from_rate(args.m, c, l=args.l, tau=args.tau, depth=args.depth, epsilon=args.epsilon)
        for c in args.c
    ]
    rows = A.rate_table(models)
    print(A.to_csv(rows) if args.format == "csv" else A.to_text(rows), end="")
    thr = A.threshold_for(args.depth, tau=args.tau, epsilon=args.epsilon, l=args.l)
    line = f"threshold c = {thr:.2%} (depth {args.depth}, tau {args.tau}, epsilon {args.epsilon})"
    if args.depth == 5 and args.tau == 1:
        line += "; published union-mode figure is 13.4%, the formula gives this value"
    print(line)
    return EXIT_OK


# --- params ----------------------------------------------------------------


def cmd_params(args) -> int:
    if not 0 < args.k <= args.m:
        raise UsageError("need 0 < k <= m")
    rec = recommend_params(args.m, args.k)
    print(f"epsilon = {rec.epsilon}")
    print(f"theta_estimate = {rec.theta_estimate}")
    print(f"depth = {rec.depth}")
    print(f"bins = {math.ceil(rec.epsilon * args.k)}")
    model = A.CostModel(m=args.m, k=args.k, epsilon=rec.epsilon, depth=rec.depth)
    report = A.rate_basic(model)
    print(f"rate = {report.rate:.4f}")
    if report.rate > 1:
        print(
            f"warning: c = {rec.compression:.0%} is above the threshold {report.threshold_c:.2%}; "
            "uploading the full model is cheaper",
            file=sys.stderr,
        )
    return EXIT_OK


# --- bench -----------------------------------------------------------------


def cmd_bench(args) -> int:
    grid = default_grid(tuple(args.m), tuple(args.c), n=args.n, seed=args.seed)
    text = bench_sweep(grid)
    if args.out_file:
        path = _out_dir(args.out) / args.out_file
        path.write_text(text)
    print(text, end="")
    return EXIT_OK if "false" not in text else EXIT_CHECK


# --- parser ----------------------------------------------------------------


def _group_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--l", type=int, default=128, help="group bit width (default 128)")
    p.add_argument("--tau", type=int, default=1, help="elements per group vector (default 1)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fslkit", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    dpf = sub.add_parser("dpf", help="DPF key generation and evaluation")
    dsub = dpf.add_subparsers(dest="action", required=True)
    g = dsub.add_parser("gen", help="write a key pair")
    g.add_argument("--depth", type=int, default=9)
    g.add_argument("--alpha", type=int, required=True)
    g.add_argument("--beta-hex", required=True, help="big-endian hex of the tau*l/8-byte output value")
    g.add_argument("--seed", type=int, default=None, help="rng seed for reproducible keys")
    g.add_argument("--prefix", default="key", help="file prefix (default key -> key0.dpf, key1.dpf)")
    g.add_argument("--out", default=None)
    _group_flags(g)
    g.set_defaults(func=cmd_dpf_gen)
    e = dsub.add_parser("eval", help="evaluate one key")
    e.add_argument("--key", required=True)
    e.add_argument("--party", type=int, choices=(0, 1), required=True)
    e.add_argument("--x", type=int, default=None)
    e.add_argument("--full", action="store_true")
    e.set_defaults(func=cmd_dpf_eval)
    s = dsub.add_parser("selftest", help="exhaustive small-domain oracle check")
    s.add_argument("--depth", type=int, default=6)
    s.add_argument("--trials", type=int, default=20)
    s.add_argument("--seed", type=int, default=0)
    _group_flags(s)
    s.set_defaults(func=cmd_dpf_selftest)

    r = sub.add_parser("run", help="simulate a scenario and write its transcript")
    r.add_argument("scenario", help="scenario file or bundled name")
    r.add_argument("--psr", action="store_true", help="run retrieval instead of aggregation")
    r.add_argument("--seed", type=int, default=None, help="override the scenario rng_seed")
    r.add_argument("--out", default=None)
    r.set_defaults(func=cmd_run)

    rt = sub.add_parser("rate", help="closed-form upload cost and advantage rate")
    rt.add_argument("--m", type=float, default=float(1 << 20))
    rt.add_argument("--c", type=float, nargs="+", default=[0.01, 0.05, 0.1])
    rt.add_argument("--depth", type=int, default=9)
    rt.add_argument("--epsilon", type=float, default=1.25)
    rt.add_argument("--format", choices=("csv", "text"), default="text")
    rt.add_argument("--paper-check", action="store_true", help="recompute published constants, exit 1 on drift")
    _group_flags(rt)
    rt.set_defaults(func=cmd_rate)

    pm = sub.add_parser("params", help="recommended epsilon, theta and depth")
    pm.add_argument("--m", type=int, required=True)
    pm.add_argument("--k", type=int, required=True)
    pm.set_defaults(func=cmd_params)

    b = sub.add_parser("bench", help="timed SSA rounds over an (m, c) grid, CSV out")
    b.add_argument("--m", type=int, nargs="+", default=[1 << 10])
    b.add_argument("--c", type=float, nargs="+", default=[0.1, 0.2, 0.3])
    b.add_argument("--n", type=int, default=1)
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--out", default=None)
    b.add_argument("--out-file", default=None, help="also write the CSV here (under --out)")
    b.set_defaults(func=cmd_bench)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"fslkit: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except CuckooInsertionError as exc:
        print(f"fslkit: {exc}", file=sys.stderr)
        return EXIT_CUCKOO
    except OracleMismatch as exc:
        print(f"fslkit: {exc}", file=sys.stderr)
        return EXIT_CHECK
    except (ParameterError, FslError) as exc:
        print(f"fslkit: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
