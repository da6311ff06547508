"""Compiled vs. numpy kernels on the hot paths of key generation and evaluation.

    python benchmarks/bench_kernels.py [--repeat 5] [--csv out.csv]

Each row times one kernel call on both backends and reports the speedup. The
last rows time a whole SSA round (m=2^15, c=10%) with each backend forced.
"""
from __future__ import annotations

import argparse
import csv
import os
import subprocess
import sys
import time
from random import Random

import numpy as np

from fslkit.kernels import available_backends, load_backend


def _best(fn, repeat: int) -> float:
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def kernel_cases():
    rng = Random(0)
    npr = np.random.default_rng(0)
    s0, s1 = rng.randbytes(16), rng.randbytes(16)
    depth = 16
    cw_seeds = npr.integers(0, 256, (1, depth, 16), dtype=np.uint8)
    cw_bits = npr.integers(0, 4, (1, depth), dtype=np.uint8)
    roots = npr.integers(0, 256, (1, 16), dtype=np.uint8)
    ts = np.zeros(1, dtype=np.uint8)
    batch_roots = npr.integers(0, 256, (1024, 16), dtype=np.uint8)
    batch_ts = (np.arange(1024) & 1).astype(np.uint8)
    batch_cws = npr.integers(0, 256, (1024, 6, 16), dtype=np.uint8)
    batch_bits = npr.integers(0, 4, (1024, 6), dtype=np.uint8)
    leaves = npr.integers(0, 256, (1 << 16, 16), dtype=np.uint8)
    path_seeds, path_bits = cw_seeds[0].tobytes(), cw_bits[0].tobytes()
    return [
        ("gen_tree x1000 (depth 9)", lambda k: [k.gen_tree(s0, s1, a, 9) for a in range(1000)]),
        ("eval_path x1000 (depth 16)", lambda k: [k.eval_path(s0, 0, path_seeds, path_bits, a, depth) for a in range(1000)]),
        ("eval_full depth 16", lambda k: k.eval_full_many(roots, ts, cw_seeds, cw_bits, depth)),
        ("eval_full 1024 keys depth 6", lambda k: k.eval_full_many(batch_roots, batch_ts, batch_cws, batch_bits, 6)),
        ("convert 2^16 leaves", lambda k: k.convert_many(leaves, 16)),
        ("ro_hash 2^16 leaves", lambda k: k.ro_hash_many(leaves, 3, 16)),
    ]


ROUND_SNIPPET = (
    "import time;from fslkit.harness import Scenario, run_round;"
    "sc=Scenario(m=1<<15,k=3277,n=1);t=time.perf_counter();tr=run_round(sc);"
    "print(time.perf_counter()-t, tr.oracle_match)"
)


def round_time(backend: str) -> float:
    env = dict(os.environ, FSLKIT_PURE_PYTHON="1" if backend == "python" else "0")
    out = subprocess.run([sys.executable, "-c", ROUND_SNIPPET], env=env, capture_output=True, text=True, check=True)
    seconds, match = out.stdout.split()
    if match != "True":
        raise RuntimeError(f"{backend} round did not match the oracle")
    return float(seconds)


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--csv", default=None)
    ap.add_argument("--skip-round", action="store_true")
    args = ap.parse_args(argv)

    backends = available_backends()
    if "cython" not in backends:
        print("compiled backend not built; only the numpy fallback is available", file=sys.stderr)
    mods = {name: load_backend(name) for name in backends}
    rows = []
    for name, fn in kernel_cases():
        row = {"case": name}
        for b, mod in mods.items():
            row[f"{b}_s"] = _best(lambda: fn(mod), args.repeat)
        rows.append(row)
    if not args.skip_round:
        row = {"case": "SSA round m=2^15 c=10%"}
        for b in backends:
            row[f"{b}_s"] = round_time(b)
        rows.append(row)

    cols = ["case"] + [f"{b}_s" for b in backends] + ["speedup"]
    for row in rows:
        if "cython_s" in row and "python_s" in row:
            row["speedup"] = row["python_s"] / row["cython_s"]
    print(f"{'case':32s}" + "".join(f"{c:>12s}" for c in cols[1:]))
    for row in rows:
        print(f"{row['case']:32s}" + "".join(f"{row.get(c, float('nan')):12.4f}" for c in cols[1:]))
    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=cols)
            w.writeheader()
            w.writerows(rows)
    return 0


if __name__ == "__main__":
    sys.exit(main())
