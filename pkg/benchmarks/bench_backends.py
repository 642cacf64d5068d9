"""Compare the numba and pure-numpy kernel backends.

Each backend runs in its own interpreter because the choice is fixed at
import time by CARINF_DISABLE_NUMBA.  Timings exclude JIT compilation.

    python benchmarks/bench_backends.py [--reps 400]
"""
import argparse
import json
import os
import subprocess
import sys

WORKER = r"""
import json, sys, time
import numpy as np
from carinf import _kernels as K
from carinf import montecarlo as mc
from carinf.rng import RngSeed

reps = int(sys.argv[1])

def best(fn, repeat=5):
    fn()  # warm up, triggers compilation
    out = []
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        out.append(time.perf_counter() - t)
    return min(out)

rng = np.random.default_rng(0)
n = 1_000_000
y = rng.normal(size=n)
cell = rng.integers(0, 20, size=n)
order = np.argsort(cell, kind="stable").astype(np.int64)
counts = np.bincount(cell, minlength=20)
starts = np.concatenate(([0], np.cumsum(counts))).astype(np.int64)
blocks = (np.arange(n) % 2).astype(np.int64)
keys = np.arange(1, 21, dtype=np.uint64)

res = {
    "backend": K.BACKEND,
    "splitmix_1e6": best(lambda: K.splitmix_block(np.uint64(7), 0, n)),
    "cell_stats_1e6": best(lambda: K.cell_stats(y, cell, 20)),
    "shuffle_1e6": best(lambda: K.shuffle_blocks(order, starts, blocks, keys)),
    "group_sums_1e6": best(lambda: K.group_sums(cell, y, 20)),
}
run = lambda: mc.run_table("t1", reps=reps, seed=3, models=(4,), schemes=("SBR",), threads=1)
res["table_row_per_rep_ms"] = 1000 * best(run, repeat=2) / reps
print(json.dumps(res))
"""


def run_backend(disable, reps):
    env = dict(os.environ, CARINF_DISABLE_NUMBA="1" if disable else "0")
    out = subprocess.run([sys.executable, "-c", WORKER, str(reps)], env=env,
                         capture_output=True, text=True, check=True)
    return json.loads(out.stdout.strip().splitlines()[-1])


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--reps", type=int, default=400)
    args = ap.parse_args()
    numpy_res = run_backend(True, args.reps)
    numba_res = run_backend(False, args.reps)
    if numba_res["backend"] != "numba":
        print("numba is not installed; only the numpy backend was timed")
    print(f"{'benchmark':<24}{'numpy':>12}{numba_res['backend']:>12}{'speedup':>10}")
    for key in numpy_res:
        if key == "backend":
            continue
        a, b = numpy_res[key], numba_res[key]
        unit = "ms" if key.endswith("_ms") else "s"
        print(f"{key:<24}{a:>10.4f}{unit:>2}{b:>10.4f}{unit:>2}{a / b:>9.2f}x")


if __name__ == "__main__":
    main()
