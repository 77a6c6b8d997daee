"""Throughput of the compiled kernels against the pure-Python fallback.

The backend is fixed at import time, so each one runs in its own interpreter.
Usage::

    python benchmarks/bench_kernels.py [--steps N] [--repeat R]
"""

import argparse
import json
import os
import subprocess
import sys

WORKER = r"""
import json, math, sys, time
from pslb._accel import backend
from pslb.algos import PSParams, run_nebai, run_psebai_plus
from pslb.env import make_example_5_1

steps, repeat = int(sys.argv[1]), int(sys.argv[2])
inst = make_example_5_1(2, math.pi / 8)
p = PSParams(eps=0.1, delta=0.05, gamma=6, w=166, lcd_mult=3, b=0.5, radius="tight", allow_violation=True)
jobs = {
    "psebai_plus": lambda s: run_psebai_plus(inst, p, s, max_steps=steps),
    "nebai": lambda s: run_nebai(inst, 0.1, 0.05, s, max_steps=steps),
}
out = {"backend": backend()}
for name, job in jobs.items():
    job(0)  # warm-up: compilation or cache load
    best = math.inf
    for s in range(repeat):
        t = time.perf_counter()
        r = job(s + 1)
        best = min(best, time.perf_counter() - t)
    out[name] = {"steps": r.tau, "seconds": best, "steps_per_s": r.tau / best}
print(json.dumps(out))
"""


def measure(disable, steps, repeat):
    env = dict(os.environ, PSLB_DISABLE_NUMBA="1" if disable else "0")
    proc = subprocess.run([sys.executable, "-c", WORKER, str(steps), str(repeat)], env=env,
                          capture_output=True, text=True, check=True)
    return json.loads(proc.stdout)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--steps", type=int, default=200_000, help="steps per run (default: 200000)")
    ap.add_argument("--repeat", type=int, default=3, help="timed runs per kernel, best kept (default: 3)")
    args = ap.parse_args(argv)

    jit = measure(False, args.steps, args.repeat)
    py = measure(True, args.steps, args.repeat)
    print(f"{'kernel':<14}{'backend':<10}{'steps/s':>14}{'speedup':>10}")
    for name in ("psebai_plus", "nebai"):
        for res in (py, jit):
            rate = res[name]["steps_per_s"]
            print(f"{name:<14}{res['backend']:<10}{rate:>14,.0f}{rate / py[name]['steps_per_s']:>9.1f}x")


if __name__ == "__main__":
    main()
