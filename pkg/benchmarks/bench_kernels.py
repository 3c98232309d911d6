"""Compare the compiled kernels against the pure-Python fallback.

Micro-benchmarks load both kernel modules side by side; the end-to-end rows run
a child interpreter per implementation because the machine binds its core at
import time (``PMCU_PURE_PYTHON=1`` forces the fallback).

    python benchmarks/bench_kernels.py [--quick]
"""

from __future__ import annotations

import argparse
import os
import random
import subprocess
import sys
import timeit

from pmcu import _kernels_py

try:
    from pmcu import _kernels as _kernels_c
except ImportError:
    _kernels_c = None

HEAP = 128 * 1024


def bench_shadow_scan(k, reps):
    shadow = bytearray(HEAP)
    return min(timeit.repeat(lambda: k.shadow_scan(shadow, 0, HEAP), number=reps, repeat=3)) / reps


def bench_heap_churn(k, ops):
    def run():
        shadow = bytearray(HEAP)
        heap = k.RegionHeap(shadow, 0, 0, HEAP)
        rng = random.Random(1)
        live = []
        for _ in range(ops):
            if live and rng.random() < 0.45:
                heap.free(live.pop(rng.randrange(len(live))))
            else:
                try:
                    live.append(heap.alloc(rng.randint(1, 256)))
                except Exception:
                    heap.free(live.pop(0))
    return min(timeit.repeat(run, number=1, repeat=3)) / ops


END_TO_END = r"""
import time
from pmcu.core import Machine, MachineConfig, TickConfig
from pmcu import harness
m = Machine(MachineConfig(tick=TickConfig(period=7), trace_enabled=False))
counter = [0]
def worker():
    for _ in range(N):
        m.disable_irq(); counter[0] += 1; m.enable_irq()
    m.task_exit()
for _ in range(4):
    m.task_create(worker)
t = time.perf_counter(); m.start(); crit = time.perf_counter() - t
assert counter[0] == 4 * N
t = time.perf_counter(); s = harness.run_persistent("empty", harness.Generator(0), E)
print(crit, s.execs_per_sec)
"""


def end_to_end(pure: bool, n: int, execs: int) -> tuple[float, float]:
    env = dict(os.environ)
    env.pop("PMCU_PURE_PYTHON", None)
    if pure:
        env["PMCU_PURE_PYTHON"] = "1"
    code = f"N = {n}\nE = {execs}\n" + END_TO_END
    out = subprocess.run([sys.executable, "-c", code], env=env, check=True,
                         capture_output=True, text=True).stdout.split()
    return float(out[0]), float(out[1])


def main() -> None:
    ap = argparse.ArgumentParser()
    ap.add_argument("--quick", action="store_true")
    args = ap.parse_args()
    reps, ops, n, execs = (20, 2000, 2000, 300) if args.quick else (200, 20000, 10000, 2000)

    impls = [("python", _kernels_py)] + ([("cython", _kernels_c)] if _kernels_c else [])
    rows = []
    for name, k in impls:
        rows.append((f"shadow_scan 128KiB [{name}]", bench_shadow_scan(k, reps) * 1e6, "us/call"))
        rows.append((f"heap alloc/free churn [{name}]", bench_heap_churn(k, ops) * 1e6, "us/op"))
    for name, pure in [("python", True)] + ([("cython", False)] if _kernels_c else []):
        crit, eps = end_to_end(pure, n, execs)
        rows.append((f"4x{n} critical increments [{name}]", crit * 1e3, "ms"))
        rows.append((f"persistent empty firmware [{name}]", eps, "execs/s"))
    width = max(len(r[0]) for r in rows)
    for label, value, unit in rows:
        print(f"{label:<{width}}  {value:12.2f} {unit}")
    if _kernels_c is None:
        print("compiled kernels not built; only the fallback was measured")


if __name__ == "__main__":
    main()
