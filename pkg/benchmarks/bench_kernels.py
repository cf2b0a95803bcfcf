"""Time the numba kernels against the pure Python fallback.

    python benchmarks/bench_kernels.py [--slots N] [--qmax Q] [--repeat R]

Each workload runs once per path to warm up (numba compiles or loads its
cache), then ``--repeat`` timed runs; the best time is reported. Outputs of
the two paths are compared and the script exits non-zero if they differ.
"""
import argparse
import contextlib
import sys
import time

import numpy as np

from alohajam import _jit, _kernels
from alohajam.queue_model import SystemParams, Uniform, Vector, transition_matrix
from alohajam.sim import SimConfig, coupled_run, simulate

KERNELS = ("sim_chunk", "coupled_chunk", "chain_entries")


@contextlib.contextmanager
def kernel_path(name):
    saved = {k: getattr(_kernels, k) for k in KERNELS}
    for k in KERNELS:
        setattr(_kernels, k, getattr(_kernels, f"_{k}_{name}"))
    try:
        yield
    finally:
        for k, v in saved.items():
            setattr(_kernels, k, v)


def best_of(fn, repeat):
    out = fn()
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def workloads(slots, qmax):
    two = SystemParams.from_alpha(0.8, 0.5)
    three = SystemParams(3, 0.05, 0.4)
    cfg = SimConfig(slots, slots // 100, seed=1)
    return [
        ("simulate n=2", lambda: simulate(two, Uniform(0.1), cfg).digest()),
        ("simulate n=3", lambda: simulate(three, Vector((0.1, 0.2, 0.05)), cfg).digest()),
        ("coupled_run n=2", lambda: coupled_run(two, Uniform(0.15), cfg)),
        (f"transition_matrix n=2 qmax={qmax}", lambda: _matrix_key(two, Uniform(0.1), qmax)),
        ("transition_matrix n=3 qmax=25", lambda: _matrix_key(three, Vector((0.1, 0.2, 0.05)), 25)),
    ]


def _matrix_key(params, policy, qmax):
    P, states = transition_matrix(params, policy, qmax)
    return states.tobytes(), P.indptr.tobytes(), P.indices.tobytes(), np.round(P.data, 15).tobytes()


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--slots", type=int, default=200_000)
    ap.add_argument("--qmax", type=int, default=200)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)
    if _jit.numba is None:
        print("numba is not importable; nothing to compare", file=sys.stderr)
        return 1

    print(f"{'workload':<34}{'numba s':>10}{'python s':>11}{'speedup':>9}  same")
    mismatch = 0
    for label, fn in workloads(args.slots, args.qmax):
        with kernel_path("nb"):
            t_nb, out_nb = best_of(fn, args.repeat)
        with kernel_path("py"):
            t_py, out_py = best_of(fn, args.repeat)
        same = out_nb == out_py
        mismatch += not same
        print(f"{label:<34}{t_nb:>10.4f}{t_py:>11.4f}{t_py / t_nb:>8.1f}x  {'yes' if same else 'NO'}")
    return 1 if mismatch else 0


if __name__ == "__main__":
    sys.exit(main())
