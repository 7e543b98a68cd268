"""Time the numba and numpy paths of the hot kernels on realistic inputs.

    python3 benchmarks/bench_kernels.py [--n 16] [--repeat 5] [--json out.json]

Each kernel is warmed up once per backend (JIT compilation is excluded),
then timed ``--repeat`` times; the best time is reported together with the
largest difference between the two backends' outputs.
"""
from __future__ import annotations

import argparse
import json
import time

import numpy as np

from srbfem import _kernels
from srbfem.coupling import AssemblyParams, assemble_srb_system, coupling_block_C
from srbfem.testcases import make_case


def _best(fn, repeat):
    fn()
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def _diff(a, b):
    if isinstance(a, tuple):
        return max(_diff(x, y) for x, y in zip(a, b))
    if hasattr(a, "toarray"):
        return float(abs(a - b).max())
    return float(np.max(np.abs(np.asarray(a, float) - np.asarray(b, float))))


def workloads(n):
    case = make_case("case2")
    mesh, v3, wells = case.discretize(n)
    rng = np.random.default_rng(0)
    pts = rng.random((200_000, 3))
    G = wells[0].potential
    loc = mesh.locator
    return {
        f"locate 200k points (n={n})": lambda: loc.locate(pts),
        "segment potential 200k points": lambda: G.value_and_grad(pts),
        f"coupling block C (n={n})": lambda: coupling_block_C(v3, wells, params=AssemblyParams()),
        f"SRB assembly (n={n})": lambda: assemble_srb_system(v3, wells, bc_3d=case.v_exact,
                                                            bc_1d=case.p_hat_a).matrix(),
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=16)
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--json")
    args = ap.parse_args(argv)
    if _kernels.numba is None:
        raise SystemExit("numba is not installed; nothing to compare")
    work = workloads(args.n)
    results = []
    start = _kernels.backend()
    try:
        for name, fn in work.items():
            row = {"kernel": name}
            outs = {}
            for backend in ("numba", "numpy"):
                _kernels.set_backend(backend)
                row[backend], outs[backend] = _best(fn, args.repeat)
            row["speedup"] = row["numpy"] / row["numba"]
            row["max_abs_diff"] = _diff(outs["numba"], outs["numpy"])
            results.append(row)
    finally:
        _kernels.set_backend(start)
    print(f"{'kernel':40s} {'numba [s]':>10s} {'numpy [s]':>10s} {'speedup':>8s} {'max diff':>10s}")
    for r in results:
        print(f"{r['kernel']:40s} {r['numba']:10.4f} {r['numpy']:10.4f} {r['speedup']:8.1f} {r['max_abs_diff']:10.2e}")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(results, fh, indent=2)
    return results


if __name__ == "__main__":
    main()
