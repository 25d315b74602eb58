"""Time the compiled grid-search kernel against the pure-Python one.

Two workloads, each run once per backend with identical inputs: brute-force
searches over random tiny instances (the generator the oracle tests use) and
raw kernel calls on synthetic difference-constraint clause sets, where the
objective mode visits every grid point that survives pruning.

    python benchmarks/bench_gridsearch.py [--instances 40] [--kernels 10] [--seed 0]
"""

import argparse
import random
import time

from qbvsched import gridsearch, problem_from_dict
from qbvsched.instances import tiny_problem
from qbvsched.validator import brute_force_feasible, brute_force_minimum


def workload(n, seed):
    rng = random.Random(seed)
    return [problem_from_dict(tiny_problem(rng)) for _ in range(n)]


def run(problems, backend):
    saved = gridsearch._impl
    gridsearch._impl = backend
    try:
        t = time.perf_counter()
        out = []
        for p in problems:
            out.append(brute_force_feasible(p).feasible)
            if len({s.period for s in p.streams}) == 1:
                out.append(brute_force_minimum(p, "min-e2e-sum").objective)
        return time.perf_counter() - t, out
    finally:
        gridsearch._impl = saved


def kernel_workload(n, seed, n_vars=5, hi=12):
    rng = random.Random(seed)
    out = []
    for _ in range(n):
        clauses = []
        for _ in range(n_vars * 2):
            a, b = rng.sample(range(n_vars), 2)
            c, d = rng.sample(range(n_vars), 2)
            clauses.append([(a, b, rng.randint(-4, 8)), (c, d, rng.randint(-4, 8))])
        coef = [rng.randint(-2, 3) for _ in range(n_vars)]
        out.append(([0] * n_vars, [hi] * n_vars, 1, clauses, coef))
    return out


def run_kernel(calls, backend):
    t = time.perf_counter()
    out = [backend(list(lo), list(hi), step, clauses, coef) for lo, hi, step, clauses, coef in calls]
    return time.perf_counter() - t, out


def report(name, t_py, t_c):
    line = f"{name:<12} python {t_py:8.3f} s"
    if t_c is not None:
        line += f"   cython {t_c:8.3f} s   speedup {t_py / t_c:6.1f}x"
    print(line)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--instances", type=int, default=40)
    ap.add_argument("--kernels", type=int, default=10)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    compiled = gridsearch.compiled_search
    if compiled is None:
        print("compiled kernel not built; timing pure Python only")

    problems = workload(args.instances, args.seed)
    t_py, ref = run(problems, gridsearch.python_search)
    t_c = None
    if compiled is not None:
        t_c, got = run(problems, compiled)
        assert got == ref, "backends disagree on the oracle workload"
    report("oracle", t_py, t_c)

    calls = kernel_workload(args.kernels, args.seed)
    t_py, ref = run_kernel(calls, gridsearch.python_search)
    t_c = None
    if compiled is not None:
        t_c, got = run_kernel(calls, compiled)
        assert got == ref, "backends disagree on the kernel workload"
    report("kernel", t_py, t_c)


if __name__ == "__main__":
    main()
