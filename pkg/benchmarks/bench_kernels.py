"""Compare the compiled and pure-Python kernel backends.

Usage: python benchmarks/bench_kernels.py [--repeat N]

Times three hot paths on both backends and checks that they agree:
regularized integration of ex1 across the boundary layer, the symmetric
Jacobi eigenvalue used by the l2 measure, and batched expression evaluation.
"""

import argparse
import time

import numpy as np

from filippov_contraction._kernels import _pure, available_backends
from filippov_contraction.expr import compile_program
from filippov_contraction.registry import build
from filippov_contraction.system import as_filippov


def evaluator(mod, sys):
    ps = lambda exprs: mod.ProgramSet([compile_program(e) for e in exprs])  # noqa: E731
    return mod.FieldEvaluator(
        sys.n, sys.m, ps(sys.f_plus), ps(sys.f_minus), ps([sys.H]), ps(sys.grad_H), None, sys.B
    )


def best_of(fn, repeat):
    best, out = float("inf"), None
    for _ in range(repeat):
        t = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t)
    return best, out


def bench_regularized(mod, repeat):
    ev = evaluator(mod, as_filippov(build("ex1")))
    return best_of(lambda: ev.advance_regularized(0.0, np.array([2.0, 2.0]), 0.5, 1e-3, 1e-4)[0], repeat)


def bench_jacobi(mod, repeat):
    rng = np.random.default_rng(0)
    mats = [rng.standard_normal((8, 8)) for _ in range(500)]
    mats = [0.5 * (a + a.T) for a in mats]
    return best_of(lambda: np.array([mod.sym_max_eig(a) for a in mats]), repeat)


def bench_eval(mod, repeat):
    sys = as_filippov(build("ex2"))
    ps = mod.ProgramSet([compile_program(e) for row in sys.jac_plus for e in row])
    pts = np.random.default_rng(1).uniform(-2, 2, size=(20000, 2))
    u = np.zeros(0)
    return best_of(lambda: np.array([ps.evaluate(0.0, p, u) for p in pts]), repeat)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    backends = available_backends()
    if backends.get("compiled") is None:
        print("compiled backend not built; only the pure backend is available")
    cases = [
        ("regularized ex1, eps=1e-4, t in [0, 0.5]", bench_regularized),
        ("jacobi max eigenvalue, 500 x (8x8)", bench_jacobi),
        ("jacobian evaluation, 20000 points", bench_eval),
    ]
    print(f"{'case':<44}{'pure [s]':>12}{'compiled [s]':>14}{'speedup':>10}{'max |diff|':>13}")
    for label, fn in cases:
        tp, outp = fn(_pure, args.repeat)
        mod = backends.get("compiled")
        if mod is None:
            print(f"{label:<44}{tp:>12.4f}{'-':>14}{'-':>10}{'-':>13}")
            continue
        tc, outc = fn(mod, args.repeat)
        diff = float(np.max(np.abs(np.asarray(outp) - np.asarray(outc))))
        print(f"{label:<44}{tp:>12.4f}{tc:>14.4f}{tp / tc:>9.1f}x{diff:>13.2e}")


if __name__ == "__main__":
    main()
