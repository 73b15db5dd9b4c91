import os
import subprocess
import sys

import numpy as np
import pytest

from filippov_contraction import _kernels
from filippov_contraction._kernels import _pure, available_backends
from filippov_contraction.expr import compile_program, parse
from filippov_contraction.registry import build
from filippov_contraction.system import as_filippov

BACKENDS = available_backends()
compiled = pytest.mark.skipif("compiled" not in BACKENDS, reason="compiled kernels not built")


def evaluator(mod, sys, inputs=None):
    ps = lambda exprs: mod.ProgramSet([compile_program(e) for e in exprs])  # noqa: E731
    return mod.FieldEvaluator(
        sys.n, sys.m, ps(sys.f_plus), ps(sys.f_minus), ps([sys.H]), ps(sys.grad_H),
        ps(inputs) if inputs is not None else None, sys.B,
    )


def test_pure_fallback_is_always_available():
    assert BACKENDS["pure"] is _pure
    assert _kernels.BACKEND in ("pure", "compiled")


def test_environment_forces_pure_backend():
    env = dict(os.environ, FILIPPOV_PURE_PYTHON="1")
    code = "import filippov_contraction as f; print(f.BACKEND)"
    res = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True)
    assert res.returncode == 0 and res.stdout.strip() == "pure"


@compiled
@pytest.mark.parametrize("name", ["ex1", "ex2", "ex3"])
def test_field_kernels_agree(name):
    sys_ = as_filippov(build(name))
    inputs = [parse("6*sin(2*pi*t)", 0)] if sys_.m else None
    a, b = evaluator(_pure, sys_, inputs), evaluator(BACKENDS["compiled"], sys_, inputs)
    rng = np.random.default_rng(1)
    for _ in range(50):
        x = rng.uniform(-3, 3, 2)
        t = float(rng.uniform(0, 2))
        for mode in (_kernels.MODE_PLUS, _kernels.MODE_MINUS, _kernels.MODE_SLIDING):
            np.testing.assert_allclose(a.rhs(mode, t, x), b.rhs(mode, t, x), rtol=1e-14, atol=1e-14)
            np.testing.assert_allclose(a.rk4(mode, t, x, 1e-3), b.rk4(mode, t, x, 1e-3), rtol=1e-14, atol=1e-14)
        np.testing.assert_allclose(a.normal_data(t, x), b.normal_data(t, x), rtol=1e-14, atol=1e-14)
        np.testing.assert_allclose(a.project(t, x), b.project(t, x), rtol=1e-14, atol=1e-14)


@compiled
@pytest.mark.parametrize("phi", [_kernels.PHI_SAT, _kernels.PHI_CUBIC])
def test_regularized_advance_agrees(phi):
    sys_ = as_filippov(build("ex1"))
    a, b = evaluator(_pure, sys_), evaluator(BACKENDS["compiled"], sys_)
    x0 = np.array([2.0, 2.0])
    xa, na, *_ = a.advance_regularized(0.0, x0, 0.3, 1e-3, 1e-3, phi)
    xb, nb, *_ = b.advance_regularized(0.0, x0, 0.3, 1e-3, 1e-3, phi)
    assert na == nb
    np.testing.assert_allclose(xa, xb, rtol=1e-12, atol=1e-14)


@compiled
def test_measure_kernels_agree():
    rng = np.random.default_rng(2)
    fast = BACKENDS["compiled"]
    for n in (1, 2, 3, 6):
        for _ in range(40):
            A = rng.standard_normal((n, n))
            for f in ("mu1", "muinf", "mu2", "norm1", "norminf", "norm2"):
                assert getattr(_pure, f)(A) == pytest.approx(getattr(fast, f)(A), rel=1e-13, abs=1e-13)


def test_step_underflow_raises():
    sys_ = as_filippov(build("ex1"))
    for mod in BACKENDS.values():
        ev = evaluator(mod, sys_)
        with pytest.raises(_kernels.KernelError):
            ev.advance_regularized(0.0, np.array([2.0, 2.0]), 1.0, 1e-3, 1e-6, _kernels.PHI_SAT, 0.5, 50)
