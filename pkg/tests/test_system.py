import json

import numpy as np
import pytest

from filippov_contraction.expr import render
from filippov_contraction.registry import EXAMPLES, build
from filippov_contraction.system import (
    DegenerateSwitchingError,
    FilippovSystem,
    ModelError,
    PWASystem,
    RegionError,
    RegionLabel,
    RelaySystem,
    TangencyError,
    TransitionFunction,
    as_filippov,
    classify_point,
    load_system,
    regularized_field,
    regularized_jacobian,
    sliding_field,
    system_from_dict,
)

SAT, CUBIC = TransitionFunction("sat"), TransitionFunction("cubic")


# -- transition functions ------------------------------------------------------------


@pytest.mark.parametrize("phi", [SAT, CUBIC])
def test_transition_function_invariants(phi):
    assert phi.phi(1.0) == 1.0 and phi.phi(5.0) == 1.0
    assert phi.phi(-1.0) == -1.0 and phi.phi(-5.0) == -1.0
    s = np.linspace(-0.999, 0.999, 401)
    vals = np.array([phi.phi(v) for v in s])
    assert np.all(np.diff(vals) > 0)
    assert np.all(np.abs(vals) < 1)
    assert all(phi.dphi(v) > 0 for v in s)
    assert phi.dphi(3.0) == 0.0 and phi.dphi(-3.0) == 0.0


def test_cubic_is_c1_and_sat_rejects_others():
    assert CUBIC.dphi(1.0) == 0.0 and CUBIC.dphi(-1.0) == 0.0
    h = 1e-6
    for s in (-0.7, 0.0, 0.4):
        assert CUBIC.dphi(s) == pytest.approx((CUBIC.phi(s + h) - CUBIC.phi(s - h)) / (2 * h), abs=1e-8)
    with pytest.raises(ValueError):
        TransitionFunction("tanh")


# -- classification ----------------------------------------------------------------------


def test_classify_example1(ex1):
    assert classify_point(ex1, [1, 0]) is RegionLabel.SLIDING
    assert classify_point(ex1, [0, 5]) is RegionLabel.S_PLUS
    assert classify_point(ex1, [0, -5]) is RegionLabel.S_MINUS
    assert ex1.lie_derivatives([1, 0]) == (-18.0, 18.0)


def test_classify_example3_crossing(ex3):
    fs = as_filippov(ex3)
    lp, lm = fs.lie_derivatives([4, 0], u=[0.0])
    assert (lp, lm) == (1.0, 8.0)
    assert classify_point(fs, [4, 0], u=[0.0]) is RegionLabel.CROSSING


def test_classify_escaping_and_errors():
    esc = FilippovSystem(["1", "1"], ["1", "-1"], "x2")
    assert classify_point(esc, [0, 0]) is RegionLabel.ESCAPING
    tangent = FilippovSystem(["1", "0"], ["-1", "0"], "x2")
    with pytest.raises(TangencyError):
        classify_point(tangent, [0, 0])
    degenerate = FilippovSystem(["-x1"], ["-x1"], "x1^2")
    with pytest.raises(DegenerateSwitchingError):
        classify_point(degenerate, [0.0])
    with pytest.raises(ValueError):
        classify_point(esc, [0, 0], tol=0.0)


def test_sigma_band_scales_with_gradient():
    sys = FilippovSystem(["-x1", "-1"], ["-x1", "1"], "1000*x2")
    # |H| = 5e-7 is within 1e-9 * |grad H| = 1e-6
    assert classify_point(sys, [0, 5e-10]) is RegionLabel.SLIDING
    assert classify_point(sys, [0, 2e-9]) is RegionLabel.S_PLUS


# -- sliding field ---------------------------------------------------------------------------


def test_sliding_field_example1(ex1):
    for x1 in (-3.0, 0.5, 2.0):
        fs, lam = sliding_field(ex1, [x1, 0.0])
        assert lam == 0.5
        np.testing.assert_array_equal(fs, [-4 * x1, 0.0])


def test_sliding_field_continuous_case():
    sys = FilippovSystem(["-x1 - 1", "-x2"], ["-x1 - 1", "-x2"], "x1 - x2")
    # f+ = f-: lambda is still L+/(L+ - L-), which needs L+ != L-, so no sliding here
    with pytest.raises(RegionError):
        sliding_field(sys, [0.5, 0.5])


def test_sliding_field_relay(ex4):
    fs_sys = as_filippov(ex4)
    A, b, c = ex4.A, ex4.b, ex4.c
    rng = np.random.default_rng(5)
    checked = 0
    for x1 in rng.uniform(-3, 3, 30):
        x = np.array([x1, 0.0])
        if classify_point(fs_sys, x) is not RegionLabel.SLIDING:
            continue
        fs, lam = sliding_field(fs_sys, x)
        expected = (np.eye(2) - np.outer(b, c) / (c @ b)) @ A @ x
        np.testing.assert_allclose(fs, expected, atol=1e-12)
        assert 0.0 <= lam <= 1.0
        checked += 1
    assert checked > 5


def test_sliding_tangency_residual_random():
    sys = FilippovSystem(["-x1 + sin(x2) - 2", "x1 - x2 - 3"], ["-x1 + 2", "x1 - x2 + 3"], "x1 + x2")
    rng = np.random.default_rng(9)
    for _ in range(100):
        a = rng.uniform(-2, 2)
        x = np.array([a, -a])
        try:
            fs, lam = sliding_field(sys, x)
        except RegionError:
            continue
        lp, lm = sys.lie_derivatives(x)
        g = sys.gradient_H(x)
        assert abs(g @ fs) <= 1e-12 * (abs(lp) + abs(lm))
        assert 0.0 <= lam <= 1.0


def test_sliding_field_rejects_non_sliding(ex1):
    with pytest.raises(RegionError):
        sliding_field(ex1, [0, 1])


# -- regularization ---------------------------------------------------------------------------


@pytest.mark.parametrize("phi", [SAT, CUBIC])
def test_regularized_field_outside_band_is_exact(ex1, phi):
    eps = 1e-2
    fp, fm = ex1.fields([0.3, eps])
    np.testing.assert_array_equal(regularized_field(ex1, phi, eps, [0.3, eps]), fp)
    fp, fm = ex1.fields([0.3, -2 * eps])
    np.testing.assert_array_equal(regularized_field(ex1, phi, eps, [0.3, -2 * eps]), fm)


def test_regularized_field_midpoint(ex1):
    fp, fm = ex1.fields([0.7, 0.0])
    np.testing.assert_allclose(regularized_field(ex1, SAT, 0.1, [0.7, 0.0]), 0.5 * (fp + fm), atol=0)


def test_regularized_relay_inside_band(ex4):
    fs = as_filippov(ex4)
    eps = 1e-3
    A, b, c = ex4.A, ex4.b, ex4.c
    for x in ([0.3, 4e-4], [-1.0, -7e-4], [2.0, 0.0]):
        x = np.array(x)
        expected = (A - np.outer(b, c) / eps) @ x
        np.testing.assert_allclose(regularized_field(fs, SAT, eps, x), expected, rtol=1e-12, atol=1e-12)


@pytest.mark.parametrize("phi", [SAT, CUBIC])
def test_regularized_field_continuous_at_band_edge(ex2, phi):
    eps, d = 1e-2, 1e-12
    for sgn in (1.0, -1.0):
        a = regularized_field(ex2, phi, eps, [0.4, sgn * (eps - d)])
        b = regularized_field(ex2, phi, eps, [0.4, sgn * (eps + d)])
        assert np.max(np.abs(a - b)) <= 1e-9 * (1 + np.max(np.abs(a)))


def test_regularized_jacobian_parts(ex1):
    eps = 0.05
    far = regularized_jacobian(ex1, SAT, eps, [1.0, 0.5])
    np.testing.assert_array_equal(far.matrix, ex1.jacobian("plus", [1.0, 0.5]))
    assert far.gamma == 0.0
    mid = regularized_jacobian(ex1, SAT, eps, [1.0, 0.0])
    assert (mid.alpha, mid.beta, mid.gamma) == (0.5, 0.5, 1 / (2 * eps))


@pytest.mark.parametrize("name", ["ex1", "ex2", "ex3", "ex4"])
@pytest.mark.parametrize("phi", [SAT, CUBIC])
def test_regularized_jacobian_matches_finite_differences(name, phi):
    sys = as_filippov(build(name))
    rng = np.random.default_rng(17)
    eps, h = 0.1, 1e-6
    for _ in range(100):
        x = np.array([rng.uniform(-3, 3), rng.uniform(-0.95, 0.95) * eps])
        J = regularized_jacobian(sys, phi, eps, x)
        assert J.alpha + J.beta == 1.0
        assert 0 <= J.alpha <= 1 and 0 <= J.beta <= 1 and J.gamma >= 0
        fd = np.empty((2, 2))
        for j in range(2):
            e = np.zeros(2)
            e[j] = h
            fd[:, j] = (regularized_field(sys, phi, eps, x + e) - regularized_field(sys, phi, eps, x - e)) / (2 * h)
        scale = max(1.0, np.max(np.abs(J.matrix)))
        assert np.max(np.abs(J.matrix - fd)) <= 1e-5 * scale


def test_regularized_requires_positive_eps(ex1):
    with pytest.raises(ValueError):
        regularized_field(ex1, SAT, 0.0, [0, 0])
    with pytest.raises(ValueError):
        regularized_jacobian(ex1, SAT, -1.0, [0, 0])


# -- conversions and definition files ---------------------------------------------------------


def test_pwa_conversion_is_lossless(ex3):
    fs = ex3.to_filippov()
    rng = np.random.default_rng(1)
    for _ in range(50):
        x = rng.uniform(-5, 5, 2)
        u = rng.uniform(-6, 6, 1)
        fp, fm = fs.fields(x, u=u)
        np.testing.assert_allclose(fp, ex3.A1 @ x + ex3.b1 + ex3.B @ u, rtol=1e-15, atol=1e-14)
        np.testing.assert_allclose(fm, ex3.A2 @ x + ex3.b2 + ex3.B @ u, rtol=1e-15, atol=1e-14)
        assert fs.switching(x) == ex3.h @ x
        np.testing.assert_array_equal(fs.jacobian("plus", x), ex3.A1)
        np.testing.assert_array_equal(fs.jacobian("minus", x), ex3.A2)


def test_relay_conversion(ex4):
    p = ex4.to_pwa()
    np.testing.assert_array_equal(p.b1, -ex4.b)
    np.testing.assert_array_equal(p.b2, ex4.b)
    fs = ex4.to_filippov()
    x = np.array([0.5, 1.0])
    fp, fm = fs.fields(x)
    np.testing.assert_allclose(fp, ex4.A @ x - ex4.b)
    np.testing.assert_allclose(fm, ex4.A @ x + ex4.b)


def test_model_errors_name_the_field():
    with pytest.raises(ModelError, match="f_minus"):
        FilippovSystem(["x1", "x2"], ["x1"], "x1")
    with pytest.raises(ModelError, match="'h'"):
        PWASystem(np.eye(2), np.eye(2), [0, 0], [0, 0], [0, 0])
    with pytest.raises(ModelError, match="'c'"):
        RelaySystem(np.eye(2), [1, 1], [0, 0])
    with pytest.raises(ModelError, match="A2"):
        PWASystem(np.eye(2), np.eye(3), [0, 0], [0, 0], [0, 1])
    with pytest.raises(ModelError, match="B"):
        FilippovSystem(["x1"], ["x1"], "x1", m=1, B=[[1.0, 2.0]])
    with pytest.raises(ModelError, match="input"):
        FilippovSystem(["x1"], ["x1"], "x1", m=1, B=[[1.0]], input=["x1"])
    with pytest.raises(ModelError):
        FilippovSystem(["x3"], ["x1"], "x1")
    with pytest.raises(ModelError, match="f_plus"):
        system_from_dict({"f_minus": ["x1"], "H": "x1"})
    with pytest.raises(ModelError, match="type"):
        system_from_dict({"type": "spline"})


def test_inputs_enter_both_modes(ex3):
    forced = ex3.with_input(["6*sin(2*pi*t)"]).to_filippov()
    u = forced.u_at(0.25)
    assert u[0] == pytest.approx(6.0)
    fp, fm = forced.fields([1.0, 1.0], t=0.25)
    fp0, fm0 = ex3.to_filippov().fields([1.0, 1.0], u=[0.0])
    np.testing.assert_allclose(fp - fp0, [0, 6.0])
    np.testing.assert_allclose(fm - fm0, [0, 6.0])
    np.testing.assert_allclose(forced.delta_f([1.0, 1.0], t=0.25), fp0 - fm0)


@pytest.mark.parametrize("name", sorted(EXAMPLES))
def test_builtin_definitions_round_trip(name, tmp_path):
    sys = build(name)
    path = tmp_path / f"{name}.json"
    path.write_text(json.dumps(sys.to_dict()))
    again = load_system(path)
    assert again.to_dict() == sys.to_dict()
    a, b = as_filippov(sys), as_filippov(again)
    rng = np.random.default_rng(0)
    for _ in range(20):
        x = rng.uniform(-3, 3, a.n)
        for fa, fb in zip(a.fields(x), b.fields(x)):
            np.testing.assert_array_equal(fa, fb)


def test_filippov_definition_round_trip_via_render(ex2, tmp_path):
    d = ex2.to_dict()
    assert d["f_plus"] == [render(e) for e in ex2.f_plus]
    again = system_from_dict(d)
    x = [0.3, -0.7]
    np.testing.assert_array_equal(again.fields(x)[0], ex2.fields(x)[0])


def test_load_system_errors(tmp_path):
    with pytest.raises(ModelError, match="cannot read"):
        load_system(tmp_path / "missing.json")
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ModelError, match="not valid JSON"):
        load_system(bad)
