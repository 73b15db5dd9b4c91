import numpy as np
import pytest

from filippov_contraction.certify import (
    CertificationError,
    Domain,
    EmptyRegionError,
    certify,
    certify_filippov,
    certify_pwa,
    certify_relay,
    check_jump_condition,
    check_mode_contraction,
    check_pavlov,
    planar_no_limit_cycle,
    rank1_zero_condition,
    sample_sigma,
    search_metric,
)
from filippov_contraction.measures import Metric, MetricError, matrix_measure, rank1_measure
from filippov_contraction.system import FilippovSystem, ModelError, PWASystem, RelaySystem, TransitionFunction

L1, L2, LINF = Metric("l1"), Metric("l2"), Metric("linf")
BOX = Domain([-5, -5], [5, 5])


# -- domain -----------------------------------------------------------------------------


def test_domain_parse_and_validation():
    d = Domain.parse("-5:5,-1.125:1.125", samples=11, seed=3)
    assert d.n == 2 and d.samples == 11 and d.seed == 3
    np.testing.assert_array_equal(d.lower, [-5, -1.125])
    for bad in ("1:0", "a:b", "1:2:3"):
        with pytest.raises(CertificationError):
            Domain.parse(bad)
    with pytest.raises(CertificationError):
        Domain([0], [1], samples=2)


def test_domain_jitter_is_small_deterministic_and_keeps_faces():
    d = Domain([-1, -1], [1, 1], samples=5, seed=7)
    p1, p2, lat = d.points(), d.points(), d.lattice()
    np.testing.assert_array_equal(p1, p2)
    cell = 0.5
    assert np.max(np.abs(p1 - lat)) <= 1e-7 * cell
    on_face = (lat == -1) | (lat == 1)
    np.testing.assert_array_equal(p1[on_face], lat[on_face])
    assert np.any(p1[~on_face] != lat[~on_face])
    assert not np.array_equal(Domain([-1, -1], [1, 1], 5, seed=8).points(), p1)


def test_seed_from_environment(monkeypatch):
    monkeypatch.setenv("FILIPPOV_SEED", "42")
    assert Domain([0], [1]).seed == 42
    monkeypatch.setenv("FILIPPOV_SEED", "x")
    with pytest.raises(CertificationError):
        Domain([0], [1])


def test_sigma_sampling_on_a_circle():
    pts = sample_sigma(lambda x: x[0] ** 2 + x[1] ** 2 - 1.0, Domain([-2, -2], [2, 2], samples=21))
    r = np.hypot(pts[:, 0], pts[:, 1])
    assert len(pts) > 20
    assert np.max(np.abs(r**2 - 1)) <= 1e-12


# -- mode and jump conditions on the worked examples -----------------------------------------


def test_example1_mode_conditions(ex1):
    plus = check_mode_contraction(ex1, "plus", L1, BOX)
    minus = check_mode_contraction(ex1, "minus", L1, BOX)
    assert plus.value == -4.0 and plus.rate == 4.0 and plus.passed
    assert minus.value == -4.0 and minus.passed


def test_example2_mode_conditions(ex2):
    ok = check_mode_contraction(ex2, "plus", L1, Domain([-5, -9 / 8], [5, 9 / 8]))
    assert ok.value == pytest.approx(-0.5, abs=1e-15) and ok.passed
    bad = check_mode_contraction(ex2, "plus", L1, Domain([-5, -3], [5, 3]))
    assert not bad.passed and bad.value > 0
    assert abs(bad.witness[1]) >= 9 / 4


def test_jump_condition_examples(ex1):
    r = check_jump_condition(ex1, L1, BOX)
    assert r.value == 0.0 and r.passed and r.samples > 0
    assert all(abs(w) <= 1e-12 for w in [r.witness[1]])
    assert check_jump_condition(ex1, L2, BOX).value == 0.0


def test_jump_condition_continuous_system():
    sys = FilippovSystem(["-x1 + x2^2", "-2*x2"], ["-x1 + x2^2 + x2", "-2*x2 + 3*x2"], "x2")
    for m in (L1, L2, LINF):
        assert check_jump_condition(sys, m, BOX).value == 0.0


def test_empty_regions_raise(ex1):
    with pytest.raises(EmptyRegionError):
        check_jump_condition(ex1, L1, Domain([-1, 1], [1, 2]))
    with pytest.raises(EmptyRegionError):
        check_mode_contraction(ex1, "minus", L1, Domain([-1, 1], [1, 2]))
    cert = certify_filippov(ex1, L1, Domain([-1, 1], [1, 2]))
    assert cert.verdict == "inconclusive"


def test_certify_examples_1_and_2(ex1, ex2):
    c1 = certify_filippov(ex1, L1, BOX)
    assert c1.verdict == "certified" and c1.c == 4.0 and c1.K == 1.0
    c2 = certify_filippov(ex2, L1, Domain([-5, -9 / 8], [5, 9 / 8]))
    assert c2.verdict == "certified" and c2.c == pytest.approx(0.5, abs=1e-15)
    c3 = certify_filippov(ex2, L1, Domain([-5, -3], [5, 3]))
    assert c3.verdict == "refuted-at-witness"


def test_negated_minus_field_is_refuted_at_the_jump():
    # f_minus -> -f_minus: on x2 = 0 the jump is [-8*x1, 0], off the normal direction
    sys = FilippovSystem(["-4*x1", "-9*x2 - x2^2 - 18"], ["4*x1", "9*x2 - x2^2 - 18"], "x2")
    cert = certify_filippov(sys, L1, BOX)
    jump = cert.condition("jump")
    assert cert.verdict == "refuted-at-witness" and not jump.passed
    # the witness reproduces the violation
    w = np.array(jump.witness)
    assert rank1_measure(sys.delta_f(w), sys.gradient_H(w), L1) == jump.value > 1e-9
    assert jump.value == 40.0 and abs(w[0]) == 5.0


def test_refutation_witnesses_reproduce(ex2):
    cert = certify_filippov(ex2, L1, Domain([-5, -3], [5, 3]))
    for cond in cert.conditions:
        if cond.passed is False:
            mode = cond.name.split("_")[1]
            assert matrix_measure(ex2.jacobian(mode, cond.witness), L1) == cond.value


def test_nested_grids_are_monotone(ex2):
    # 11 samples per axis is a subset of 21 and of 41 on the same box
    vals = []
    for n in (11, 21, 41):
        vals.append(check_mode_contraction(ex2, "plus", L1, Domain([-5, -2], [5, 2], samples=n)).value)
    assert vals[1] >= vals[0] - 1e-12 and vals[2] >= vals[1] - 1e-12


def test_witness_tie_break_is_lexicographic(ex1):
    r = check_mode_contraction(ex1, "plus", L1, BOX)
    # mu = -4 on the whole plus region: the smallest point wins
    assert r.witness[0] == -5.0


# -- PWA and relay -----------------------------------------------------------------------------


def test_certify_pwa_example3(ex3):
    cert = certify_pwa(ex3, L1, BOX)
    assert cert.condition("mu_A1").value == -1.0
    assert cert.condition("mu_A2").value == -1.0
    assert cert.condition("jump_A").value == 0.0
    assert cert.condition("jump_b").value == 0.0
    assert cert.verdict == "certified" and cert.c == 1.0


def test_certify_pwa_without_box_uses_rank_one_structure(ex3):
    cert = certify_pwa(ex3, L1)
    assert cert.verdict == "certified"


def test_certify_pwa_continuous_linear():
    A = np.array([[-1.0, 0.5], [-0.5, -2.0]])
    p = PWASystem(A, A, [0.3, 0.1], [0.3, 0.1], [1.0, 1.0])
    assert matrix_measure(A, L2) < 0
    assert certify_pwa(p, L2, BOX).verdict == "certified"


def test_pwa_b_variants(ex3):
    # b1 -> -b1 gives db = [-1, -1]: mu1(db h^T) = max(0, -1 + 1) = 0, still certified
    flipped = PWASystem(ex3.A1, ex3.A2, -ex3.b1, ex3.b2, ex3.h, ex3.B)
    assert certify_pwa(flipped, L1, BOX).condition("jump_b").value == 0.0
    # db = [-7, -1]: the off-normal component dominates and the condition fails
    bad = PWASystem(ex3.A1, ex3.A2, ex3.b2 + np.array([-7.0, -1.0]), ex3.b2, ex3.h, ex3.B)
    cert = certify_pwa(bad, L1, BOX)
    assert cert.condition("jump_b").value == 6.0 and cert.verdict == "refuted-at-witness"


def test_pwa_and_filippov_agree(ex3):
    a = certify_pwa(ex3, L1, BOX)
    b = certify_filippov(ex3.to_filippov(), L1, BOX)
    assert a.verdict == b.verdict
    assert abs(a.c1 - b.c1) <= 1e-9 and abs(a.c2 - b.c2) <= 1e-9


def test_certify_relay_example4(ex4):
    cert = certify_relay(ex4, L1)
    assert cert.condition("mu_A").value == -1.0
    assert cert.condition("jump_b").value == 0.0
    assert cert.verdict == "certified" and cert.c == 1.0
    l2 = certify_relay(ex4, L2)
    assert l2.condition("jump_b").value == pytest.approx((-3 + np.sqrt(10)) / 2, abs=1e-12)
    assert l2.verdict == "refuted-at-witness"


def test_relay_with_zero_b():
    A = np.array([[-2.0, 0.5], [0.0, -1.0]])
    r = RelaySystem(A, [0.0, 0.0], [1.0, 0.0])
    cert = certify_relay(r, L1)
    assert cert.condition("jump_b").value == 0.0
    assert cert.certified == (matrix_measure(A, L1) < 0)


def test_certify_dispatch(ex1, ex3, ex4):
    assert certify(ex4, L1).kind == "relay"
    assert certify(ex3, L1, BOX).kind == "pwa"
    assert certify(ex1, L1, BOX).kind == "filippov"
    with pytest.raises(CertificationError):
        certify(ex1, L1)


# -- rank-one structural test ------------------------------------------------------------------


def test_rank1_zero_condition_cases():
    assert rank1_zero_condition([-5, 1, 1], [1, 0, 0], L1).holds
    assert not rank1_zero_condition([-1, 1, 1], [1, 0, 0], L1).holds
    assert rank1_zero_condition([-3, 0], [1, 0], LINF).holds
    assert not rank1_zero_condition([-3, 0.1], [1, 0], LINF).holds
    v = rank1_zero_condition([1, 0], [1, 0], L2)
    assert not v.holds and v.p_exists is False
    w = rank1_zero_condition([-1, 0.5], [1, 0], L2)
    assert not w.holds and w.p_exists is True
    assert rank1_zero_condition([0, 0], [1, 0], L1).holds


def test_rank1_zero_condition_agrees_with_closed_form():
    rng = np.random.default_rng(4)
    for fam in ("l1", "linf"):
        for _ in range(200):
            n = 3
            d = np.exp(rng.uniform(-1, 1, n))
            m = Metric.diagonal(fam, d)
            k = int(rng.integers(0, n))
            g = np.zeros(n)
            g[k] = rng.choice([-1.0, 1.0]) * rng.uniform(0.5, 2)
            df = rng.standard_normal(n)
            if rng.random() < 0.5:
                df[k] = -np.sign(g[k]) * (np.abs(df).sum() * 3)
            if fam == "linf" and rng.random() < 0.5:
                df = np.where(np.arange(n) == k, df, 0.0)
            v = rank1_zero_condition(df, g, m)
            assert v.holds == (rank1_measure(df, g, m) <= 1e-9)


# -- Pavlov and planar remark ---------------------------------------------------------------------


def test_pavlov_constructed_case():
    h = np.array([1.0, 0.0])
    p = PWASystem(-np.eye(2), -np.eye(2), -h, [0.0, 0.0], h)
    rep = check_pavlov(p, np.eye(2), 1)
    assert rep.lmi_A1 and rep.lmi_A2 and rep.rank_one_dA and rep.jump_b and rep.holds
    rep0 = check_pavlov(p, np.eye(2), 0)
    assert not rep0.jump_b


def test_pavlov_example3(ex3):
    rep = check_pavlov(ex3, np.eye(2), 1)
    assert rep.rank_one_dA
    np.testing.assert_array_equal(rep.g, [0.0, 1.0])
    assert not rep.jump_b
    with pytest.raises(MetricError):
        check_pavlov(ex3, -np.eye(2), 1)
    with pytest.raises(ValueError):
        check_pavlov(ex3, np.eye(2), 2)


def test_planar_no_limit_cycle(ex4):
    r = planar_no_limit_cycle(ex4)
    assert r.holds and r.trace == -5.0 and r.cb == 3.0
    assert not planar_no_limit_cycle(RelaySystem(-np.eye(2), [0, 1], [0, -1]))
    assert not planar_no_limit_cycle(RelaySystem([[1.0, 0], [0, -1.0]], [0, 1], [0, 1]))
    with pytest.raises(ModelError):
        planar_no_limit_cycle(RelaySystem(-np.eye(3), [0, 0, 1], [0, 0, 1]))


def test_planar_divergence_is_negative_on_a_grid(ex4):
    # independent check of the claim: numeric divergence of f_eps with sat
    from filippov_contraction.system import as_filippov, regularized_field

    fs = as_filippov(ex4)
    sat = TransitionFunction("sat")
    h = 1e-7
    for eps in (1.0, 1e-2):
        for x in np.random.default_rng(0).uniform(-2, 2, size=(50, 2)):
            x[1] *= eps
            div = 0.0
            for j in range(2):
                e = np.zeros(2)
                e[j] = h
                div += (regularized_field(fs, sat, eps, x + e)[j] - regularized_field(fs, sat, eps, x - e)[j]) / (2 * h)
            assert div < 0


# -- metric search ---------------------------------------------------------------------------------


def test_search_finds_identity_for_example3(ex3):
    res = search_metric(ex3, "l1-diag", BOX)
    assert res.found and res.evaluations == 1
    np.testing.assert_array_equal(res.metric.weight, [1.0, 1.0])
    assert res.certificate.certified


def test_search_short_circuits_for_l2_relay():
    r = RelaySystem([[-2.0, -1.0], [1.0, -3.0]], [1.0, -3.0], [0.0, 1.0])
    res = search_metric(r, "l2-factor")
    assert not res.found and "no Euclidean weight" in res.reason


def test_search_scalar_case():
    s = FilippovSystem(["-x1 - 1"], ["-x1 + 1"], "x1")
    res = search_metric(s, "l1-diag", Domain([-2], [2]))
    assert res.found
    for d in (0.1, 1.0, 7.0):
        assert certify_filippov(s, Metric.diagonal("l1", [d]), Domain([-2], [2])).certified


def test_search_finds_nontrivial_weight():
    # mu1(A) > 0 with D = I, but a diagonal rescaling makes A diagonally dominant by columns
    A = np.array([[-1.0, 4.0], [0.1, -1.0]])
    r = RelaySystem(A, [0.0, 1.0], [0.0, 1.0])
    assert not certify_relay(r, L1).certified
    res = search_metric(r, "l1-diag", budget=500)
    assert res.found and res.certificate.certified
    assert not np.allclose(res.metric.weight, 1.0)


def test_search_l2_for_relay_example(ex4):
    res = search_metric(ex4, "l2-factor", budget=400)
    assert res.found
    assert certify_relay(ex4, res.metric).certified


def test_search_budget_validation(ex4):
    with pytest.raises(ValueError):
        search_metric(ex4, "l1", budget=0)
    with pytest.raises(MetricError):
        search_metric(ex4, "l7")


def test_certificate_serialization(ex1):
    d = certify_filippov(ex1, L1, BOX).to_dict()
    assert d["verdict"] == "certified" and d["rates"]["c"] == 4.0
    assert {c["name"] for c in d["conditions"]} == {"mode_plus", "mode_minus", "jump"}
    assert d["domain"]["samples_per_axis"] == 41
