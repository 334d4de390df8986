import math

import numpy as np
import pytest

from kahred import einstein as K
from kahred import expr as E
from kahred import potential as P
from kahred import reduction as R
from kahred.calculus import Point
from kahred.errors import NotEinstein, NotKahler

CP2 = P.from_expression("log(1 + t1 + abs2(w1))", 1, 1)
DIAG = P.diagonal_trivialization()


def rand_points(n, m, k=20, seed=0):
    rng = np.random.default_rng(seed)
    return [Point(tuple(rng.uniform(-2, 2, n)), tuple(rng.uniform(-1.5, 1.5, 2 * m))) for _ in range(k)]


def base_grid(k=5):
    v = np.linspace(-1, 1, k)
    return [complex(a, b) for a in v for b in v]


def test_ke_residual_examples():
    assert K.ke_residual(P.flat(2), 0.0, rand_points(2, 0)) <= 1e-14
    assert K.ke_residual(P.fubini_study(1), 2.0, rand_points(1, 0, 100)) <= 1e-8
    assert K.ke_residual(P.fubini_study(2), 3.0, rand_points(2, 0, 100)) <= 1e-8
    assert K.ke_residual(CP2, 3.0, rand_points(1, 1, 50)) <= 1e-8


def test_ke_residual_detects_wrong_constant():
    assert K.ke_residual(P.fubini_study(1), 1.0, rand_points(1, 0)) > 1e-3


def test_ke_residual_not_kahler():
    with pytest.raises(NotKahler):
        K.ke_residual(P.InvariantPotential(1, 0, E.s(1)), 0.0, [Point((0.0,))])


def test_extract_a_examples():
    assert K.extract_a(DIAG, 0.0, rand_points(1, 1)).value == pytest.approx([1.0], abs=1e-14)
    rep = K.extract_a(P.fubini_study(1), 2.0, rand_points(1, 0))
    assert abs(rep.value[0]) < 1e-14 and rep.max_deviation <= 1e-8
    assert K.extract_a(P.flat(1), 0.0, rand_points(1, 0)).value == pytest.approx([0.0], abs=1e-15)


def test_extract_a_rejects_non_einstein():
    with pytest.raises(NotEinstein):
        K.extract_a(P.fubini_study(1), 1.0, rand_points(1, 0))


def test_divergence_examples():
    rep = K.divergence_identity_check(P.flat(3), 0.0, rand_points(3, 0))
    np.testing.assert_allclose(rep.c_div, -1.0, atol=1e-15)
    rep = K.divergence_identity_check(DIAG, 0.0, rand_points(1, 1))
    np.testing.assert_allclose(rep.c_div, 0.0, atol=1e-14)
    np.testing.assert_allclose(rep.minus_a_plus_one, -2.0, atol=1e-14)
    rep = K.divergence_identity_check(P.fubini_study(1), 2.0, rand_points(1, 0))
    np.testing.assert_allclose(rep.c_div, -1.0, atol=1e-14)
    assert rep.max_deviation <= 1e-8


def test_divergence_against_independent_formula():
    # div Z = Z h + 1 for FS CP^1: 2t/(1+t) + 1 via generator_divergence
    pot = P.fubini_study(1)
    for p in rand_points(1, 0, 5):
        t = math.exp(p.s[0])
        rep = K.divergence_identity_check(pot, 2.0, [p])
        assert abs(rep.c_div[0] - (2 * t / (1 + t) - P.generator_divergence(pot, p, 0))) < 1e-13


def test_a_invariant_under_constant_trivialization_change():
    log4 = E.Num(math.log(4.0))
    for pot, kappa in ((DIAG, 0.0), (CP2, 3.0)):
        new = P.change_trivialization(pot, [log4])
        a0 = K.extract_a(pot, kappa, rand_points(1, 1, seed=1)).value
        a1 = K.extract_a(new, kappa, rand_points(1, 1, seed=2)).value
        assert np.max(np.abs(a0 - a1)) <= 1e-10


def scene(pot, lam, kappa):
    prob = R.ReductionProblem(pot, (lam,))
    return K.KEScene.build(prob, kappa, K.level_set_sample(prob, base_grid(3)))


def test_reduced_identity_c2_is_exact():
    sc = scene(DIAG, 0.5, 0.0)
    assert sc.a == pytest.approx([1.0], abs=1e-12)
    rep = K.reduced_ke_identity(sc, base_grid())
    assert rep.residual <= 1e-10
    # c = a - 1 vanishes, so the literal and simplified forms coincide exactly
    assert np.max(np.abs(sc.c_coefficient)) < 1e-12
    assert abs(rep.residual_literal - rep.residual_simple) <= 1e-12


def test_reduced_identity_c2_closed_forms():
    lam = 0.5
    prob = R.ReductionProblem(DIAG, (lam,))
    for w in base_grid(3):
        lj = R.level_set_jets(prob, w)
        om = 1 / (1 + abs(w) ** 2) ** 2
        assert abs(lj.ddbar(lj.h_lambda())[0, 0] - 2 * om) < 1e-12
        assert np.max(np.abs(lj.ddbar(lj.log_veff()))) < 1e-12
        _, (mu1,) = R.dh_decomposition(prob, w)
        assert abs(mu1[0, 0] - om) < 1e-12


@pytest.mark.parametrize("lam", [0.25, 0.5, 0.75])
def test_reduced_identity_lambda_stable(lam):
    for pot, kappa, a_ref in ((DIAG, 0.0, 1.0), (CP2, 3.0, None)):
        sc = scene(pot, lam, kappa)
        assert sc.a_deviation <= 1e-8
        if a_ref is not None:
            assert sc.a[0] == pytest.approx(a_ref, abs=1e-12)
        rep = K.reduced_ke_identity(sc, base_grid())
        assert rep.residual <= 1e-6


def test_a_is_lambda_independent_on_cp2():
    a = [scene(CP2, lam, 3.0).a[0] for lam in (0.25, 0.5, 0.75)]
    assert np.ptp(a) <= 1e-8


def test_literal_form_is_not_satisfied():
    rep = K.reduced_ke_identity(scene(CP2, 0.5, 3.0), base_grid(3))
    assert rep.residual <= 1e-6
    assert rep.residual_literal > 1e-2


def test_product_of_einstein_factors_reduces_to_base_equation():
    pot = P.product(P.fubini_study(1), P.fubini_study(0, 1))
    assert K.ke_residual(pot, 2.0, rand_points(1, 1)) <= 1e-8
    sc = scene(pot, 0.4, 2.0)
    rep = K.reduced_ke_identity(sc, base_grid(3))
    assert rep.residual <= 1e-8
    prob = sc.prob
    for w in base_grid(3):
        psi = R.reduced_metric(prob, w)
        lj = R.level_set_jets(prob, w)
        # the reduced Ricci form is just kappa times the base metric
        assert np.max(np.abs(lj.ddbar(lj.h_lambda()) - 2.0 * psi)) < 1e-10
