"""G-functions, variance intervals and second-moment families."""

import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from gexpect.errors import DimensionError, DomainError
from gexpect.gfunction import (
    CovarianceSet,
    GFamily,
    GFunction,
    SigmaInterval,
    check_g_axioms,
    g_eval,
    gbm_second_moment,
    validate_consistency,
)
from gexpect.gheat import SolverConfig
from gexpect.process import FDDSpec, gbm_fdd_expect
from gexpect.testfunctions import build

SIG = SigmaInterval(0.25, 1.0)


def random_set(rng, d, k):
    mats = []
    for _ in range(k):
        a = rng.normal(size=(d, d))
        mats.append(a @ a.T)
    return CovarianceSet(d, mats)


class TestTypes:
    def test_interval_order(self):
        with pytest.raises(DomainError):
            SigmaInterval(1.0, 0.5)
        with pytest.raises(DomainError):
            SigmaInterval(-0.1, 0.5)

    def test_interval_json(self):
        doc = json.loads(SIG.to_json())
        assert doc == {"sigma_lo_sq": 0.25, "sigma_hi_sq": 1.0}
        assert SigmaInterval.from_json(SIG.to_json()) == SIG

    def test_covariance_json(self):
        cs = CovarianceSet(2, [np.eye(2), np.diag([2.0, 0.5])])
        doc = json.loads(cs.to_json())
        assert set(doc) == {"dim", "matrices"} and doc["dim"] == 2
        back = CovarianceSet.from_json(cs.to_json())
        np.testing.assert_array_equal(back.matrices, cs.matrices)

    def test_rejects_indefinite(self):
        with pytest.raises(DomainError):
            CovarianceSet(2, [np.diag([1.0, -0.1])])

    def test_rejects_asymmetric(self):
        with pytest.raises(DomainError):
            CovarianceSet(2, [[[1.0, 0.1], [0.0, 1.0]]])

    def test_admits_rounding_noise(self):
        CovarianceSet(2, [np.diag([1.0, -1e-12])])

    def test_rejects_empty(self):
        with pytest.raises(DimensionError):
            CovarianceSet(1, [])


class TestEval:
    @given(st.floats(-100, 100), st.floats(0, 3), st.floats(0, 3))
    def test_scalar_closed_form(self, alpha, lo, extra):
        s = SigmaInterval(lo, lo + extra)
        g = GFunction.from_sigma(s)
        expected = 0.5 * (max(alpha, 0) * s.sigma_hi_sq - max(-alpha, 0) * s.sigma_lo_sq)
        assert g_eval(g, [[alpha]]) == pytest.approx(expected, abs=1e-12 * (1 + abs(alpha)))

    def test_singleton_is_trace(self, rng):
        q = random_set(rng, 3, 1)
        a = rng.normal(size=(3, 3))
        a = a + a.T
        assert g_eval(GFunction(q), a) == pytest.approx(0.5 * np.trace(a @ q.matrices[0]))

    def test_zero(self, rng):
        assert g_eval(GFunction(random_set(rng, 2, 3)), np.zeros((2, 2))) == 0

    def test_asymmetric_argument(self):
        with pytest.raises(DomainError):
            g_eval(GFunction(CovarianceSet(2, [np.eye(2)])), [[0, 1], [0, 0]])

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionError):
            g_eval(GFunction.from_sigma(SIG), np.eye(2))

    def test_convex_combination(self, rng):
        g = GFunction(random_set(rng, 3, 4))
        for _ in range(100):
            a, b = (lambda m: m + m.T)(rng.normal(size=(3, 3))), (lambda m: m + m.T)(rng.normal(size=(3, 3)))
            lam = rng.random()
            assert g(lam * a + (1 - lam) * b) <= lam * g(a) + (1 - lam) * g(b) + 1e-12

    def test_image(self, rng):
        g = GFunction(random_set(rng, 2, 3))
        amap = rng.normal(size=(1, 2))
        img = g.image(amap)
        b = np.array([[1.7]])
        assert img(b) == pytest.approx(g(amap.T @ b @ amap))


class TestAxioms:
    def test_valid_sets_pass(self, rng):
        for d in (1, 2, 3):
            rep = check_g_axioms(GFunction(random_set(rng, d, 3)), trials=200, rng=rng)
            assert rep.ok, rep.worst_slack
            assert min(rep.worst_slack.values()) >= -1e-10

    def test_indefinite_member_breaks_monotonicity(self, rng):
        mats = [np.eye(2), np.diag([1.0, -0.5])]
        rep = check_g_axioms(GFunction(CovarianceSet.unchecked(2, mats)), trials=20, rng=rng)
        assert not rep.passed("monotonicity")
        assert rep.passed("subadditivity") and rep.passed("homogeneity")
        high, low = rep.witnesses["monotonicity"]
        assert np.linalg.eigvalsh(high - low).min() >= -1e-12

    def test_factor_two(self, rng):
        g = GFunction(random_set(rng, 2, 3))
        for _ in range(50):
            a = (lambda m: m + m.T)(rng.normal(size=(2, 2)))
            assert g(2 * a) == pytest.approx(2 * g(a), rel=1e-12, abs=1e-14)

    def test_callable_input(self, rng):
        rep = check_g_axioms(lambda a: 0.5 * np.trace(a), trials=10, rng=rng, dim=2)
        assert rep.ok

    def test_trials_positive(self):
        with pytest.raises(DomainError):
            check_g_axioms(GFunction.from_sigma(SIG), trials=0)


class TestGbmSecondMoment:
    @pytest.mark.parametrize("t1", [0.3, 1.0, 2.5])
    def test_single_time(self, t1):
        assert gbm_second_moment(SIG, (t1,))([[1.0]]) == pytest.approx(0.5 * t1)

    def test_classical_identity(self):
        g = gbm_second_moment(SigmaInterval(1.0, 1.0), (1.0, 2.0))
        assert g(np.eye(2)) == pytest.approx(1.5)

    @pytest.mark.parametrize("lo", [0.0, 0.25, 1.0])
    def test_cross_product(self, lo):
        g = gbm_second_moment(SigmaInterval(lo, 1.0), (1.0, 2.0))
        assert g([[0, 0.5], [0.5, 0]]) == pytest.approx(0.5)

    def test_unsorted(self):
        with pytest.raises(DomainError):
            gbm_second_moment(SIG, (2.0, 1.0))

    def test_corner_set_matches_reduction(self, rng):
        g = gbm_second_moment(SIG, (0.5, 1.0, 2.0))
        gf = g.gfunction()
        for _ in range(50):
            a = (lambda m: m + m.T)(rng.normal(size=(3, 3)))
            assert gf(a) == pytest.approx(g(a), abs=1e-12)

    @pytest.mark.parametrize(
        "a",
        [np.eye(2), np.array([[1.0, -1.0], [-1.0, 1.0]]), np.array([[-1.0, 0.3], [0.3, 0.5]])],
    )
    def test_against_pde(self, a):
        # 1/2 E[<A B, B>] through the nested Barenblatt solve
        g = gbm_second_moment(SIG, (1.0, 2.0))
        phi = build({"name": "quadratic-form", "matrix": (0.5 * a).tolist()})
        est = gbm_fdd_expect(FDDSpec((1.0, 2.0), phi), SIG, SolverConfig(dx=0.05))
        assert est.best == pytest.approx(g(a), abs=max(5e-3, 3 * est.error))


class TestConsistency:
    def test_gbm_family(self):
        fam = GFamily.from_gbm(SIG, (1.0, 2.0, 3.0))
        rep = validate_consistency(fam)
        assert rep.consistent and rep.checked > 0

    def test_perturbed_entry_located(self):
        fam = GFamily.from_gbm(SIG, (1.0, 2.0, 3.0))
        base = fam[(1.0, 3.0)]
        fam[(1.0, 3.0)] = lambda a: base(a) + 1e-3 * a[0, 0]
        rep = validate_consistency(fam)
        assert not rep.consistent
        # every violation involves the edited tuple, either stored or as a projection
        assert all(set(v.other) == {1.0, 3.0} or v.times == (1.0, 3.0) for v in rep.violations)

    def test_singleton(self):
        fam = GFamily({(1.0,): gbm_second_moment(SIG, (1.0,))})
        rep = validate_consistency(fam)
        assert rep.consistent and rep.checked == 0

    def test_keys_must_increase(self):
        with pytest.raises(DomainError):
            GFamily({(2.0, 1.0): gbm_second_moment(SIG, (1.0, 2.0))})
