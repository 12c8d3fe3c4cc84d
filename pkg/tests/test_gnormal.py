"""G-normal expectations and closed-form oracles."""

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate

from gexpect.errors import DomainError, UnsupportedError
from gexpect.gfunction import CovarianceSet, GFunction, SigmaInterval
from gexpect.gheat import SolverConfig
from gexpect.gnormal import (
    GNormal,
    concave_closed_form,
    convex_closed_form,
    gauss_hermite_expect,
    gnormal_expect,
    verify_linear_image,
    verify_stability,
)
from gexpect.testfunctions import build

SIG = SigmaInterval(0.25, 1.0)
GN = GNormal(SIG)
FAST = SolverConfig(dx=0.04)
SQ2PI = math.sqrt(2 / math.pi)


def quad_normal(phi, std):
    """Independent oracle: adaptive quadrature against the N(0, std^2) density."""
    f = lambda x: float(phi(np.array([x]))[0]) * math.exp(-x * x / (2 * std * std)) / (std * math.sqrt(2 * math.pi))
    pts = getattr(phi, "kinks", ()) or None
    val, _ = integrate.quad(f, -14 * std, 14 * std, points=pts, limit=200, epsabs=1e-13, epsrel=1e-12)
    return val


class TestGaussHermite:
    @pytest.mark.parametrize("p, moment", [(2, 1.0), (4, 3.0), (6, 15.0), (8, 105.0)])
    def test_even_moments(self, p, moment):
        assert gauss_hermite_expect(lambda x: x**p, 1.0) == pytest.approx(moment, rel=1e-13)

    @pytest.mark.parametrize(
        "spec",
        [{"name": "abs"}, {"name": "call", "strike": 0.3}, {"name": "put", "strike": -0.5},
         {"name": "capped-abs", "cap": 0.7}, {"name": "sin", "frequency": 1.3}],
    )
    @pytest.mark.parametrize("std", [0.5, 1.0, 2.0])
    def test_against_adaptive_quadrature(self, spec, std):
        phi = build(spec)
        assert gauss_hermite_expect(phi, std) == pytest.approx(quad_normal(phi, std), abs=1e-10)

    def test_single_rule_is_poor_across_a_kink(self):
        # the reason kinks are split out
        plain = gauss_hermite_expect(np.abs, 1.0, kinks=())
        assert abs(plain - SQ2PI) > 1e-3
        assert gauss_hermite_expect(np.abs, 1.0, kinks=(0.0,)) == pytest.approx(SQ2PI, abs=1e-12)

    def test_degenerate(self):
        assert gauss_hermite_expect(lambda x: x + 2.0, 0.0) == 2.0


class TestClosedForms:
    def test_convex_square(self):
        assert convex_closed_form(lambda x: x**2, SIG) == pytest.approx(1.0, rel=1e-13)

    def test_convex_abs(self):
        assert convex_closed_form(build({"name": "abs"}), SigmaInterval(0.25, 4.0)) == pytest.approx(2 * SQ2PI, rel=1e-12)

    def test_convex_call(self):
        assert convex_closed_form(build({"name": "call"}), SIG) == pytest.approx(1 / math.sqrt(2 * math.pi), rel=1e-12)

    def test_concave_square(self):
        assert concave_closed_form(lambda x: -(x**2), SIG) == pytest.approx(-0.25, rel=1e-13)

    def test_concave_abs(self):
        assert concave_closed_form(-build({"name": "abs"}), SIG) == pytest.approx(-0.5 * SQ2PI, rel=1e-12)

    @given(st.floats(-5, 5), st.floats(-5, 5))
    def test_affine(self, a, b):
        f = lambda x: a * x + b
        assert convex_closed_form(f, SIG) == pytest.approx(b, abs=1e-12 * (1 + abs(a) + abs(b)))
        assert concave_closed_form(f, SIG) == pytest.approx(b, abs=1e-12 * (1 + abs(a) + abs(b)))

    def test_convexity_check_fails_loudly(self):
        with pytest.raises(DomainError):
            convex_closed_form(np.sin, SIG)
        with pytest.raises(DomainError):
            concave_closed_form(lambda x: x**2, SIG)


class TestGnormalExpect:
    def test_mean_zero(self):
        est = gnormal_expect(GN, lambda x: x, FAST)
        assert abs(est.best) < 1e-10
        assert abs(gnormal_expect(GN, lambda x: -x, FAST).best) < 1e-10

    def test_fourth_moment(self):
        est = gnormal_expect(GN, lambda x: x**4, SolverConfig(dx=0.02, domain_radius_multiplier=8))
        assert est.best == pytest.approx(3.0, rel=1e-3)

    def test_concave_abs(self):
        est = gnormal_expect(GN, lambda x: -np.abs(x), FAST)
        assert est.best == pytest.approx(-0.5 * SQ2PI, abs=1e-3)

    def test_error_estimate_is_honest(self):
        est = gnormal_expect(GN, np.abs, FAST)
        assert abs(est.value - SQ2PI) <= est.error * 1.5 + 1e-12
        assert est.extrapolated is not None and est.report is not None

    def test_truncation_term(self):
        # radius multiplier 4 clips the x^4 tail; the error must say so
        est = gnormal_expect(GN, lambda x: x**4, FAST.replace(domain_radius_multiplier=4))
        assert est.truncation > 0
        assert abs(est.value - 3.0) <= est.error

    def test_time_scaling(self):
        est = gnormal_expect(GN, lambda x: x**2, FAST.replace(t_final=2.0))
        assert est.best == pytest.approx(2.0, rel=1e-3)

    def test_single_level(self):
        est = gnormal_expect(GN, lambda x: x**2, FAST, levels=1)
        assert math.isnan(est.error)

    def test_symmetry(self):
        for phi in (lambda x: np.maximum(x - 0.3, 0), lambda x: np.minimum(np.abs(x - 0.2), 1.0)):
            a = gnormal_expect(GN, phi, FAST).best
            b = gnormal_expect(GN, lambda x: phi(-x), FAST).best
            assert a == pytest.approx(b, abs=2e-4)

    def test_upper_dominates_lower(self, rng):
        for _ in range(3):
            c = rng.normal(size=3)
            phi = lambda x: c[0] * np.sin(x) + c[1] * np.abs(x - 0.5) + c[2] * np.minimum(x, 0.2)
            up = gnormal_expect(GN, phi, FAST, levels=1).value
            low = -gnormal_expect(GN, lambda x: -phi(x), FAST, levels=1).value
            assert up >= low - 1e-12

    def test_classical_self_conjugate(self):
        gn = GNormal(SigmaInterval(1.0, 1.0))
        phi = lambda x: np.sin(x) + np.abs(x)
        up = gnormal_expect(gn, phi, FAST).best
        low = -gnormal_expect(gn, lambda x: -phi(x), FAST).best
        assert up == pytest.approx(low, abs=1e-10)

    def test_matches_convex_closed_form(self):
        phi = build({"name": "call", "strike": 0.4})
        est = gnormal_expect(GN, phi, FAST)
        assert est.best == pytest.approx(convex_closed_form(phi, SIG), abs=max(2 * est.error, 1e-4))

    def test_two_dimensional(self):
        gn = GNormal(CovarianceSet(2, [0.25 * np.eye(2), np.eye(2)]))
        est = gnormal_expect(gn, lambda x, y: x**2 + y**2, SolverConfig(dx=0.1), levels=1)
        assert est.value == pytest.approx(2.0, rel=2e-3)

    def test_dimension_limit(self):
        with pytest.raises(UnsupportedError):
            GNormal(CovarianceSet(3, [np.eye(3)]))

    def test_rejects_indefinite(self):
        with pytest.raises(DomainError):
            GNormal(GFunction(CovarianceSet.unchecked(1, [[[-1.0]]])))


class TestStability:
    @pytest.mark.parametrize("a, b", [(1, 0), (1, 1), (3, 4), (0, 2)])
    @pytest.mark.parametrize("phi", [lambda x: x**2, np.abs], ids=["square", "abs"])
    def test_residual(self, a, b, phi):
        r = verify_stability(GN, a, b, phi, FAST)
        assert r.residual < 5e-3 * max(1.0, abs(r.rhs))

    def test_values(self):
        r = verify_stability(GN, 1, 1, lambda x: x**2, FAST)
        assert r.lhs == pytest.approx(2.0, rel=2e-3) and r.rhs == pytest.approx(2.0, rel=2e-3)
        r = verify_stability(GN, 3, 4, np.abs, FAST)
        assert r.rhs == pytest.approx(5 * SQ2PI, rel=1e-2)

    def test_negative_coefficients(self):
        with pytest.raises(DomainError):
            verify_stability(GN, -1, 1, np.abs, FAST)


class TestLinearImage:
    def test_identity(self):
        r = verify_linear_image(GN, [[1.0]], np.abs, FAST)
        assert r.residual < 1e-12

    @pytest.mark.parametrize("c", [0.5, 2.0])
    def test_scaling(self, c):
        r = verify_linear_image(GN, [[c]], lambda x: x**2, FAST)
        assert r.lhs == pytest.approx(c * c, rel=5e-3) and r.rhs == pytest.approx(c * c, rel=5e-3)

    def test_sum_of_coordinates(self):
        gn = GNormal(CovarianceSet(2, [np.diag([0.25, 0.5]), np.diag([1.0, 0.5])]))
        r = verify_linear_image(gn, [[1.0, 1.0]], lambda x: x**2, SolverConfig(dx=0.05))
        # the image is the interval [0.75, 1.5]; x^2 is convex
        assert r.rhs == pytest.approx(1.5, rel=2e-3)
        assert r.residual < 5e-3

    def test_too_large(self):
        with pytest.raises(UnsupportedError):
            verify_linear_image(GN, [[1.0], [2.0], [3.0]], lambda x, y, z: x, FAST)
