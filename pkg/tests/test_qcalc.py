"""Free Schrodinger flow, q-expectations and the Feynman-Kac cross-check."""

import cmath
import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from gexpect.errors import DimensionError, DomainError, UnsupportedError
from gexpect.qcalc import (
    Potential,
    QConvention,
    WaveGrid,
    feynman_kac_pathsum,
    free_propagate,
    gaussian_packet_solution,
    observed_order,
    q_expect,
    qbm_fdd_expect,
    split_step_solve,
)
from gexpect.testfunctions import build

GAUSS = lambda x: np.exp(-np.asarray(x) ** 2 / 2)


def kernel_oracle(phi, x, t, sign=1):
    """Direct convolution with exp(i s (x-y)^2 / 2t) / sqrt(2 pi i s t) by adaptive quadrature."""
    pref = 1 / cmath.sqrt(2j * math.pi * sign * t)
    f = lambda y, part: part(pref * cmath.exp(1j * sign * (x - y) ** 2 / (2 * t)) * phi(y))
    re = integrate.quad(f, -14, 14, args=(lambda z: z.real,), limit=400, epsabs=1e-13)[0]
    im = integrate.quad(f, -14, 14, args=(lambda z: z.imag,), limit=400, epsabs=1e-13)[0]
    return complex(re, im)


class TestWaveGrid:
    def test_power_of_two(self):
        with pytest.raises(DomainError):
            WaveGrid(-1.0, 1.0, 100)
        with pytest.raises(DomainError):
            WaveGrid(-1.0, 1.0, 32)

    def test_centred_has_node(self):
        g = WaveGrid.centred(10.0, 128, centre=2.0)
        assert g.x[64] == pytest.approx(2.0)

    def test_csv_and_sidecar(self, tmp_path):
        g = WaveGrid.centred(5.0, 64).sample(lambda x: np.exp(1j * x))
        g = free_propagate(g, 0.5, "paper-moment")
        g.write(tmp_path / "w.csv", tmp_path / "w.json")
        lines = (tmp_path / "w.csv").read_text().splitlines()
        assert lines[0] == "x,re,im" and len(lines) == 65
        meta = json.loads((tmp_path / "w.json").read_text())
        assert meta["convention"] == "paper-moment" and meta["nx"] == 64

    def test_finite(self):
        with pytest.raises(DomainError):
            WaveGrid(-1.0, 1.0, 64, np.full(64, np.nan))


class TestFreePropagate:
    @pytest.mark.parametrize("conv, sign", [("pde-canonical", 1), ("paper-moment", -1)])
    @pytest.mark.parametrize("x, t", [(0.0, 1.0), (0.7, 0.5), (-1.3, 2.0)])
    def test_closed_form_against_kernel(self, conv, sign, x, t):
        assert gaussian_packet_solution(x, t, conv=conv) == pytest.approx(kernel_oracle(GAUSS, x, t, sign), abs=1e-9)

    def test_gaussian_packet(self):
        g = WaveGrid.centred(20.0, 1024).sample(GAUSS)
        w = free_propagate(g, 1.0)
        assert np.abs(w.values - gaussian_packet_solution(g.x, 1.0)).max() < 1e-6

    def test_small_time_identity(self):
        g = WaveGrid.centred(20.0, 512).sample(GAUSS)
        w = free_propagate(g, 1e-14)
        assert np.abs(w.values - g.values).max() < 1e-12

    def test_semigroup_and_unitarity(self):
        g = WaveGrid.centred(20.0, 1024).sample(lambda x: GAUSS(x - 1) * np.exp(2j * x))
        a = free_propagate(free_propagate(g, 0.3), 0.7)
        b = free_propagate(g, 1.0)
        assert np.abs(a.values - b.values).max() < 1e-10
        assert abs(b.l2_norm() - g.l2_norm()) < 1e-12

    def test_conventions_conjugate(self):
        g = WaveGrid.centred(20.0, 512).sample(GAUSS)
        a = free_propagate(g, 0.8, QConvention.PDE_CANONICAL).values
        b = free_propagate(g, 0.8, QConvention.PAPER_MOMENT).values
        assert np.abs(a - np.conj(b)).max() < 1e-13

    def test_positive_time(self):
        with pytest.raises(DomainError):
            free_propagate(WaveGrid.centred(5.0, 64), 0.0)

    def test_unknown_convention(self):
        with pytest.raises(DomainError):
            free_propagate(WaveGrid.centred(5.0, 64), 1.0, "physics")


class TestQExpect:
    def test_second_moment(self):
        assert q_expect(lambda x: x**2).value == pytest.approx(1j, abs=1e-7)

    def test_second_moment_paper_convention(self):
        assert q_expect(lambda x: x**2, conv="paper-moment").value == pytest.approx(-1j, abs=1e-7)

    def test_mean(self):
        assert abs(q_expect(lambda x: x).value) < 1e-7

    def test_constant(self):
        est = q_expect(lambda x: np.full_like(x, 3.0))
        assert est.value == pytest.approx(3.0, abs=max(1e-8, est.error))

    def test_fourth_moment(self):
        # (i)^2 * 3 by analytic continuation of the normal moments
        assert q_expect(lambda x: x**4).value == pytest.approx(-3.0, abs=1e-5)

    def test_shifted(self):
        est = q_expect(lambda y: y**2, x=1.5, t=2.0)
        assert est.value == pytest.approx(2.25 + 2j, abs=1e-6)

    def test_decaying_matches_kernel(self):
        phi = build({"name": "gaussian", "width": 0.8})
        est = q_expect(phi, x=0.4, t=0.9)
        assert est.value == pytest.approx(kernel_oracle(phi, 0.4, 0.9), abs=1e-9)

    def test_aliasing_error(self):
        with pytest.raises(DomainError):
            q_expect(lambda x: np.exp(-np.abs(x) / 20), decaying=True)

    def test_linearity(self, rng):
        f = lambda x: GAUSS(x - 0.5)
        g = lambda x: np.exp(-x**2 / 3) * np.cos(x)
        a, b = complex(*rng.normal(size=2)), complex(*rng.normal(size=2))
        lhs = q_expect(lambda x: a * f(x) + b * g(x), decaying=True).value
        rhs = a * q_expect(f, decaying=True).value + b * q_expect(g, decaying=True).value
        assert abs(lhs - rhs) < 1e-13


class TestQbm:
    def test_one_time(self):
        for tau in (0.5, 2.0):
            est = qbm_fdd_expect(lambda x: x**2, (tau,))
            assert est.value == pytest.approx(1j * tau, abs=max(1e-6, est.error))

    def test_increment_mean(self):
        assert abs(qbm_fdd_expect(lambda a, b: b - a, (1.0, 2.0)).value) < 1e-6

    def test_product(self):
        assert qbm_fdd_expect(lambda a, b: a * b, (1.0, 2.0)).value == pytest.approx(1j, abs=1e-5)

    def test_paper_convention(self):
        v = qbm_fdd_expect(lambda a, b: a * b, (1.0, 2.0), conv="paper-moment").value
        assert v == pytest.approx(-1j, abs=1e-5)

    def test_three_times(self):
        est = qbm_fdd_expect(lambda a, b, c: a * c, (1.0, 2.0, 3.0))
        assert est.value == pytest.approx(1j, abs=max(1e-3, est.error))

    @settings(max_examples=10)
    @given(st.floats(0.5, 1.2), st.floats(0.5, 1.2))
    def test_stability(self, a, b):
        # a X + b X' has the law of sqrt(a^2 + b^2) X; phi(x2) does not decay in x1,
        # so the damped path is used
        phi = lambda y: np.exp(-((y - 0.3) ** 2))
        two = qbm_fdd_expect(lambda x1, x2: phi(x2), (a * a, a * a + b * b))
        one = q_expect(phi, t=a * a + b * b, decaying=True).value
        assert abs(two.value - one) < max(1e-8, two.error)

    def test_stationary_increments(self):
        phi = lambda y: np.exp(-(y**2)) * (1 + y)
        ref = q_expect(phi, t=1.0, decaying=True).value
        for s in (0.5, 1.5):
            inc = qbm_fdd_expect(lambda x1, x2: phi(x2 - x1), (s, s + 1.0))
            assert abs(inc.value - ref) < max(1e-6, inc.error)

    def test_structure_below_damping_scale_is_resolved(self):
        # narrow features force a finer spacing than the damping window alone needs
        phi = lambda y: np.cos(6 * y)
        est = q_expect(phi, t=0.5)
        assert est.value == pytest.approx(cmath.exp(-1j * 36 * 0.5 / 2), abs=max(1e-8, est.error))

    def test_unresolvable_raises(self):
        with pytest.raises(UnsupportedError):
            qbm_fdd_expect(lambda a, b, c: np.cos(8 * a) * b * c, (1.0, 2.0, 3.0))

    def test_limits(self):
        with pytest.raises(UnsupportedError):
            qbm_fdd_expect(lambda *x: x[0], (1, 2, 3, 4))
        with pytest.raises(DomainError):
            qbm_fdd_expect(lambda a, b: a, (2.0, 1.0))
        with pytest.raises(DimensionError):
            qbm_fdd_expect(build({"name": "abs"}), (1.0, 2.0))


class TestPotentials:
    def test_catalogue(self):
        x = np.array([-3.0, 0.0, 3.0])
        np.testing.assert_allclose(Potential({"name": "harmonic", "coefficient": -0.1})(x), [-0.9, 0.0, -0.9])
        np.testing.assert_allclose(Potential({"name": "gaussian-well", "depth": 0.5})(x)[1], -0.5)
        pl = Potential({"name": "piecewise-linear", "breakpoints": [0, 1], "values": [1, 2]})
        np.testing.assert_allclose(pl(x), [1.0, 1.0, 2.0])

    def test_rejects(self):
        with pytest.raises(DomainError):
            Potential({"name": "coulomb"})
        with pytest.raises(DomainError):
            Potential({"name": "harmonic", "depth": 1})


class TestSolvers:
    grid = WaveGrid.centred(20.0, 1024)

    def test_zero_potential(self):
        free = free_propagate(self.grid.sample(GAUSS), 0.5).values
        for steps in (1, 7):
            assert np.abs(split_step_solve(GAUSS, Potential({"name": "zero"}), 0.5, steps).values - free).max() < 1e-10
            assert np.abs(feynman_kac_pathsum(GAUSS, Potential({"name": "zero"}), 0.5, steps).values - free).max() < 1e-10

    def test_constant_potential(self):
        free = free_propagate(self.grid.sample(GAUSS), 0.5).values
        w = split_step_solve(GAUSS, Potential({"name": "constant", "value": 0.3}), 0.5, 3).values
        assert np.abs(w - free * math.exp(0.15)).max() < 1e-12

    def orders(self, v):
        ref = split_step_solve(GAUSS, v, 0.5, 4096).values
        ss = [np.abs(split_step_solve(GAUSS, v, 0.5, s).values - ref).max() for s in (16, 32, 64, 128)]
        fk = [np.abs(feynman_kac_pathsum(GAUSS, v, 0.5, s).values - ref).max() for s in (32, 64, 128, 256)]
        return observed_order(ss), observed_order(fk)

    @pytest.mark.parametrize("spec", [{"name": "harmonic", "coefficient": -0.1}, {"name": "gaussian-well", "depth": 0.5}])
    def test_orders(self, spec):
        p_ss, p_fk = self.orders(Potential(spec))
        assert p_ss == pytest.approx(2.0, abs=0.3)
        assert p_fk == pytest.approx(1.0, abs=0.2)

    def test_norm_growth_follows_real_generator(self):
        # with V <= 0 the +V w term can only dissipate
        v = Potential({"name": "gaussian-well", "depth": 0.5})
        g = self.grid.sample(GAUSS)
        w = split_step_solve(g, v, 0.5, 256)
        assert w.l2_norm() < g.l2_norm()
        w2 = split_step_solve(g, Potential({"name": "constant", "value": -0.2}), 0.5, 1)
        assert w2.l2_norm() == pytest.approx(g.l2_norm() * math.exp(-0.1), rel=1e-12)

    def test_steps_positive(self):
        with pytest.raises(DomainError):
            split_step_solve(GAUSS, Potential({"name": "zero"}), 0.5, 0)
        with pytest.raises(DomainError):
            feynman_kac_pathsum(GAUSS, Potential({"name": "zero"}), 0.5, 0)
