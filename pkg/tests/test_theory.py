"""Exact-density module: derivative algebra, normalization, symmetry."""

import math

import numpy as np
import pytest
from scipy import integrate

from scatterlab import theory


GAMMAS = (1.0, 5.39, 27.18, 100.0)


class TestParams:
    def test_paper_values(self):
        p = theory.params_from_gamma(5.39)
        assert p.alpha == pytest.approx(1.3475, abs=1e-12)
        assert p.x == pytest.approx(2.695, abs=1e-12)
        p = theory.params_from_gamma(27.18)
        assert p.alpha == pytest.approx(6.795, abs=1e-12)
        assert p.x == pytest.approx(13.59, abs=1e-12)
        assert p.rho0 == pytest.approx(1.0 / math.pi)
        assert p.width_ratio == pytest.approx(27.18 / (2 * math.pi))

    def test_roundtrip_exact(self):
        for g in GAMMAS:
            assert theory.gamma_from_params(theory.params_from_gamma(g)) == g

    @pytest.mark.parametrize("bad", [0.0, -1.0, float("nan"), float("inf")])
    def test_rejects_nonpositive(self, bad):
        with pytest.raises(ValueError):
            theory.params_from_gamma(bad)

    def test_support_halfwidth(self):
        assert theory.params_from_gamma(5.39).support_halfwidth == pytest.approx(40 / 5.39)
        assert theory.params_from_gamma(27.18).support_halfwidth == 5.0


class TestKernel:
    def test_direct_substitution(self):
        assert theory.kernel(1.0, 0.0) == pytest.approx(math.exp(-1.0), rel=1e-14)
        assert theory.kernel(0.0, 2.0) == pytest.approx(math.exp(-2.0) / 2.0, rel=1e-14)

    def test_symmetric_in_arguments(self):
        for x, c in [(0.3, 1.7), (2.0, 0.1), (5.0, 5.0)]:
            assert theory.kernel(x, c) == theory.kernel(c, x)

    def test_singular_origin(self):
        with pytest.raises(ValueError):
            theory.kernel(0.0, 0.0)
        with pytest.raises(ValueError):
            theory.dx_operator(0.0, 0.0)


def _richardson(fn, x, h0=1e-4):
    """Richardson-extrapolated central first derivative."""
    d1 = (fn(x + h0) - fn(x - h0)) / (2 * h0)
    d2 = (fn(x + h0 / 2) - fn(x - h0 / 2)) / h0
    return (4 * d2 - d1) / 3


def _richardson2(fn, x, h0=1e-3):
    """Richardson-extrapolated central second derivative.

    The step is coarser than for the first derivative: the three-point
    second difference loses ~h^-2 digits to cancellation, and 1e-3 keeps
    the roundoff floor below the 1e-6 comparison tolerance even where
    |f''| << |f|.
    """
    def second(h):
        return (fn(x + h) - 2 * fn(x) + fn(x - h)) / (h * h)
    return (4 * second(h0 / 2) - second(h0)) / 3


FD_GRID = [(x, c) for x in (0.5, 1.0, 2.695, 5.0, 13.59)
           for c in (0.0, 0.1, 1.0, 5.0, 20.0)]


class TestDerivatives:
    @pytest.mark.parametrize("x,c", FD_GRID)
    def test_first_derivative_matches_finite_differences(self, x, c):
        fd = _richardson(lambda xx: theory.kernel(xx, c), x)
        assert theory.kernel_dx(x, c) == pytest.approx(fd, rel=1e-6)

    @pytest.mark.parametrize("x,c", FD_GRID)
    def test_second_derivative_matches_finite_differences(self, x, c):
        fd = _richardson2(lambda xx: theory.kernel(xx, c), x)
        assert theory.kernel_dxx(x, c) == pytest.approx(fd, rel=1e-6)

    @pytest.mark.parametrize("x,c", FD_GRID)
    def test_operator_matches_finite_differences(self, x, c):
        f = theory.kernel(x, c)
        fx = _richardson(lambda xx: theory.kernel(xx, c), x)
        fxx = _richardson2(lambda xx: theory.kernel(xx, c), x)
        composed = math.sinh(x) * (f + fxx) - 2.0 * math.cosh(x) * fx
        assert theory.dx_operator(x, c) == pytest.approx(composed, rel=1e-6)

    def test_even_in_c(self):
        for x, c in [(2.695, 1.3), (13.59, 0.7)]:
            assert theory.dx_operator(x, c) == theory.dx_operator(x, -c)

    def test_large_x_no_overflow(self):
        for x in (13.59, 50.0):
            vals = theory.dx_operator(x, np.array([0.0, 1.0, 10.0, 100.0]))
            assert np.all(np.isfinite(vals))

    def test_large_x_against_high_precision(self):
        mp = pytest.importorskip("mpmath")
        mp.mp.dps = 50

        def exact(x, c):
            xm, cm = mp.mpf(x), mp.mpf(c)
            f = lambda t: mp.exp(-mp.sqrt(t**2 + cm**2)) / mp.sqrt(t**2 + cm**2)
            fx = mp.diff(f, xm)
            fxx = mp.diff(f, xm, 2)
            return float(mp.sinh(xm) * (f(xm) + fxx) - 2 * mp.cosh(xm) * fx)

        for x, c in [(13.59, 0.0), (13.59, 3.0), (50.0, 1.0), (2.695, 0.5)]:
            assert theory.dx_operator(x, c) == pytest.approx(exact(x, c), rel=1e-10)


class TestJointDensity:
    def test_radial_symmetry_exact(self):
        p = theory.params_from_gamma(5.39)
        a = theory.joint_density(0.8, 0.6, p)
        for u1, u2 in [(0.6, 0.8), (-0.8, 0.6), (0.8, -0.6), (-0.6, -0.8), (1.0, 0.0)]:
            if math.hypot(u1, u2) == 1.0:
                assert theory.joint_density(u1, u2, p) == pytest.approx(a, rel=1e-12)
        r = math.hypot(0.8, 0.6)
        assert theory.joint_density(r, 0.0, p) == pytest.approx(a, rel=1e-12)

    def test_origin_closed_form(self):
        # alpha = 1.35, x = 2.70: e^-x [sinh(x)(2/x+2/x^2+2/x^3) + 2cosh(x)(1/x+1/x^2)] a^2/pi
        a, x = 1.35, 2.70
        closed = math.exp(-x) * (
            math.sinh(x) * (2 / x + 2 / x**2 + 2 / x**3)
            + 2 * math.cosh(x) * (1 / x + 1 / x**2)
        ) * a * a / math.pi
        p = theory.TheoryParams(gamma=5.4)
        assert theory.joint_density(0.0, 0.0, p) == pytest.approx(closed, rel=1e-12)

    def test_origin_against_symbolic(self):
        sympy = pytest.importorskip("sympy")
        x, c = sympy.symbols("x c", positive=True)
        g = sympy.sqrt(x * x + c * c)
        f = sympy.exp(-g) / g
        dx = sympy.sinh(x) * (f + sympy.diff(f, x, 2)) - 2 * sympy.cosh(x) * sympy.diff(f, x)
        val = float(dx.subs({x: sympy.Rational(27, 10), c: sympy.Rational(1, 2)}))
        assert theory.dx_operator(2.7, 0.5) == pytest.approx(val, rel=1e-12)

    @pytest.mark.parametrize("gamma", GAMMAS)
    def test_nonnegative(self, gamma):
        p = theory.params_from_gamma(gamma)
        u = np.linspace(-p.support_halfwidth, p.support_halfwidth, 61)
        vals = theory.joint_density(u[:, None], u[None, :], p)
        assert np.all(vals >= -1e-12)

    @pytest.mark.parametrize("gamma", GAMMAS)
    def test_normalization_polar(self, gamma):
        assert abs(theory.joint_norm_residual(theory.params_from_gamma(gamma))) < 1e-6

    def test_tail_envelope_monotone(self):
        # the ratio joint * exp(2 alpha r) saturates once the kernel radius
        # g dominates x^2; beyond that crossover it decreases monotonically,
        # which bounds the tail by C(alpha) * exp(-2 alpha r)
        for gamma in (5.39, 27.18):
            p = theory.params_from_gamma(gamma)
            r_lo = 10.0 / p.alpha
            r_star = (p.x**2 / 4.0 + 25.0) / (2.0 * p.alpha)
            r = np.linspace(r_lo, 3.0 * max(r_lo, r_star), 400)
            ratio = theory.joint_density(r, 0.0, p) * np.exp(2.0 * p.alpha * r)
            assert np.all(np.isfinite(ratio))
            tail = r >= r_star
            assert np.all(np.diff(ratio[tail]) < 0)
            c_env = ratio.max() * 1.001  # sup margin between grid nodes
            r_check = np.linspace(r_lo * 1.01, 2.0 * max(r_lo, r_star), 173)
            assert np.all(theory.joint_density(r_check, 0.0, p)
                          <= c_env * np.exp(-2.0 * p.alpha * r_check) * (1 + 1e-9))


class TestMarginal:
    def test_even(self):
        p = theory.params_from_gamma(5.39)
        u = np.array([0.3, 1.1, 4.0])
        left = theory.marginal_density(-u, p)
        right = theory.marginal_density(u, p)
        np.testing.assert_allclose(left, right, rtol=1e-10)

    @pytest.mark.parametrize("gamma", (5.39, 27.18))
    def test_normalized(self, gamma):
        p = theory.params_from_gamma(gamma)
        umax = (p.x + 50.0) / (2.0 * p.alpha)
        grid = np.unique(np.concatenate([
            np.linspace(0, min(10 * math.sqrt(2 / gamma), umax), 2001),
            np.geomspace(1e-3, umax, 500),
        ]))
        pdf = theory.marginal_curve(grid, p)
        total = 2.0 * integrate.simpson(pdf, x=grid)
        assert abs(total - 1.0) < 1e-6

    def test_curve_agrees_with_adaptive_quadrature(self):
        p = theory.params_from_gamma(5.39)
        us = np.array([0.0, 0.25, 1.0, 2.5, 6.0])
        np.testing.assert_allclose(
            theory.marginal_curve(us, p), theory.marginal_density(us, p), rtol=1e-8
        )

    def test_second_moment_is_two_over_gamma(self):
        # independent closed form: substituting c = 2*alpha*r in the radial
        # moments gives integral c^3 f dc = 2(x+1)e^-x and D_x of it = 4x,
        # hence E r^2 = x / (2 alpha^2) = 1/alpha and var(u) = 2/gamma.
        for gamma in GAMMAS:
            p = theory.params_from_gamma(gamma)
            assert theory.second_moment(p) == pytest.approx(2.0 / gamma, rel=1e-9)

    def test_cdf_properties(self):
        p = theory.params_from_gamma(5.39)
        cdf = theory.marginal_cdf(p)
        assert cdf(0.0) == pytest.approx(0.5, abs=1e-9)
        assert cdf(-1e3) == 0.0
        assert cdf(1e3) == 1.0
        u = np.linspace(-6, 6, 101)
        assert np.all(np.diff(cdf(u)) >= 0)

    def test_mass_matches_quadrature_of_density(self):
        p = theory.params_from_gamma(5.39)
        cdf = theory.marginal_cdf(p)
        val, _ = integrate.quad(lambda u: theory.marginal_density(u, p), -2.0, 1.0,
                                limit=200)
        assert cdf(1.0) - cdf(-2.0) == pytest.approx(val, abs=1e-7)


class TestGaussianBaseline:
    def test_peak_and_mass(self):
        sigma = 0.37
        u = np.linspace(-10, 10, 20001)
        g = theory.gaussian_baseline(u, sigma)
        assert g.max() == pytest.approx(1.0 / (sigma * math.sqrt(2 * math.pi)), rel=1e-10)
        assert integrate.simpson(g, x=u) == pytest.approx(1.0, abs=1e-9)

    def test_rejects_bad_sigma(self):
        with pytest.raises(ValueError):
            theory.gaussian_baseline(0.0, 0.0)

    def test_small_gamma_marginal_far_from_gaussian_at_origin(self):
        p = theory.params_from_gamma(5.4)  # alpha = 1.35
        sigma = theory.matched_sigma(p)
        peak = float(theory.marginal_density(0.0, p))
        gauss = float(theory.gaussian_baseline(0.0, sigma))
        assert abs(peak - gauss) / gauss > 0.05


class TestDensityGrid:
    def test_grid_contents(self):
        p = theory.params_from_gamma(5.39)
        grid = theory.density_grid(p, n_nodes=201, n_joint=41)
        assert grid.support == pytest.approx(40 / 5.39)
        assert len(grid.nodes) == 201 and grid.joint.shape == (41, 41)
        assert abs(grid.norm_residual) < 1e-6
        assert np.all(grid.marginal >= 0) and np.all(grid.joint >= 0)

    def test_inverse_cdf_sampling_matches_cdf(self):
        p = theory.params_from_gamma(5.39)
        rng = np.random.default_rng(1)
        draws = theory.sample_marginal(p, 30_000, rng)
        cdf = theory.marginal_cdf(p)
        f = cdf(np.sort(draws))
        n = len(draws)
        d = np.abs(f - np.arange(1, n + 1) / n).max()
        assert d < 0.01
