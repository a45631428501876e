"""Constitutive relation tests. Expected values were computed once with
40-digit arithmetic from the closed-form definitions and frozen here."""

import numpy as np
import pytest

from poroimex import constitutive as con

SILT = con.VanGenuchtenParams(theta_r=0.03, theta_s=0.45, beta=0.01, n_theta=1.6, eta=0.5)


def make_fluid(k_s=1e-11, n_cells=1):
    return con.FluidSolidParams(
        rho_w=1000.0,
        rho_s=2650.0,
        g_scalar=-9.8,
        g_vec=(0.0, -9.8),
        phi=0.45,
        alpha=0.9,
        C_w=4.4e-10,
        C_s=1e-11,
        mu_w=1e-3,
        k_s=np.full(n_cells, k_s),
    )


def make_elast(n_cells=1, E_d=3e6, r_E=2.0):
    E_d = np.full(n_cells, E_d)
    return con.ElasticityParams(nu=0.37, zeta_E=1.5, E_d=E_d, E_w=E_d / r_E)


class TestParams:
    def test_m_theta_exact(self):
        assert SILT.m_theta == 1.0 - 1.0 / 1.6

    def test_validation(self):
        with pytest.raises(ValueError):
            con.VanGenuchtenParams(0.5, 0.45, 0.01, 1.6)
        with pytest.raises(ValueError):
            con.VanGenuchtenParams(0.03, 0.45, 0.01, 0.9)
        with pytest.raises(ValueError):
            con.ElasticityParams(nu=0.6, zeta_E=1.5, E_d=[3e6], E_w=[1.5e6])
        with pytest.raises(ValueError):
            con.ElasticityParams(nu=0.37, zeta_E=1.5, E_d=[1e6], E_w=[2e6])


class TestHeadAndRetention:
    def test_pressure_to_head_anchor(self):
        # 9800 Pa with rho_w = 1000, g = -9.8 is exactly -100 cm
        h = con.pressure_to_head(9800.0, make_fluid())
        assert h == pytest.approx(-100.0, rel=1e-14)

    def test_water_content_silt_anchor(self):
        theta, _ = con.water_content(-100.0, SILT)
        assert theta == pytest.approx(0.353864273336, rel=1e-10)

    def test_saturated_branch(self):
        theta, dtheta = con.water_content(np.array([0.0, 5.0, 100.0]), SILT)
        assert theta == pytest.approx([0.45, 0.45, 0.45])
        assert dtheta == pytest.approx([0.0, 0.0, 0.0])

    def test_effective_saturation_anchor(self):
        theta, _ = con.water_content(-100.0, SILT)
        se = con.effective_saturation(theta, SILT)
        assert se == pytest.approx(0.771105412704, rel=1e-10)

    def test_effective_saturation_clamped(self):
        assert con.effective_saturation(0.01, SILT) == 0.0
        assert con.effective_saturation(0.99, SILT) == 1.0

    def test_dtheta_dh_analytic_anchor(self):
        _, dtheta = con.water_content(-100.0, SILT)
        assert dtheta == pytest.approx(9.71592820007e-4, rel=1e-10)

    def test_dtheta_dh_matches_fd(self):
        hs = -np.logspace(0.5, 4.0, 25)  # cm, away from the h = 0 kink
        for h in hs:
            _, dtheta = con.water_content(h, SILT)
            step = max(1e-6 * abs(h), 1e-6)
            tp, _ = con.water_content(h + step, SILT)
            tm, _ = con.water_content(h - step, SILT)
            fd = (tp - tm) / (2 * step)
            assert dtheta == pytest.approx(fd, rel=1e-6)

    def test_monotone_wetter_toward_zero(self):
        hs = -np.linspace(1.0, 5000.0, 200)
        theta, _ = con.water_content(hs, SILT)
        assert np.all(np.diff(theta) < 0)  # drier as h grows more negative


class TestConductivityAndModuli:
    def test_k_rw_anchor(self):
        assert con.relative_conductivity(0.771105412704, SILT) == pytest.approx(
            0.0460074244635, rel=1e-9
        )

    def test_k_rw_limits(self):
        assert con.relative_conductivity(0.0, SILT) == 0.0
        assert con.relative_conductivity(1.0, SILT) == pytest.approx(1.0)

    def test_k_rw_monotone(self):
        se = np.linspace(0.0, 1.0, 200)
        k = con.relative_conductivity(se, SILT)
        assert np.all(np.diff(k) >= 0)

    def test_young_anchor(self):
        elast = make_elast()
        E, lam, mu = con.young_and_lame(0.771105412704, elast)
        assert E[0] == pytest.approx(1984308.3398, rel=1e-9)
        nu = 0.37
        assert lam[0] == pytest.approx(E[0] * nu / ((1 + nu) * (1 - 2 * nu)), rel=1e-14)
        assert mu[0] == pytest.approx(E[0] / (2 * (1 + nu)), rel=1e-14)

    def test_young_endpoints(self):
        elast = make_elast()
        E0, _, _ = con.young_and_lame(0.0, elast)
        E1, _, _ = con.young_and_lame(1.0, elast)
        assert E0[0] == pytest.approx(3e6)
        assert E1[0] == pytest.approx(1.5e6)


class TestStorageAndMobility:
    def test_saturation_derivative_matches_fd(self):
        fluid = make_fluid()
        for p in np.linspace(1e3, 7e5, 23):
            _, dS = con.saturation_and_derivative(p, SILT, fluid)
            Sp, _ = con.saturation_and_derivative(p + 1.0, SILT, fluid)
            Sm, _ = con.saturation_and_derivative(p - 1.0, SILT, fluid)
            fd = (Sp - Sm) / 2.0
            assert dS == pytest.approx(fd, rel=1e-6)

    def test_saturated_storage(self):
        fluid = make_fluid()
        c, _, S = con.storage_and_mobility(-500.0, SILT, fluid)
        # saturated branch: S = 1, S' = 0, c = (phi C_w + (alpha - phi) C_s)
        assert S == pytest.approx(1.0)
        assert c == pytest.approx(2.025e-10, rel=1e-10)

    def test_storage_positive_over_experiment_range(self):
        fluid = make_fluid()
        c, kappa, S = con.storage_and_mobility(np.linspace(202860, 602700, 64), SILT, fluid)
        assert np.all(c > 0)
        assert np.all(kappa > 0)
        assert np.all((S > 0) & (S < 1))

    def test_mobility_uses_cell_ks(self):
        fluid = make_fluid(n_cells=3)
        fluid.k_s[1] = 5e-11
        _, kappa, _ = con.storage_and_mobility(
            np.full(3, 4e5), SILT, fluid, cells=np.arange(3)
        )
        assert kappa[1] == pytest.approx(5.0 * kappa[0])


class TestCoefficientBounds:
    def test_bounds_dominate_dense_sampling(self):
        fluid = make_fluid(n_cells=4)
        elast = make_elast(n_cells=4)
        b = con.coefficient_bounds(SILT, elast, fluid, 202860.0, 602700.0, n_samples=64)
        ps = np.linspace(202860.0, 602700.0, 10000)
        c, _, S = con.storage_and_mobility(ps, SILT, fluid, cells=np.zeros(len(ps), int))
        slack = 1.005  # 64-point max vs dense max within half a percent
        assert b.c_bar[0] * slack >= c.max()
        assert b.S_bar[0] * slack >= S.max()
        theta = S * fluid.phi
        se = con.effective_saturation(theta, SILT)
        krw = con.relative_conductivity(se, SILT)
        assert b.kappa_bar[0] * slack >= (fluid.k_s[0] * krw / fluid.mu_w).max()
        E, lam, mu = con.young_and_lame(se, elast, cells=np.zeros(len(ps), int))
        assert b.lam_bar[0] * slack >= lam.max()
        assert b.mu_bar[0] * slack >= mu.max()

    def test_kappa_bar_is_wettest_endpoint(self):
        # kappa is monotone in S_e, so the bound equals kappa at p_min
        fluid = make_fluid(n_cells=2)
        elast = make_elast(n_cells=2)
        b = con.coefficient_bounds(SILT, elast, fluid, 202860.0, 602700.0)
        _, kappa_pmin, _ = con.storage_and_mobility(202860.0, SILT, fluid, cells=np.array([0, 1]))
        assert b.kappa_bar == pytest.approx(kappa_pmin, rel=1e-12)

    def test_degenerate_interval(self):
        fluid = make_fluid()
        elast = make_elast()
        b = con.coefficient_bounds(SILT, elast, fluid, 4e5, 4e5, n_samples=2)
        c, kappa, S = con.storage_and_mobility(np.array([4e5]), SILT, fluid, cells=np.array([0]))
        assert b.c_bar[0] == pytest.approx(c[0], rel=1e-14)
        assert b.kappa_bar[0] == pytest.approx(kappa[0], rel=1e-14)

    def test_constant_coefficients_give_constant_bounds(self):
        # saturated interval: everything pressure-independent
        fluid = make_fluid(n_cells=3)
        elast = make_elast(n_cells=3)
        b = con.coefficient_bounds(SILT, elast, fluid, -300.0, -100.0)
        assert b.S_bar == pytest.approx(np.ones(3))
        assert b.c_bar[0] == pytest.approx(2.025e-10, rel=1e-10)

    def test_needs_two_samples(self):
        with pytest.raises(ValueError):
            con.coefficient_bounds(SILT, make_elast(), make_fluid(), 0.0, 1.0, n_samples=1)

    def test_seeded_property_bounds_hold_at_random_pressures(self):
        rng = np.random.default_rng(42)
        fluid = make_fluid(n_cells=5)
        elast = make_elast(n_cells=5)
        for _ in range(20):
            lo = rng.uniform(1e3, 5e5)
            hi = lo + rng.uniform(1e3, 3e5)
            b = con.coefficient_bounds(SILT, elast, fluid, lo, hi, n_samples=96)
            ps = rng.uniform(lo, hi, size=50)
            cells = rng.integers(0, 5, size=50)
            c, kappa, S = con.storage_and_mobility(ps, SILT, fluid, cells=cells)
            assert np.all(c <= b.c_bar[cells] * 1.01)
            assert np.all(kappa <= b.kappa_bar[cells] * 1.01)
            assert np.all(S <= b.S_bar[cells] * 1.0000001)
