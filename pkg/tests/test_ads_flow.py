"""
Tests for the closed-form AdS geodesic flow and the freely streamed field.
"""

import math

import numpy as np
import pytest
from numpy.testing import assert_allclose
from scipy.integrate import dblquad, solve_ivp

from src.errors import DomainError, ReflectionTimeError
from src.services.ads_flow import (
    FreeVlasovField,
    free_vlasov_T,
    geodesic_from_state,
    geodesic_momentum,
    geodesic_position,
    geodesic_radius,
    make_geodesic,
    small_l_asymptote,
)


class TestMakeGeodesic:
    """Test the geodesic record."""

    def test_turning_radius(self, cosmo):
        """Test r_min for l/E = 0.1 at k = 1."""
        g = make_geodesic(1.0, 1.0, 0.1, 1, cosmo)
        assert g.r_min == pytest.approx(0.1005038, abs=1e-7)
        assert math.tan(g.rho_min) == pytest.approx(g.r_min)
        assert g.rho_min_leading_order == pytest.approx(g.rho_min, rel=1e-2)

    def test_radial_ray(self, cosmo):
        g = make_geodesic(0.5, 2.0, 0.0, -1, cosmo)
        assert g.r_min == 0.0
        assert g.rho_min == 0.0

    def test_starts_on_initial_line(self, cosmo):
        """Test U = 0 and V = v0 at tau = v0."""
        g = make_geodesic(1.0, 1.0, 0.3, 1, cosmo)
        u, v = geodesic_position(g, 1.0)
        assert u == pytest.approx(0.0, abs=1e-12)
        assert v == pytest.approx(1.0)

    def test_invalid_inputs(self, cosmo):
        with pytest.raises(DomainError):
            make_geodesic(4.0, 1.0, 0.0, 1, cosmo)
        with pytest.raises(DomainError):
            make_geodesic(1.0, 1.0, 1.5, 1, cosmo)
        with pytest.raises(DomainError):
            make_geodesic(0.1, 1.0, 0.5, 1, cosmo)


class TestFlow:
    """Test conservation laws, reflections and periodicity."""

    def test_energy_and_mass_shell(self, cosmo):
        """Test G^u + G^v = 2E and G^u G^v sin^2 rho = l^2 along the flow."""
        g = make_geodesic(1.0, 1.5, 0.3, -1, cosmo)
        tau = np.linspace(1.05, g.tau_infinity - 0.05, 25)
        g_u, g_v = geodesic_momentum(g, tau)
        rho = np.arctan(geodesic_radius(g, tau))
        assert_allclose(g_u + g_v, 3.0)
        assert_allclose(g_u * g_v * np.sin(rho) ** 2, 0.09, rtol=1e-10)

    def test_outgoing_sign(self, cosmo):
        g = make_geodesic(1.0, 1.0, 0.3, 1, cosmo)
        g_u, g_v = geodesic_momentum(g, 1.0)
        assert g_v > g_u

    def test_radius_matches_ode(self, cosmo):
        """Test the closed form against rho'' = s^2 cos rho / (4 sin^3 rho) through a turning point."""
        g = make_geodesic(1.0, 1.0, 0.3, -1, cosmo)
        g_u, g_v = geodesic_momentum(g, g.v0)
        s = g.l / g.E

        def rhs(tau, y):
            return [y[1], s * s * math.cos(y[0]) / (4.0 * math.sin(y[0]) ** 3)]

        tau_end = g.v0 + 0.9 * (g.tau_infinity - g.v0)
        taus = np.linspace(g.v0, tau_end, 12)
        sol = solve_ivp(rhs, (g.v0, tau_end), [0.5 * g.v0, (g_v - g_u) / (4.0 * g.E)], t_eval=taus,
                        rtol=1e-11, atol=1e-13)
        assert sol.success
        assert_allclose(np.arctan(geodesic_radius(g, taus)), sol.y[0], atol=1e-7)

    def test_reflection_needs_side(self, cosmo):
        """Test that momenta at a reflection off infinity are one-sided."""
        g = make_geodesic(1.0, 1.0, 0.3, 1, cosmo)
        with pytest.raises(ReflectionTimeError):
            geodesic_momentum(g, g.tau_infinity)
        before = geodesic_momentum(g, g.tau_infinity, side="before")
        after = geodesic_momentum(g, g.tau_infinity, side="after")
        assert before[1] > before[0]
        assert after[0] == pytest.approx(before[1])
        assert after[1] == pytest.approx(before[0])

    def test_stays_inside_slab(self, cosmo):
        g = make_geodesic(0.7, 1.0, 0.2, 1, cosmo)
        u, v = geodesic_position(g, np.linspace(0.7, 12.0, 200))
        assert np.all(v - u <= math.pi + 1e-12)
        assert np.all(np.diff(u) >= -1e-12)

    def test_periodicity(self, cosmo):
        """Test (U, V)(tau + 2 k pi) = (U, V)(tau) + (k pi, k pi)."""
        g = make_geodesic(1.0, 1.0, 0.4, 1, cosmo)
        tau = np.linspace(1.0, 5.0, 9)
        u0, v0 = geodesic_position(g, tau)
        u1, v1 = geodesic_position(g, tau + 2 * math.pi)
        assert_allclose(u1, u0 + math.pi, atol=1e-12)
        assert_allclose(v1, v0 + math.pi, atol=1e-12)

    def test_rebuilt_from_state(self, cosmo):
        """Test that a geodesic rebuilt from one of its phase-space points traces the same curve."""
        g = make_geodesic(1.0, 1.0, 0.3, -1, cosmo)
        tau = 2.2
        u, v = geodesic_position(g, tau)
        g_u, g_v = geodesic_momentum(g, tau)
        rebuilt = geodesic_from_state(u, v, g_u, g_v, g.l, cosmo)
        later = np.linspace(tau, tau + 3.0, 7)
        assert_allclose(geodesic_position(rebuilt, later), geodesic_position(g, later), atol=1e-10)

    def test_small_l_hyperbola(self, cosmo):
        """Test the hyperbola near the turning point of a nearly radial ray."""
        g = make_geodesic(1.0, 1.0, 1e-3, -1, cosmo)
        tau_vertex = g.v0 + 2 * g.omega0
        for d in (-0.01, 0.0, 0.01):
            exact = geodesic_position(g, tau_vertex + d)
            approx = small_l_asymptote(g, tau_vertex + d)
            assert approx == pytest.approx(exact, abs=1e-6)


class TestFreeVlasovField:
    """Test the freely streamed stress."""

    def test_trivial_profile(self, cosmo, small_settings, bump_profile):
        assert free_vlasov_T(bump_profile.scaled(0.0), (0.2, 1.0), cosmo, small_settings) == (0.0, 0.0, 0.0)

    def test_point_outside_slab(self, cosmo, small_settings, bump_profile):
        field = FreeVlasovField(bump_profile, cosmo, small_settings)
        with pytest.raises(DomainError):
            field.stress(0.0, 4.0)

    def test_zero_off_support(self, cosmo, small_settings, bump_profile):
        """Test that the initial line carries no stress outside the v support."""
        assert free_vlasov_T(bump_profile, (0.0, 0.5), cosmo, small_settings) == (0.0, 0.0, 0.0)

    def test_energy_condition(self, cosmo, small_settings, bump_profile):
        """Test nonnegative components with T_uv^2 <= T_uu T_vv."""
        t_uu, t_uv, t_vv = free_vlasov_T(bump_profile, (0.0, math.pi / 2), cosmo, small_settings)
        assert t_vv > 0.0 and t_uv > 0.0 and t_uu > 0.0
        assert t_uv ** 2 <= t_uu * t_vv * (1 + 1e-12)

    def test_matches_direct_quadrature(self, cosmo, small_settings, bump_profile):
        """Test the stress on the initial line against adaptive quadrature in (p, l)."""
        settings = small_settings.model_copy(update={"quadrature_orders": (32, 32, 64)})
        t_uu, t_uv, t_vv = free_vlasov_T(bump_profile, (0.0, math.pi / 2), cosmo, settings)

        c2 = math.cos(math.pi / 4) ** 2
        box = bump_profile.support_box()

        def moment(power):
            def integrand(p, l):
                a = l * l / math.sin(math.pi / 4) ** 2
                g_u = p / c2
                g_v = a / g_u
                return float(bump_profile.evaluate(math.pi / 2, p, l)) * g_u ** (2 - power) * g_v ** power * l / p

            value, _ = dblquad(integrand, box.l_min, box.l_max, box.p_min, box.p_max, epsabs=1e-13, epsrel=1e-11)
            return 0.5 * math.pi * value

        assert t_vv == pytest.approx(moment(0), rel=1e-6)
        assert t_uv == pytest.approx(moment(1), rel=1e-6)
        assert t_uu == pytest.approx(moment(2), rel=1e-6)

    def test_periodic_in_time(self, cosmo, small_settings, bump_profile):
        """Test T(u + k pi, v + k pi) = T(u, v) for the free flow."""
        field = FreeVlasovField(bump_profile, cosmo, small_settings)
        first = field.stress(0.3, 0.3 + math.pi / 2)
        second = field.stress(0.3 + math.pi, 0.3 + 1.5 * math.pi)
        assert_allclose(second, first, rtol=1e-8, atol=1e-14)
