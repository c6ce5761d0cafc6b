"""
Tests for metric conventions, masses and gauge maps.
"""

import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from src.errors import DomainError
from src.models.geometry import GaugeMap, MetricSample, RenormalisedSample
from src.services.geometry_core import (
    ads_metric,
    ads_renormalised,
    apply_gauge,
    derenormalize,
    hawking_mass,
    mu_from_ratio,
    renormalize,
    safe_ratio,
    scale_data,
    trapping_ratio,
)


class TestAdsMetric:
    """Test exact AdS values."""

    def test_rescaled_family_value(self, cosmo):
        """Test r = 1 and Omega^2 = 8 at (0, pi/4) on the slab of width pi/2."""
        sample = ads_metric(0.0, math.pi / 4, cosmo, rescaled_to=math.pi / 2)
        assert sample.r == pytest.approx(1.0)
        assert sample.omega_sq == pytest.approx(8.0)

    def test_standard_chart(self, cosmo):
        """Test r = k tan((v - u)/2k) on the standard chart."""
        sample = ads_metric(0.3, 0.3 + math.pi / 2, cosmo)
        assert sample.r == pytest.approx(1.0)
        assert sample.omega_sq == pytest.approx(2.0)
        assert sample.du_r == pytest.approx(-sample.dv_r)

    def test_outside_slab(self, cosmo):
        """Test that points off the open slab are rejected."""
        with pytest.raises(DomainError):
            ads_metric(0.0, 4.0, cosmo)
        with pytest.raises(DomainError):
            ads_metric(1.0, 1.0, cosmo)

    def test_renormalised_arrays(self, cosmo):
        """Test that the renormalised AdS fields are exact at the axis and infinity."""
        x = np.linspace(0.0, math.pi / 2, 9)
        rho, omega, drho = ads_renormalised(x, cosmo, rescaled_to=math.pi / 2)
        assert rho[0] == 0.0
        assert rho[-1] == math.pi / 2
        assert_allclose(omega, 4.0)
        assert_allclose(drho, 1.0)


class TestMasses:
    """Test the Hawking and renormalised masses."""

    def test_ads_has_zero_renormalised_mass(self, cosmo):
        """Test m~ = 0 and 2m/r = -r^2/k^2 on AdS."""
        sample = ads_metric(0.0, 1.2, cosmo)
        mass = hawking_mass(sample, cosmo)
        assert mass.m_tilde == pytest.approx(0.0, abs=1e-12)
        assert mass.mu == pytest.approx(-sample.r ** 2)

    def test_axis_ratios_vanish(self, cosmo):
        """Test that both ratios are zero on the axis."""
        sample = MetricSample(u=0.0, v=0.0, r=0.0, omega_sq=1.0, dv_r=0.5, du_r=-0.5)
        mass = hawking_mass(sample, cosmo)
        assert mass.mu == 0.0 and mass.mu_tilde == 0.0

    def test_infinity_rejected(self, cosmo):
        """Test that the raw Hawking mass is undefined on infinity."""
        sample = MetricSample(r=math.inf, omega_sq=1.0, dv_r=1.0, du_r=-1.0, at_infinity=True)
        with pytest.raises(DomainError):
            hawking_mass(sample, cosmo)

    def test_trapping_ratio_on_ads(self):
        """Test q = 0 on AdS so that 2m/r = -tan^2 rho."""
        rho = np.array([0.2, 0.7, 1.3])
        q = trapping_ratio(rho, np.ones(3), np.full(3, 0.5), np.full(3, -0.5), 1.0)
        assert_allclose(q, 0.0, atol=1e-15)
        assert_allclose(mu_from_ratio(q, rho), -np.tan(rho) ** 2)

    def test_safe_ratio(self):
        """Test that zero operands give zero instead of nan or inf."""
        out = safe_ratio([0.0, 1.0, 2.0], [0.0, 0.0, 4.0])
        assert_allclose(out, [0.0, 0.0, 0.5])


class TestRenormalisation:
    """Test the renormalised variables."""

    def test_inverse(self, cosmo):
        """Test that derenormalize undoes renormalize."""
        sample = ads_metric(0.1, 2.0, cosmo)
        back = derenormalize(renormalize(sample, cosmo), cosmo)
        assert back.r == pytest.approx(sample.r)
        assert back.omega_sq == pytest.approx(sample.omega_sq)
        assert back.dv_r == pytest.approx(sample.dv_r)

    def test_ads_renormalised_values(self, cosmo):
        """Test Omega~^2 = 1 and d_v rho = 1/2k on the standard chart."""
        out = renormalize(ads_metric(0.0, 2.0, cosmo), cosmo)
        assert out.rho == pytest.approx(1.0)
        assert out.omega_tilde_sq == pytest.approx(1.0)
        assert out.dv_rho == pytest.approx(0.5)

    def test_interior_right_angle_rejected(self, cosmo):
        """Test that rho = pi/2 is accepted only on infinity."""
        sample = RenormalisedSample(rho=math.pi / 2, omega_tilde_sq=1.0, dv_rho=0.5, du_rho=-0.5)
        with pytest.raises(DomainError):
            derenormalize(sample, cosmo)


class TestGauge:
    """Test gauge maps and their action."""

    def test_affine_map_on_sample(self, cosmo):
        """Test Omega^2 -> Omega^2 / (U' V') and d_v r -> d_v r / V'."""
        sample = ads_metric(0.0, 1.0, cosmo)
        mapped = apply_gauge(sample, GaugeMap.affine(2.0, math.pi))
        assert mapped.omega_sq == pytest.approx(sample.omega_sq / 4.0)
        assert mapped.dv_r == pytest.approx(sample.dv_r / 2.0)
        assert mapped.v == pytest.approx(2.0)
        assert mapped.r == sample.r

    def test_inverse_composes_to_identity(self):
        """Test that a map composed with its inverse fixes v."""
        gauge = GaugeMap.from_function(lambda v: v + 0.1 * np.sin(v), math.pi, du0=1.3)
        roundtrip = gauge.compose(gauge.inverse())
        v = np.linspace(0.0, math.pi, 7)
        assert_allclose(roundtrip(v), v, atol=1e-8)
        assert roundtrip.du0 == pytest.approx(1.0)

    def test_non_monotone_map_rejected(self):
        """Test that a decreasing map is refused."""
        with pytest.raises(ValueError, match="strictly increasing"):
            GaugeMap(v_nodes=np.array([0.0, 1.0, 2.0]), V_nodes=np.array([0.0, 1.5, 1.0]), du0=1.0)

    def test_periodic_extension(self):
        """Test V(v + n v_I) = V(v) + n v_I."""
        gauge = GaugeMap.from_function(lambda v: v + 0.1 * np.sin(2.0 * v), math.pi, du0=1.2, periodic=True)
        assert gauge.extend_v(math.pi + 0.4) == pytest.approx(gauge(0.4) + math.pi)
        assert gauge.extension_derivative(2 * math.pi + 0.4) == pytest.approx(gauge.derivative(0.4))

    def test_gauge_keeps_radius_on_data(self, trivial_data):
        """Test that r is carried as a scalar under a reparametrisation."""
        gauge = GaugeMap.from_function(lambda v: v + 0.1 * np.sin(v), math.pi, du0=1.3)
        mapped = apply_gauge(trivial_data, gauge)
        assert mapped.gauge_tag == "raw"
        assert mapped.v_infinity == pytest.approx(trivial_data.v_infinity)
        v_old = gauge.inverse()(mapped.v[1:-1])
        assert_allclose(mapped.rho[1:-1], 0.5 * v_old, atol=1e-6)


class TestScaling:
    """Test the scaling family."""

    def test_scale_data(self, bump_data):
        """Test Lambda -> lam^2 Lambda, v -> v / lam and m~ -> m~ / lam."""
        scaled = scale_data(bump_data, 2.0, 3.0)
        assert scaled.cosmology.cosmological_constant == pytest.approx(-12.0)
        assert scaled.v_infinity == pytest.approx(math.pi / 2)
        assert scaled.total_mass == pytest.approx(bump_data.total_mass / 2.0)
        assert_allclose(scaled.rho, bump_data.rho)

    def test_invalid_parameters(self, bump_data):
        with pytest.raises(DomainError):
            scale_data(bump_data, -1.0, 1.0)
