"""
Tests for macro-particle sampling, transport and deposition.
"""

import math

import numpy as np
import pytest
from numpy.testing import assert_allclose
from scipy.integrate import trapezoid

from src.errors import DomainError
from src.models.matter import Particle, ParticleEnsemble
from src.services.ads_flow import GeodesicBundle
from src.services.initial_data import InitialDataService
from src.services.vlasov_matter import (
    AdSStencil,
    Pusher,
    SliceFields,
    SliceStencil,
    deposit,
    deposit_on_line,
    mass_shell_defect,
    push,
    reflect_at_infinity,
    reflect_ensemble,
    sample_ensemble,
    support_functional,
    support_interval,
)


def make_ensemble(u, v, g_u, g_v, l, weight=None):
    n = len(u)
    weight = np.ones(n) if weight is None else weight
    return ParticleEnsemble(u=u, v=v, g_u=g_u, g_v=g_v, l=l, f_value=np.ones(n), weight=weight,
                            reflections=np.zeros(n, dtype=np.int64))


def shell_state(x, energy, l, outgoing=True):
    """(G^u, G^v) on the standard AdS mass shell at offset x with the given energy."""
    product = l * l / math.sin(0.5 * x) ** 2
    root = math.sqrt(energy * energy - product)
    return (energy - root, energy + root) if outgoing else (energy + root, energy - root)


class TestSampling:
    """Test the initial ensemble."""

    def test_trivial_data(self, trivial_data):
        assert len(sample_ensemble(trivial_data, (8, 4, 4))) == 0

    def test_support_interval(self, trivial_data, bump_data, small_settings):
        """Test that sampled particles stay inside the v-interval reported for the data."""
        assert support_interval(trivial_data) is None
        lo, hi = support_interval(bump_data)
        assert 0.0 <= lo < math.pi / 2 < hi <= bump_data.v_infinity
        e = sample_ensemble(bump_data, small_settings.particle_counts, small_settings)
        assert lo <= float(np.min(e.v)) and float(np.max(e.v)) <= hi

    def test_positive_weights_on_shell(self, bump_data, small_settings):
        """Test that sampled particles carry positive counts and sit on the mass shell."""
        e = sample_ensemble(bump_data, small_settings.particle_counts, small_settings)
        assert len(e) > 0
        assert np.all(e.weight > 0) and np.all(e.u == 0.0)
        fields = SliceFields(0.0, bump_data.v, bump_data.rho, bump_data.log_omega, bump_data.drho_dv)
        stencil = SliceStencil(fields, -bump_data.drho_dv)
        assert np.max(mass_shell_defect(e, stencil, bump_data.length_unit)) < 1e-3

    def test_deposit_matches_moments(self, bump_data, small_settings):
        """Test that the deposited tau_vv integrates to the same value as the profile moments."""
        e = sample_ensemble(bump_data, (24, 12, 12), small_settings)
        tau_vv = deposit_on_line(e.v, e.g_u, e.g_v, e.weight, bump_data.n, bump_data.h)[2]
        _, _, moments_vv = InitialDataService(small_settings).stress(bump_data)
        assert trapezoid(tau_vv, bump_data.v) == pytest.approx(trapezoid(moments_vv, bump_data.v), rel=2e-2)


class TestDeposition:
    """Test hat-kernel deposition."""

    def test_number_is_conserved(self):
        """Test that the trapezoid integral of r^2 N_v equals pi times the total count."""
        rng = np.random.default_rng(7)
        x = rng.uniform(0.0, math.pi, 50)
        weight = rng.uniform(0.5, 1.5, 50)
        n_cells, h = 32, math.pi / 32
        n_v = deposit_on_line(x, np.ones(50), np.ones(50), weight, n_cells, h)[4]
        nodes = np.arange(n_cells + 1) * h
        assert trapezoid(n_v, nodes) == pytest.approx(math.pi * weight.sum(), rel=1e-12)

    def test_empty_ensemble(self):
        out = deposit_on_line(np.zeros(0), np.zeros(0), np.zeros(0), np.zeros(0), 8, 0.5)
        assert all(np.all(a == 0.0) for a in out)

    def test_single_particle_by_hand(self):
        """Test the hat weights of one particle between nodes 1 and 2."""
        one = np.ones(1)
        out = deposit_on_line(0.8 * one, 2.0 * one, 0.5 * one, 0.1 * one, 4, 0.5)
        expected = [(0.005, 0.0075), (0.02, 0.03), (0.08, 0.12), (0.02, 0.03), (0.08, 0.12)]
        for values, (left, right) in zip(out, expected):
            assert_allclose(values, math.pi * np.array([0.0, left, right, 0.0, 0.0]), rtol=1e-12, atol=1e-15)

    def test_end_nodes_use_half_cells(self):
        one = np.ones(1)
        n_v = deposit_on_line(2.0 * one, one, one, 0.1 * one, 4, 0.5)[4]
        assert_allclose(n_v, [0.0, 0.0, 0.0, 0.0, 2.0 * 0.1 * math.pi / 0.5], atol=1e-15)

    def test_deposition_is_linear(self):
        x = np.array([0.3, 1.7])
        g_u = np.array([1.2, 0.4])
        g_v = np.array([0.6, 2.5])
        weight = np.array([0.2, 0.9])
        together = deposit_on_line(x, g_u, g_v, weight, 4, 0.5)
        first = deposit_on_line(x[:1], g_u[:1], g_v[:1], weight[:1], 4, 0.5)
        second = deposit_on_line(x[1:], g_u[1:], g_v[1:], weight[1:], 4, 0.5)
        for both, a, b in zip(together, first, second):
            assert_allclose(both, a + b, rtol=1e-14, atol=1e-15)

    def test_bands_partition_the_current(self, cosmo):
        """Test that band currents over a partition of l add up to the full current."""
        stencil = AdSStencil(1.0, math.pi)
        e = make_ensemble(u=np.zeros(3), v=np.array([0.5, 1.0, 2.0]), g_u=np.array([0.5, 1.0, 0.7]),
                          g_v=np.array([1.0, 0.2, 0.9]), l=np.array([0.1, 0.4, 0.8]))
        x_nodes = np.linspace(0.0, math.pi, 17)
        stress, currents, support = deposit(e, 0.0, x_nodes, stencil, 1.0, l_bands=(0.0, 0.5, 1.0))
        assert len(currents.bands) == 2
        assert_allclose(currents.bands[0].n_v + currents.bands[1].n_v, currents.n_v)
        assert currents.total_number == pytest.approx(3.0 * math.pi)
        assert stress.tau_vv.shape == x_nodes.shape

    def test_support_functional_on_ads(self):
        """Test that the support functional reduces to the largest energy on standard AdS."""
        stencil = AdSStencil(1.0, math.pi)
        e = make_ensemble(u=np.zeros(2), v=np.array([1.0, 2.0]), g_u=np.array([0.5, 1.0]),
                          g_v=np.array([1.0, 2.0]), l=np.array([0.1, 0.2]))
        assert support_functional(e, stencil, 1.0) == pytest.approx(1.5)


class TestPusher:
    """Test geodesic transport against the closed-form flow."""

    @pytest.fixture
    def pusher_settings(self, small_settings):
        return small_settings.model_copy(update={"push_order": 4})

    def test_matches_closed_form_through_a_reflection(self, pusher_settings):
        g_u, g_v = shell_state(1.0, 1.0, 0.3)
        e = make_ensemble(u=[0.0], v=[1.0], g_u=[g_u], g_v=[g_v], l=[0.3])
        pusher = Pusher(1.0, math.pi, math.pi / 256, pusher_settings)
        out = pusher.advance_to_u(e, AdSStencil(1.0, math.pi), 0.8)

        bundle = GeodesicBundle.from_states([0.0], [1.0], [g_u], [g_v], [0.3], 1.0)
        tau = bundle.tau_at_u(0.8)
        _, v = bundle.position(tau)
        exact_u, exact_v = bundle.momentum(tau)
        assert out.u[0] == pytest.approx(0.8, abs=1e-12)
        assert out.v[0] == pytest.approx(v[0], abs=1e-6)
        assert out.g_u[0] == pytest.approx(exact_u[0], abs=1e-5)
        assert out.g_v[0] == pytest.approx(exact_v[0], abs=1e-5)
        assert out.reflections[0] == 1

    def test_flow_time_is_exact(self, pusher_settings):
        g_u, g_v = shell_state(1.5, 2.0, 0.2, outgoing=False)
        e = make_ensemble(u=[0.0], v=[1.5], g_u=[g_u], g_v=[g_v], l=[0.2])
        pusher = Pusher(1.0, math.pi, math.pi / 64, pusher_settings)
        out = pusher.advance_by_tau(e, AdSStencil(1.0, math.pi), 0.7)
        assert out.u[0] + out.v[0] == pytest.approx(2.2, abs=1e-12)
        assert mass_shell_defect(out, AdSStencil(1.0, math.pi), 1.0)[0] < 1e-12

    def test_input_is_not_mutated(self, pusher_settings):
        g_u, g_v = shell_state(1.0, 1.0, 0.3)
        e = make_ensemble(u=[0.0], v=[1.0], g_u=[g_u], g_v=[g_v], l=[0.3])
        Pusher(1.0, math.pi, math.pi / 64, pusher_settings).advance_to_u(e, AdSStencil(1.0, math.pi), 0.4)
        assert e.u[0] == 0.0 and e.v[0] == 1.0

    def test_single_push_conserves_energy(self, pusher_settings):
        """Test that one step on exact AdS keeps G^u + G^v."""
        stencil = AdSStencil(1.0, math.pi)
        g_u, g_v = shell_state(1.0, 1.0, 0.3)
        omega_sq = 1.0 / math.cos(0.5) ** 2
        particle = Particle(u=0.0, v=1.0, p_u=g_u / omega_sq, p_v=g_v / omega_sq, l=0.3, f_value=1.0, weight=1.0)
        moved = push(particle, stencil, 0.05, 1.0, math.pi, pusher_settings)
        new_omega_sq = 1.0 / math.cos(0.5 * (moved.v - moved.u)) ** 2
        assert moved.u + moved.v == pytest.approx(1.05)
        assert (moved.p_u + moved.p_v) * new_omega_sq == pytest.approx(2.0, rel=1e-8)

    def test_single_push_across_infinity(self, pusher_settings):
        stencil = AdSStencil(1.0, math.pi)
        x = math.pi - 0.01
        g_u, g_v = shell_state(x, 1.0, 0.3)
        omega_sq = 1.0 / math.cos(0.5 * x) ** 2
        particle = Particle(u=0.0, v=x, p_u=g_u / omega_sq, p_v=g_v / omega_sq, l=0.3, f_value=1.0, weight=1.0)
        with pytest.raises(DomainError):
            push(particle, stencil, 0.2, 1.0, math.pi, pusher_settings)


class TestReflection:
    """Test reflection off infinity."""

    def test_reflect_particle(self):
        particle = Particle(u=0.5, v=0.5 + math.pi, p_u=0.2, p_v=0.9, l=0.3, f_value=1.0, weight=2.0)
        reflected = reflect_at_infinity(particle, math.pi)
        assert (reflected.p_u, reflected.p_v) == (0.9, 0.2)
        assert reflected.reflections == 1
        assert reflected.l == particle.l and reflected.f_value == particle.f_value

    def test_reflect_away_from_infinity(self):
        particle = Particle(u=0.5, v=2.0, p_u=0.2, p_v=0.9, l=0.3, f_value=1.0, weight=2.0)
        with pytest.raises(DomainError):
            reflect_at_infinity(particle, math.pi)

    def test_reflect_ensemble_mask(self):
        e = make_ensemble(u=np.zeros(2), v=np.full(2, math.pi), g_u=np.array([0.1, 0.2]),
                          g_v=np.array([0.9, 0.8]), l=np.array([0.3, 0.3]))
        out = reflect_ensemble(e, np.array([True, False]))
        assert_allclose(out.g_u, [0.9, 0.2])
        assert_allclose(out.g_v, [0.1, 0.8])
        assert list(out.reflections) == [1, 0]
        assert_allclose(e.g_u, [0.1, 0.2])
