"""
Tests for the data norm, slice norms and the stability harness.
"""

import math
from dataclasses import replace

import numpy as np
import pytest

from src.errors import TrappedSliceError
from src.models.geometry import GaugeMap
from src.models.matter import EnsembleProfile
from src.models.responses import StabilityReport
from src.services.diagnostics_norm import NormService, cauchy_stability_experiment, norm, scaling_checks
from src.services.evolution import CharacteristicSolver
from src.services.geometry_core import apply_gauge, scale_data
from src.services.initial_data import construct_from_profile, make_construction_profile
from src.services.vlasov_matter import sample_ensemble


def report(epsilon, value, verdict="reached_target_u"):
    return StabilityReport(epsilon=epsilon, initial_norm=value, slice_norm_sup=value, support_growth=1.0 + value,
                           sup_mu_tilde=value, constraint_integrals=[value, value], verdict=verdict, steps=4)


class TestNorm:
    """Test the norm of initial data."""

    def test_trivial_data(self, trivial_data, small_settings):
        result = norm(trivial_data, small_settings)
        assert result.total == 0.0
        assert result.lattice == [16, 32]

    def test_total_is_sum_of_terms(self, bump_data, small_settings):
        result = norm(bump_data, small_settings)
        assert result.ingoing_sup > 0.0 and result.outgoing_sup > 0.0
        assert result.mass_term == pytest.approx(math.sqrt(3.0) * bump_data.total_mass)
        assert result.total == pytest.approx(result.ingoing_sup + result.outgoing_sup + result.mass_term)
        assert 0.0 <= result.argmax_u <= math.pi
        assert 0.0 <= result.argmax_v <= 2.0 * math.pi

    def test_linear_in_small_amplitude(self, cosmo, small_settings, bump_profile):
        totals = []
        for amp in (1e-3, 2e-3):
            cp = make_construction_profile(bump_profile.scaled(amp), cosmo, small_settings)
            totals.append(norm(construct_from_profile(cp, settings=small_settings), small_settings).total)
        assert totals[1] / totals[0] == pytest.approx(2.0, rel=1e-2)

    def test_finer_lattice_never_lowers_the_suprema(self, bump_data, small_settings):
        """Test that doubling the lattice keeps every old point so the suprema can only grow."""
        coarse = norm(bump_data, small_settings)
        fine = norm(bump_data, small_settings.model_copy(update={"norm_lattice": (32, 64)}))
        assert fine.ingoing_sup >= coarse.ingoing_sup
        assert fine.outgoing_sup >= coarse.outgoing_sup

    def test_gauge_invariance(self, bump_data, small_settings):
        gauge = GaugeMap.from_function(lambda v: v + 0.1 * np.sin(v), math.pi, du0=1.3)
        raw = apply_gauge(bump_data, gauge)
        assert norm(raw, small_settings).total == pytest.approx(norm(bump_data, small_settings).total, rel=1e-6)

    def test_scale_invariance(self, bump_data, small_settings):
        """Test that the norm of a particle data set is unchanged by the scaling family."""
        ensemble = sample_ensemble(bump_data, small_settings.particle_counts, small_settings)
        data = bump_data.replace(profile=EnsembleProfile(ensemble=ensemble))
        scaled = scale_data(data, 2.0, 3.0)
        assert norm(scaled, small_settings).total == pytest.approx(norm(data, small_settings).total, rel=1e-6)


class TestSliceNorm:
    """Test slices read back as initial data."""

    def test_initial_slice_matches_data(self, bump_data, small_settings):
        settings = small_settings.model_copy(update={"n_per_slab": bump_data.n})
        state = CharacteristicSolver(settings).initial_state(bump_data)
        service = NormService(settings)
        assert service.slice_norm(state).total == pytest.approx(service.norm(bump_data).total, rel=1e-12)

    def test_slice_data(self, bump_data, small_settings):
        state = CharacteristicSolver(small_settings).initial_state(bump_data)
        data = NormService(small_settings).slice_data(state)
        assert data.n == small_settings.n_per_slab
        assert isinstance(data.profile, EnsembleProfile)
        assert np.all(data.profile.ensemble.u == 0.0)

    def test_trapped_slice(self, trivial_data, small_settings):
        state = CharacteristicSolver(small_settings).initial_state(trivial_data)
        m = np.full_like(state.slice.m_tilde, 100.0)
        m[0] = 0.0
        trapped = replace(state, slice=replace(state.slice, m_tilde=m))
        with pytest.raises(TrappedSliceError):
            NormService(small_settings).slice_norm(trapped)


class TestStabilityExperiment:
    """Test the amplitude sweep."""

    def test_zero_amplitude(self, bump_profile, small_settings):
        reports = cauchy_stability_experiment(bump_profile, [0.0], math.pi / 16, small_settings, norm_every=1)
        assert len(reports) == 1
        r = reports[0]
        assert r.verdict == "reached_target_u"
        assert r.steps == 2
        assert r.initial_norm == 0.0 and r.slice_norm_sup == 0.0
        assert r.support_growth == 0.0 and r.sup_mu_tilde == 0.0

    def test_small_amplitudes_scale(self, bump_profile, small_settings):
        reports = cauchy_stability_experiment(bump_profile, [1e-3, 2e-3], math.pi / 16, small_settings)
        assert [r.epsilon for r in reports] == [1e-3, 2e-3]
        assert all(r.verdict == "reached_target_u" for r in reports)
        assert reports[0].initial_norm / reports[1].initial_norm == pytest.approx(0.5, rel=1e-2)
        check = next(c for c in scaling_checks(reports) if c.field.startswith("initial_norm"))
        assert check.passed


class TestScalingChecks:
    def test_linear_reports_pass(self):
        checks = scaling_checks([report(0.0, 0.0), report(1e-3, 0.01), report(2e-3, 0.02)])
        assert len(checks) == 6
        assert all(c.passed for c in checks)
        assert all(c.expected == pytest.approx(0.5) for c in checks)

    def test_quadratic_field_fails(self):
        a, b = report(1e-3, 0.01), report(2e-3, 0.02)
        b = b.model_copy(update={"sup_mu_tilde": 0.04})
        failed = [c.field for c in scaling_checks([a, b]) if not c.passed]
        assert failed == ["sup_mu_tilde@0.001/0.002"]

    def test_vanishing_denominator(self):
        checks = scaling_checks([report(1e-3, 0.0), report(2e-3, 0.0)])
        assert all(c.ratio is None and not c.passed for c in checks)
