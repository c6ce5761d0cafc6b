"""
Scale-invariant norm of initial data, slice norms along an evolution and the Cauchy-stability harness.
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from typing import List, Optional, Sequence

import numpy as np
from scipy.interpolate import CubicSpline

from src.config.settings import Settings, get_settings
from src.errors import AdsNullError, TrappedSliceError
from src.models.data import InitialDataSet
from src.models.geometry import Cosmology
from src.models.matter import EnsembleProfile, ParticleEnsemble, VlasovProfile
from src.models.responses import NormBreakdown, ScalingCheck, StabilityReport
from src.services.ads_flow import GeodesicBundle
from src.services.evolution import CharacteristicSolver, SolverState
from src.services.geometry_core import safe_ratio
from src.services.initial_data import construct_from_profile, gauge_normalize, make_construction_profile
from src.services.vlasov_matter import sample_ensemble

logger = logging.getLogger(__name__)

SCALING_TOLERANCE = 0.3
_SCALING_FIELDS = ("initial_norm", "slice_norm_sup", "sup_mu_tilde", "constraint_integral_u",
                   "constraint_integral_v", "support_excess")


class ComparisonField:
    """
    Free-streamed comparison Vlasov field on standard AdS, carried by macro-particles.

    The normalised data of width v_I is mapped onto the standard chart by
    U = c u, V = c v with c = k pi / v_I; each particle keeps its p^u there.
    """

    def __init__(self, data: InitialDataSet, ensemble: ParticleEnsemble):
        k = data.length_unit
        self.length_unit = k
        c = k * math.pi / data.v_infinity
        v = ensemble.v
        rho_data = CubicSpline(data.v, data.rho)(v)
        omega_data = np.exp(CubicSpline(data.v, data.log_omega)(v))
        rho_ads = c * v / (2.0 * k)
        g_u = c * ensemble.g_u * np.cos(rho_data) ** 2 / (omega_data * np.cos(rho_ads) ** 2)
        g_v = ensemble.l ** 2 / ((k * np.sin(rho_ads)) ** 2 * g_u)
        self.weight = ensemble.weight * (g_u / ensemble.g_u) * c
        self.bundle = GeodesicBundle.from_states(np.zeros_like(v), c * v, g_u, g_v, ensemble.l, k)

    def _crossing_flux(self, tau: np.ndarray, inside: Optional[np.ndarray] = None) -> float:
        """sum over crossings of 2 pi E W cos^3 rho / (k sin rho)."""
        rho = self.bundle.rho(tau)
        terms = 2.0 * math.pi * self.bundle.energy * self.weight * safe_ratio(
            np.cos(rho) ** 3, self.length_unit * np.sin(rho))
        if inside is not None:
            terms = np.where(inside, terms, 0.0)
        return float(np.sum(terms))

    def ingoing_flux(self, u_star: float) -> float:
        """int r (T_vv / d_v r + T_uv / (-d_u r)) dv along U = u_star."""
        return self._crossing_flux(self.bundle.tau_at_u(u_star))

    def outgoing_flux(self, v_star: float) -> float:
        """int r (T_uu / (-d_u r) + T_uv / d_v r) du along V = v_star, from max{0, v_star - k pi}."""
        tau = self.bundle.tau_at_v(v_star)
        u_cross = self.bundle.position(tau)[0]
        return self._crossing_flux(tau, inside=u_cross >= -1e-12 * self.length_unit)


class NormService:
    """Evaluates the initial-data norm and runs stability experiments."""

    def __init__(self, settings: Optional[Settings] = None):
        self.settings = settings or get_settings()

    def norm(self, data: InitialDataSet) -> NormBreakdown:
        """
        Norm of the data: suprema of the two comparison-field flux integrals plus sqrt(-Lambda) m~ at infinity.

        Args:
            data: Initial data in any gauge

        Returns:
            The three summands, their total and the lattice used for the suprema
        """
        n_u, n_v = self.settings.norm_lattice
        k = data.length_unit
        mass_term = max(math.sqrt(3.0) / k * data.total_mass, 0.0)
        lattice = [n_u, n_v]
        if data.is_trivial:
            return NormBreakdown(ingoing_sup=0.0, outgoing_sup=0.0, mass_term=mass_term, total=mass_term,
                                 lattice=lattice)

        normalised, _ = gauge_normalize(data, self.settings)
        profile = normalised.profile
        if isinstance(profile, EnsembleProfile):
            ensemble = profile.ensemble
        else:
            ensemble = sample_ensemble(normalised, self.settings.particle_counts, self.settings)
        if len(ensemble) == 0:
            return NormBreakdown(ingoing_sup=0.0, outgoing_sup=0.0, mass_term=mass_term, total=mass_term,
                                 lattice=lattice)

        comparison = ComparisonField(normalised, ensemble)
        u_stars = np.linspace(0.0, k * math.pi, n_u + 1)
        v_stars = np.linspace(0.0, 2.0 * k * math.pi, n_v + 1)
        ingoing = np.array([comparison.ingoing_flux(u) for u in u_stars])
        outgoing = np.array([comparison.outgoing_flux(v) for v in v_stars])
        i_u, i_v = int(np.argmax(ingoing)), int(np.argmax(outgoing))
        breakdown = NormBreakdown(
            ingoing_sup=float(ingoing[i_u]),
            outgoing_sup=float(outgoing[i_v]),
            mass_term=mass_term,
            total=float(ingoing[i_u] + outgoing[i_v] + mass_term),
            lattice=lattice,
            argmax_u=float(u_stars[i_u]),
            argmax_v=float(v_stars[i_v]),
        )
        logger.info(f"Norm computed: total={breakdown.total:.6g} with {len(ensemble)} particles")
        return breakdown

    def slice_data(self, state: SolverState) -> InitialDataSet:
        """
        The slice u = u* read as initial data: v - u* becomes the new v and particles keep their momenta.

        Raises:
            TrappedSliceError: the slice contains a trapped sphere
        """
        s = state.slice
        q = s.ratio
        if np.any(q[1:-1] >= 1.0):
            j = 1 + int(np.argmax(q[1:-1]))
            logger.error(f"Slice u={s.u:.6g} is trapped; its norm is undefined")
            raise TrappedSliceError("slice contains a trapped sphere", (s.u, s.u + float(s.x[j])), float(s.mu[j]))
        e = state.ensemble.copy()
        e.v = e.v - e.u
        e.u = np.zeros_like(e.u)
        profile = EnsembleProfile(ensemble=e) if len(e) else None
        return InitialDataSet(
            cosmology=state.cosmology, v=s.x.copy(), rho=s.rho.copy(), log_omega=s.log_omega.copy(),
            drho_dv=s.dv_rho.copy(), m_tilde=s.m_tilde.copy(), profile=profile, profile_v=s.x.copy(),
            gauge_tag="normalised" if s.u == 0.0 else "raw",
        )

    def slice_norm(self, state: SolverState) -> NormBreakdown:
        return self.norm(self.slice_data(state))

    def _stability_run(self, profile: VlasovProfile, epsilon: float, target_u: float,
                       norm_every: int) -> StabilityReport:
        settings = self.settings.model_copy(update={"target_u": target_u})
        cosmo = Cosmology(cosmological_constant=settings.cosmological_constant, v_infinity=settings.v_infinity)
        cp = make_construction_profile(profile.scaled(epsilon), cosmo, settings)
        data = construct_from_profile(cp, settings=settings)
        initial = self.norm(data)
        if epsilon > 0 and initial.total <= 0:
            logger.warning(f"Norm of the eps={epsilon:g} data vanishes")

        slice_norms: List[float] = [initial.total]
        service = NormService(settings)

        def on_slice(record, state: SolverState) -> None:
            if state.step_index == 0 or state.step_index % norm_every or not state.verdict.is_green:
                return
            try:
                slice_norms.append(service.slice_norm(state).total)
            except AdsNullError as e:
                logger.warning(f"Slice norm skipped at u={state.u:.6g}: {str(e)}")

        result = CharacteristicSolver(settings).run(data, on_slice=on_slice)
        summary = result.summary
        growth = summary.support_growth if epsilon > 0 else 0.0
        report = StabilityReport(
            epsilon=epsilon,
            initial_norm=initial.total,
            slice_norm_sup=max(slice_norms),
            support_growth=growth,
            sup_mu_tilde=summary.sup_mu_tilde,
            constraint_integrals=[summary.sup_constraint_integral_u, summary.sup_constraint_integral_v],
            verdict=summary.verdict.kind,
            steps=summary.steps,
        )
        logger.info(f"Stability run eps={epsilon:g}: verdict={report.verdict}, slice norm sup={report.slice_norm_sup:.4g}")
        return report

    def cauchy_stability_experiment(self, profile: VlasovProfile, epsilons: Sequence[float], target_u: float,
                                    norm_every: int = 8) -> List[StabilityReport]:
        """
        Construct, measure and evolve data F^(eps) = eps F for every amplitude.

        Args:
            profile: Profile of unit amplitude
            epsilons: Amplitudes
            target_u: Retarded time each run aims for
            norm_every: Slice stride of the slice-norm measurements

        Returns:
            One report per amplitude, in input order; failed runs are reported with a numerical_failure verdict
        """
        def run_one(epsilon: float) -> StabilityReport:
            try:
                return self._stability_run(profile, epsilon, target_u, norm_every)
            except AdsNullError as e:
                logger.error(f"Stability run eps={epsilon:g} failed: {str(e)}")
                return StabilityReport(epsilon=epsilon, initial_norm=0.0, slice_norm_sup=0.0, support_growth=0.0,
                                       sup_mu_tilde=0.0, constraint_integrals=[0.0, 0.0],
                                       verdict="numerical_failure", steps=0)

        with ThreadPoolExecutor(max_workers=max(1, self.settings.threads)) as pool:
            return list(pool.map(run_one, epsilons))


def _report_value(report: StabilityReport, name: str) -> float:
    if name == "constraint_integral_u":
        return report.constraint_integrals[0]
    if name == "constraint_integral_v":
        return report.constraint_integrals[1]
    if name == "support_excess":
        return max(report.support_growth - 1.0, 0.0)
    return getattr(report, name)


def scaling_checks(reports: Sequence[StabilityReport], tolerance: float = SCALING_TOLERANCE) -> List[ScalingCheck]:
    """
    Linear scaling between consecutive nonzero amplitudes.

    A field passes when its ratio is within ``tolerance`` of the amplitude ratio.
    """
    live = [r for r in reports if r.epsilon > 0]
    checks: List[ScalingCheck] = []
    for a, b in zip(live[:-1], live[1:]):
        expected = a.epsilon / b.epsilon
        for name in _SCALING_FIELDS:
            num, den = _report_value(a, name), _report_value(b, name)
            ratio = num / den if den > 0 else None
            passed = ratio is not None and abs(ratio / expected - 1.0) <= tolerance
            checks.append(ScalingCheck(field=f"{name}@{a.epsilon:g}/{b.epsilon:g}", ratio=ratio,
                                       expected=expected, passed=passed))
    return checks


def norm(data: InitialDataSet, settings: Optional[Settings] = None) -> NormBreakdown:
    return NormService(settings).norm(data)


def slice_norm(state: SolverState, settings: Optional[Settings] = None) -> NormBreakdown:
    return NormService(settings).slice_norm(state)


def cauchy_stability_experiment(profile: VlasovProfile, epsilons: Sequence[float], target_u: float,
                                settings: Optional[Settings] = None, norm_every: int = 8) -> List[StabilityReport]:
    return NormService(settings).cauchy_stability_experiment(profile, epsilons, target_u, norm_every)
