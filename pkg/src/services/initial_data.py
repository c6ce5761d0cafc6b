"""
Construction, mass integration, gauge normalisation and validation of initial data on u = 0.
"""

import logging
import math
from typing import Optional, Tuple

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.integrate import cumulative_simpson, trapezoid
from scipy.interpolate import CubicSpline
from scipy.optimize import brentq

from src.config.settings import Settings, get_settings
from src.errors import DomainError, GaugeError, IntegrationError, ShootingError
from src.models.data import ConstructionProfile, InitialDataSet
from src.models.geometry import Cosmology, GaugeMap
from src.models.matter import EnsembleProfile, VlasovProfile
from src.models.responses import ConstructionEstimates, ValidationReport
from src.services.geometry_core import ads_renormalised, apply_gauge, safe_ratio
from src.services.vlasov_matter import deposit_on_line

logger = logging.getLogger(__name__)

HALF_PI = math.pi / 2
_BRACKET_STEPS = 60
_MOMENT_CHUNK = 256


class ProfileMoments:
    """Gauss-Legendre (q, l) moments of a profile over its support box."""

    def __init__(self, profile: VlasovProfile, orders: Tuple[int, int]):
        self.profile = profile
        self.box = profile.support_box()
        xq, wq = leggauss(orders[0])
        xl, wl = leggauss(orders[1])
        half_q = 0.5 * (self.box.p_max - self.box.p_min)
        half_l = 0.5 * (self.box.l_max - self.box.l_min)
        self.q = self.box.p_min + half_q * (xq + 1.0)
        self.wq = half_q * wq
        self.l = self.box.l_min + half_l * (xl + 1.0)
        self.wl = half_l * wl

    def evaluate(self, v: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """
        Moments at profile coordinates v.

        Returns:
            (int q F dq l dl, int F / q l^3 dq dl, int F / q^3 l^5 dq dl)
        """
        v = np.asarray(v, dtype=float)
        out = [np.zeros_like(v) for _ in range(3)]
        inside = np.nonzero((v >= self.box.v_min) & (v <= self.box.v_max))[0]
        q = self.q[None, :, None]
        l = self.l[None, None, :]
        w = self.wq[None, :, None] * self.wl[None, None, :]
        for start in range(0, inside.size, _MOMENT_CHUNK):
            idx = inside[start:start + _MOMENT_CHUNK]
            f = self.profile.evaluate(v[idx][:, None, None], q, l) * w
            out[0][idx] = np.sum(f * q * l, axis=(1, 2))
            out[1][idx] = np.sum(f * l ** 3 / q, axis=(1, 2))
            out[2][idx] = np.sum(f * l ** 5 / q ** 3, axis=(1, 2))
        return out[0], out[1], out[2]


class InitialDataService:
    """Builds and checks asymptotically AdS initial data."""

    def __init__(self, settings: Optional[Settings] = None):
        self.settings = settings or get_settings()

    # Stress and mass

    def stress(self, data: InitialDataSet) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """
        Renormalised stress (tau_uu, tau_uv, tau_vv) = r^2 T on the data nodes.

        Args:
            data: Initial data set

        Returns:
            Three arrays on the data nodes, zero on the axis node
        """
        k = data.length_unit
        zero = np.zeros_like(data.v)
        if data.is_trivial:
            return zero, zero.copy(), zero.copy()

        if isinstance(data.profile, EnsembleProfile):
            e = data.profile.ensemble
            tau_uu, tau_uv, tau_vv, _, _ = deposit_on_line(e.v, e.g_u, e.g_v, e.weight, data.n, data.h)
            return tau_uu, tau_uv, tau_vv

        moments = ProfileMoments(data.profile, self.settings.moment_orders)
        m1, h3, h5 = moments.evaluate(data.profile_v)
        scale = 4.0 * k * data.drho_dv
        sin = np.sin(data.rho)
        a = safe_ratio(data.omega_tilde_sq, (k * sin) ** 2)
        tau_vv = 0.5 * math.pi * scale ** 2 * m1
        tau_uv = 0.5 * math.pi * a * h3
        tau_uu = 0.5 * math.pi * a ** 2 * safe_ratio(h5, scale ** 2)
        tau_uu[0] = tau_uv[0] = tau_vv[0] = 0.0
        return tau_uu, tau_uv, tau_vv

    def integrate_initial_mass(self, data: InitialDataSet) -> np.ndarray:
        """
        m~ on the data nodes from m~(0) = 0.

        Solves d_v m~ = A - B m~ with the trapezoidal (Crank-Nicolson) rule, where
        A = 2 pi tau_vv / (k d_v rho) + 8 pi k tau_uv d_v rho / Omega~^2 and
        B = 4 pi tau_vv cos^3 rho / (k^2 sin rho d_v rho).
        """
        _, tau_uv, tau_vv = self.stress(data)
        return mass_along_line(data.v, data.rho, data.omega_tilde_sq, data.drho_dv,
                               tau_uv, tau_vv, data.length_unit)

    # Construction

    def smallness(self, cp: ConstructionProfile, nodes: Optional[int] = None) -> float:
        """Smallness functional of F on the rescaled AdS background of width v_infinity."""
        n = nodes or self.settings.data_nodes
        v = np.linspace(0.0, cp.v_infinity, n + 1)
        k = cp.cosmology.length_unit
        g = 32.0 * math.pi ** 2 * ProfileMoments(cp.profile, self.settings.moment_orders).evaluate(v)[0]
        rho = 0.5 * math.pi * v / cp.v_infinity
        integrand = safe_ratio(g * np.cos(rho) ** 3 * cp.v_infinity, 32.0 * math.pi ** 2 * k * k * np.sin(rho))
        return float(trapezoid(integrand, v))

    def construct(self, cp: ConstructionProfile) -> InitialDataSet:
        """
        Gauge-normalised data whose Vlasov field is F(v; d_v r p^u, l).

        Args:
            cp: Construction profile; its support must avoid v = 0, v = v_infinity, q = 0 and l = 0

        Returns:
            Normalised initial data on ``data_nodes`` cells
        """
        cosmo = cp.cosmology
        k = cosmo.length_unit
        v_inf = cosmo.v_infinity
        n = self.settings.data_nodes
        v = np.linspace(0.0, v_inf, n + 1)
        v[-1] = v_inf

        if cp.profile.is_zero:
            rho, omega_tilde_sq, drho_dv = ads_renormalised(v, cosmo, rescaled_to=v_inf)
            logger.info(f"Trivial profile: returning rescaled AdS data with v_infinity={v_inf:.6g}")
            return InitialDataSet(cosmology=cosmo, v=v, rho=rho, log_omega=np.log(omega_tilde_sq),
                                  drho_dv=drho_dv, m_tilde=np.zeros_like(v), profile=cp.profile,
                                  profile_v=v.copy(), gauge_tag="normalised")

        box = cp.profile.support_box()
        if not (box.v_min > 0 and box.v_max < v_inf and box.p_min > 0 and box.l_min > 0):
            raise DomainError("construction needs a profile supported away from v=0, v=v_infinity, q=0 and l=0")

        smallness = self.smallness(cp, n)
        if smallness > self.settings.smallness_threshold:
            logger.warning(f"Smallness functional {smallness:.4g} exceeds threshold {self.settings.smallness_threshold}")

        v_half = np.linspace(0.0, v_inf, 2 * n + 1)
        g_all = 32.0 * math.pi ** 2 * ProfileMoments(cp.profile, self.settings.moment_orders).evaluate(v_half)[0]
        g_nodes, g_mid = g_all[0::2], g_all[1::2]
        h = v_inf / n

        def endpoint_defect(a_bar: float) -> float:
            p_end, _, _ = self._march(a_bar, g_nodes, g_mid, h, k)
            return p_end - 0.5 * k * math.pi

        a0 = self._shoot(endpoint_defect, v_inf / (k * math.pi))
        p, y = self._march(a0, g_nodes, g_mid, h, k, full=True)[1:]

        rho = np.clip(p / k, 0.0, np.nextafter(HALF_PI, 0.0))
        rho[0], rho[-1] = 0.0, HALF_PI
        rho_bar = np.exp(y)
        data = InitialDataSet(cosmology=cosmo, v=v, rho=rho, log_omega=math.log(4.0) + 2.0 * y,
                              drho_dv=rho_bar / k, m_tilde=np.zeros_like(v), profile=cp.profile,
                              profile_v=v.copy(), gauge_tag="normalised")
        data = data.replace(m_tilde=self.integrate_initial_mass(data))
        logger.info(f"Constructed data: a0={a0:.12g}, smallness={smallness:.4g}, total mass={data.total_mass:.6g}")
        return data

    @staticmethod
    def _march(a_bar: float, g_nodes: np.ndarray, g_mid: np.ndarray, h: float, k: float, full: bool = False):
        """RK4 for P = k rho and y = log rho_bar; steps with G = 0 are advanced exactly."""
        cap = 0.5 * math.pi

        def rhs(p_val: float, y_val: float, g: float) -> Tuple[float, float]:
            rb = math.exp(y_val)
            if g == 0.0:
                return rb, 0.0
            rho = min(p_val / k, cap)
            s = math.sin(rho)
            if s <= 0.0:
                return rb, 0.0
            return rb, rb * g * math.cos(rho) ** 3 / (k * s)

        n = g_nodes.size - 1
        p_val, y_val = 0.0, math.log(0.5 / a_bar)
        if full:
            ps = np.empty(n + 1)
            ys = np.empty(n + 1)
            ps[0], ys[0] = p_val, y_val
        for j in range(n):
            g0, gm, g1 = g_nodes[j], g_mid[j], g_nodes[j + 1]
            if g0 == 0.0 and gm == 0.0 and g1 == 0.0:
                p_val += h * math.exp(y_val)
            else:
                k1 = rhs(p_val, y_val, g0)
                k2 = rhs(p_val + 0.5 * h * k1[0], y_val + 0.5 * h * k1[1], gm)
                k3 = rhs(p_val + 0.5 * h * k2[0], y_val + 0.5 * h * k2[1], gm)
                k4 = rhs(p_val + h * k3[0], y_val + h * k3[1], g1)
                p_val += h * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0]) / 6.0
                y_val += h * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1]) / 6.0
            if not (math.isfinite(p_val) and math.isfinite(y_val)):
                raise IntegrationError(f"construction ODE failed at step {j} (a_bar={a_bar:.6g})")
            if full:
                ps[j + 1], ys[j + 1] = p_val, y_val
        if full:
            return p_val, ps, ys
        return p_val, None, None

    def _shoot(self, defect, guess: float) -> float:
        """Root of the monotone decreasing endpoint defect with bracket doubling."""
        lo, hi = 0.5 * guess, 2.0 * guess
        try:
            steps = 0
            while defect(lo) < 0:
                lo *= 0.5
                steps += 1
                if steps > _BRACKET_STEPS:
                    raise ShootingError("could not bracket the blow-up endpoint from below", (lo, hi))
            while defect(hi) > 0:
                hi *= 2.0
                steps += 1
                if steps > _BRACKET_STEPS:
                    raise ShootingError("could not bracket the blow-up endpoint from above", (lo, hi))
            return brentq(defect, lo, hi, xtol=self.settings.shooting_tolerance * guess, rtol=1e-14)
        except ShootingError:
            logger.error(f"Shooting failed with bracket ({lo:.6g}, {hi:.6g})")
            raise
        except (ValueError, RuntimeError) as e:
            logger.error(f"Shooting failed: {str(e)}")
            raise ShootingError(str(e), (lo, hi))

    # Gauge

    def gauge_normalize(self, data: InitialDataSet) -> Tuple[InitialDataSet, GaugeMap]:
        """
        Normalise the gauge of raw data.

        V(v) = b int_0^v k d_v rho / G with G the Raychaudhuri-propagated value of
        Omega~^2 / (4 k d_v rho) and b fixed by V(v_infinity) = v_infinity; b is also dU/du at u = 0.

        Returns:
            The normalised data and the map that produced it
        """
        if data.gauge_tag == "normalised":
            return data.model_copy(deep=True), GaugeMap.identity(data.v_infinity)

        k = data.length_unit
        _, _, tau_vv = self.stress(data)
        integrand = safe_ratio(tau_vv * np.cos(data.rho) ** 3, k * k * np.sin(data.rho) * data.drho_dv)
        growth = 4.0 * math.pi * cumulative_simpson(integrand, x=data.v, initial=0.0)
        g = data.omega_tilde_sq[0] / (4.0 * k * data.drho_dv[0]) * np.exp(growth)
        ratio = k * data.drho_dv / g
        if not np.all(np.isfinite(ratio)) or np.any(ratio <= 0):
            logger.error("Normalising map has a non-integrable denominator")
            raise GaugeError("normalising map is not integrable; the data support is unbounded or d_v r <= 0")

        cumulative = cumulative_simpson(ratio, x=data.v, initial=0.0)
        b = data.v_infinity / cumulative[-1]
        V = b * cumulative
        V[-1] = data.v_infinity
        gauge = GaugeMap(v_nodes=data.v, V_nodes=V, du0=b, periodic=True)
        normalised = apply_gauge(data, gauge).replace(gauge_tag="normalised")
        logger.info(f"Normalised data gauge: b={b:.12g}")
        return normalised, gauge

    # Checks

    def construction_estimates(self, data: InitialDataSet) -> ConstructionEstimates:
        """Distance of k d_v rho from its AdS value and the energy flux int r T_vv / d_v r dv."""
        k = data.length_unit
        _, _, tau_vv = self.stress(data)
        integrand = safe_ratio(tau_vv * np.cos(data.rho) ** 3, k * k * np.sin(data.rho) * data.drho_dv)
        return ConstructionEstimates(
            sup_difference=float(np.max(np.abs(k * data.drho_dv - 0.5 * k * math.pi / data.v_infinity))),
            energy_flux=float(trapezoid(integrand, data.v)),
        )

    def validate(self, data: InitialDataSet) -> ValidationReport:
        """
        Constraint, boundary, normalisation, support and trapping checks.

        Returns:
            Verdict object; validation problems are reported, never raised
        """
        k = data.length_unit
        tau_uu, tau_uv, tau_vv = self.stress(data)
        omega = data.omega_tilde_sq
        sin = np.sin(data.rho)
        cos3 = np.cos(data.rho) ** 3

        flux = k * data.drho_dv / omega
        source = 4.0 * math.pi * safe_ratio(tau_vv * cos3, k * sin * omega)
        residual = np.gradient(flux, data.v, edge_order=2) + source
        constraint = float(np.max(np.abs(residual[1:-1])))

        normalisation = float(np.max(np.abs(omega - 4.0 * (k * data.drho_dv) ** 2) / omega))
        support = self._support_constant(data)
        min_drho = float(np.min(data.drho_dv))
        increments = np.diff(data.m_tilde)
        report = ValidationReport(
            constraint_residual=constraint,
            axis_residual=float(abs(data.rho[0])),
            infinity_residual=float(abs(math.cos(data.rho[-1]))),
            normalisation_residual=normalisation,
            support_constant=support,
            min_dv_rho=min_drho,
            no_trapping=bool(min_drho > 0 and np.all(omega > 0)),
            mass_monotone=bool(np.all(increments >= -1e-12 * max(abs(data.total_mass), 1e-300))) and data.m_tilde[0] == 0.0,
            total_mass=data.total_mass,
            gauge_tag=data.gauge_tag,
        )
        logger.info(f"Validated data: constraint={constraint:.3e}, no_trapping={report.no_trapping}")
        return report

    def _support_constant(self, data: InitialDataSet) -> float:
        """sup of G^u + G^v over the support, i.e. Omega^2 (p^u + l^2 / (Omega^2 r^2 p^u))."""
        if data.is_trivial:
            return 0.0
        if isinstance(data.profile, EnsembleProfile):
            e = data.profile.ensemble
            return float(np.max(e.g_u + e.g_v)) if len(e) else 0.0
        k = data.length_unit
        box = data.profile.support_box()
        inside = (data.profile_v >= box.v_min) & (data.profile_v <= box.v_max)
        inside[0] = inside[-1] = False
        if not np.any(inside):
            return 0.0
        scale = 4.0 * k * data.drho_dv[inside]
        a = data.omega_tilde_sq[inside] * box.l_max ** 2 / (k * np.sin(data.rho[inside])) ** 2
        candidates = [scale * q + a / (scale * q) for q in (box.p_min, box.p_max)]
        return float(np.max(np.maximum(*candidates)))


def mass_along_line(v: np.ndarray, rho: np.ndarray, omega_tilde_sq: np.ndarray, drho_dv: np.ndarray,
                    tau_uv: np.ndarray, tau_vv: np.ndarray, length_unit: float, m_start: float = 0.0) -> np.ndarray:
    """Crank-Nicolson march of d_v m~ = A - B m~ along nodes v; A = B = 0 on the axis node."""
    k = length_unit
    sin = np.sin(rho)
    cos3 = np.cos(rho) ** 3
    a_term = 2.0 * math.pi * safe_ratio(tau_vv, k * drho_dv) + 8.0 * math.pi * k * tau_uv * drho_dv / omega_tilde_sq
    b_term = 4.0 * math.pi * safe_ratio(tau_vv * cos3, k * k * sin * drho_dv)
    axis = rho == 0.0
    a_term = np.where(axis, 0.0, a_term)
    b_term = np.where(axis, 0.0, b_term)

    m = np.empty_like(v)
    m[0] = m_start
    steps = np.diff(v)
    for j, step in enumerate(steps):
        m[j + 1] = (m[j] * (1.0 - 0.5 * step * b_term[j]) + 0.5 * step * (a_term[j] + a_term[j + 1])) / (
            1.0 + 0.5 * step * b_term[j + 1])
    if not np.all(np.isfinite(m)):
        logger.error("Renormalised mass diverged along the line")
        raise IntegrationError("renormalised mass does not converge at infinity")
    return m


def construct_from_profile(cp: ConstructionProfile, v_infinity: Optional[float] = None,
                           settings: Optional[Settings] = None) -> InitialDataSet:
    if v_infinity is not None and not math.isclose(v_infinity, cp.v_infinity):
        cp = ConstructionProfile(profile=cp.profile, cosmology=cp.cosmology.with_v_infinity(v_infinity))
    return InitialDataService(settings).construct(cp)


def make_construction_profile(profile: VlasovProfile, cosmo: Cosmology,
                              settings: Optional[Settings] = None) -> ConstructionProfile:
    """Construction profile with its smallness functional filled in."""
    cp = ConstructionProfile(profile=profile, cosmology=cosmo)
    if profile.is_zero:
        return cp.model_copy(update={"smallness": 0.0})
    return cp.model_copy(update={"smallness": InitialDataService(settings).smallness(cp)})


def integrate_initial_mass(data: InitialDataSet, settings: Optional[Settings] = None) -> np.ndarray:
    return InitialDataService(settings).integrate_initial_mass(data)


def gauge_normalize(data: InitialDataSet, settings: Optional[Settings] = None) -> Tuple[InitialDataSet, GaugeMap]:
    return InitialDataService(settings).gauge_normalize(data)


def validate(data: InitialDataSet, settings: Optional[Settings] = None) -> ValidationReport:
    return InitialDataService(settings).validate(data)


def resample_data(data: InitialDataSet, n: int) -> InitialDataSet:
    """Data on n cells by cubic interpolation (exact copy when n equals the current cell count)."""
    if n == data.n:
        return data.model_copy(deep=True)
    v = np.linspace(0.0, data.v_infinity, n + 1)
    v[-1] = data.v_infinity

    def resample(values: np.ndarray) -> np.ndarray:
        out = CubicSpline(data.v, values)(v)
        out[0], out[-1] = values[0], values[-1]
        return out

    rho = np.clip(resample(data.rho), 0.0, np.nextafter(HALF_PI, 0.0))
    rho[0], rho[-1] = 0.0, HALF_PI
    return data.replace(v=v, rho=rho, log_omega=resample(data.log_omega), drho_dv=resample(data.drho_dv),
                        m_tilde=resample(data.m_tilde), profile_v=resample(data.profile_v))
