"""
Metric conventions: exact AdS values, Hawking mass, renormalisation and gauge maps.
"""

import logging
import math
from functools import singledispatch
from typing import Optional, Tuple

import numpy as np
from scipy.interpolate import CubicSpline

from src.errors import DomainError
from src.models.data import InitialDataSet
from src.models.geometry import Cosmology, GaugeMap, MassSample, MetricSample, RenormalisedSample
from src.models.matter import EnsembleProfile

logger = logging.getLogger(__name__)

HALF_PI = math.pi / 2


def _slab_scale(cosmo: Cosmology, rescaled_to: Optional[float]) -> Tuple[float, float]:
    k = cosmo.length_unit
    width = rescaled_to if rescaled_to is not None else k * math.pi
    if not width > 0:
        raise DomainError("slab width must be positive")
    return width, k * math.pi / width


def ads_metric(u: float, v: float, cosmo: Cosmology, rescaled_to: Optional[float] = None) -> MetricSample:
    """
    Exact AdS metric at (u, v).

    Args:
        u: Retarded time
        v: Advanced time
        cosmo: Cosmological constant (only Lambda is used)
        rescaled_to: Width of the rescaled chart; None selects the standard width k pi

    Returns:
        r = k tan(s (v - u) / 2k) and Omega^2 = s^2 (1 + r^2/k^2) with s = k pi / width
    """
    width, s = _slab_scale(cosmo, rescaled_to)
    if not u < v < u + width:
        raise DomainError(f"point ({u}, {v}) lies outside the open slab of width {width}")
    k = cosmo.length_unit
    rho = s * (v - u) / (2 * k)
    r = k * math.tan(rho)
    omega_sq = s * s / math.cos(rho) ** 2
    dv_r = 0.5 * s / math.cos(rho) ** 2
    return MetricSample(u=u, v=v, r=r, omega_sq=omega_sq, dv_r=dv_r, du_r=-dv_r)


def ads_renormalised(x, cosmo: Cosmology, rescaled_to: Optional[float] = None):
    """
    Exact AdS in renormalised variables at offsets x = v - u, including the axis and infinity.

    Returns:
        (rho, omega_tilde_sq, dv_rho) arrays; d_u rho = -d_v rho
    """
    width, s = _slab_scale(cosmo, rescaled_to)
    k = cosmo.length_unit
    x = np.asarray(x, dtype=float)
    if np.any(x < 0) or np.any(x > width * (1 + 1e-12)):
        raise DomainError("offset outside the closed slab")
    rho = np.minimum(s * x / (2 * k), HALF_PI)
    rho = np.where(np.isclose(x, width, rtol=1e-14, atol=0.0), HALF_PI, rho)
    return rho, np.full_like(x, s * s), np.full_like(x, s / (2 * k))


def hawking_mass(sample: MetricSample, cosmo: Cosmology) -> MassSample:
    """
    Hawking mass m = (r/2)(1 + 4 d_u r d_v r / Omega^2) and m~ = m - Lambda r^3 / 6.

    Args:
        sample: Raw metric sample with finite r
        cosmo: Cosmological constant

    Returns:
        Masses and their ratios to r/2 (zero on the axis)
    """
    if sample.at_infinity or not math.isfinite(sample.r):
        raise DomainError("Hawking mass needs a finite radius; use the renormalised mass on infinity")
    if not (math.isfinite(sample.dv_r) and math.isfinite(sample.du_r)):
        raise DomainError("Hawking mass needs finite derivatives of r")
    r = sample.r
    m = 0.5 * r * (1.0 + 4.0 * sample.du_r * sample.dv_r / sample.omega_sq)
    m_tilde = m - cosmo.cosmological_constant * r ** 3 / 6.0
    if r == 0.0:
        return MassSample(m=m, m_tilde=m_tilde, mu=0.0, mu_tilde=0.0)
    return MassSample(m=m, m_tilde=m_tilde, mu=2 * m / r, mu_tilde=2 * m_tilde / r)


def safe_ratio(numerator, denominator):
    """Elementwise quotient that is zero wherever either operand vanishes."""
    numerator = np.asarray(numerator, dtype=float)
    denominator = np.asarray(denominator, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where((numerator != 0) & (denominator != 0), numerator / denominator, 0.0)


def trapping_ratio(rho, omega_tilde_sq, dv_rho, du_rho, length_unit: float):
    """
    q = 1 + 4 k^2 d_u rho d_v rho / Omega~^2, which equals 2 m~ cos^3 rho / (k sin rho).

    The ratio stays finite on infinity; 1 - 2m/r = sec^2 rho (1 - q).
    """
    return 1.0 + 4.0 * length_unit ** 2 * np.asarray(du_rho) * np.asarray(dv_rho) / np.asarray(omega_tilde_sq)


def mu_from_ratio(q, rho):
    """2m/r = sec^2 rho q - tan^2 rho."""
    q = np.asarray(q, dtype=float)
    rho = np.asarray(rho, dtype=float)
    with np.errstate(over="ignore", invalid="ignore"):
        return q / np.cos(rho) ** 2 - np.tan(rho) ** 2


def renormalised_mass(rho, omega_tilde_sq, dv_rho, du_rho, length_unit: float):
    """m~ = k sin rho q / (2 cos^3 rho); NaN on infinity where the quotient is indeterminate."""
    rho = np.asarray(rho, dtype=float)
    q = trapping_ratio(rho, omega_tilde_sq, dv_rho, du_rho, length_unit)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = length_unit * np.sin(rho) * q / (2.0 * np.cos(rho) ** 3)
    return np.where(rho >= HALF_PI, np.nan, out)


def renormalize(sample: MetricSample, cosmo: Cosmology) -> RenormalisedSample:
    """rho = arctan(r/k), Omega~^2 = Omega^2 / (1 + r^2/k^2) and the matching rho derivatives."""
    if sample.at_infinity or not math.isfinite(sample.r):
        raise DomainError("renormalize needs a finite radius")
    k = cosmo.length_unit
    factor = 1.0 + (sample.r / k) ** 2
    return RenormalisedSample(
        u=sample.u, v=sample.v,
        rho=math.atan(sample.r / k),
        omega_tilde_sq=sample.omega_sq / factor,
        dv_rho=sample.dv_r / (k * factor),
        du_rho=sample.du_r / (k * factor),
    )


def derenormalize(sample: RenormalisedSample, cosmo: Cosmology) -> MetricSample:
    """Inverse of renormalize; rho = pi/2 is accepted only on an infinity node."""
    k = cosmo.length_unit
    if sample.rho >= HALF_PI:
        if not sample.at_infinity:
            raise DomainError("rho = pi/2 away from infinity")
        return MetricSample(u=sample.u, v=sample.v, r=math.inf, omega_sq=math.inf,
                            dv_r=math.copysign(math.inf, sample.dv_rho),
                            du_r=math.copysign(math.inf, sample.du_rho), at_infinity=True)
    factor = 1.0 / math.cos(sample.rho) ** 2
    return MetricSample(
        u=sample.u, v=sample.v,
        r=k * math.tan(sample.rho),
        omega_sq=sample.omega_tilde_sq * factor,
        dv_r=k * factor * sample.dv_rho,
        du_r=k * factor * sample.du_rho,
    )


def _u_derivative(gauge: GaugeMap, u: Optional[float]) -> float:
    if not u:
        return gauge.du0
    return float(gauge.extension_derivative(u))


@singledispatch
def apply_gauge(target, gauge: GaugeMap):
    """
    Transform data under u -> U(u), v -> V(v).

    r is a scalar, Omega^2 picks up 1/(U' V') and G^u = Omega^2 p^u picks up 1/V'.
    """
    raise TypeError(f"cannot apply a gauge map to {type(target).__name__}")


@apply_gauge.register
def _(sample: MetricSample, gauge: GaugeMap) -> MetricSample:
    if gauge.is_identity:
        return sample
    v = sample.v or 0.0
    du = _u_derivative(gauge, sample.u)
    dv = float(gauge.derivative(v)) if not gauge.periodic or v <= gauge.v_end else float(gauge.extension_derivative(v))
    new_v = float(gauge(v)) if not gauge.periodic or v <= gauge.v_end else float(gauge.extend_v(v))
    new_u = None if sample.u is None else (0.0 if sample.u == 0 else float(gauge.extend_u(sample.u)))
    return MetricSample(u=new_u, v=new_v, r=sample.r, omega_sq=sample.omega_sq / (du * dv),
                        dv_r=sample.dv_r / dv, du_r=sample.du_r / du, at_infinity=sample.at_infinity)


@apply_gauge.register
def _(sample: RenormalisedSample, gauge: GaugeMap) -> RenormalisedSample:
    if gauge.is_identity:
        return sample
    v = sample.v or 0.0
    du = _u_derivative(gauge, sample.u)
    dv = float(gauge.derivative(v))
    new_u = None if sample.u is None else (0.0 if sample.u == 0 else float(gauge.extend_u(sample.u)))
    return RenormalisedSample(u=new_u, v=float(gauge(v)), rho=sample.rho,
                              omega_tilde_sq=sample.omega_tilde_sq / (du * dv),
                              dv_rho=sample.dv_rho / dv, du_rho=sample.du_rho / du,
                              at_infinity=sample.at_infinity)


@apply_gauge.register
def _(data: InitialDataSet, gauge: GaugeMap) -> InitialDataSet:
    if gauge.is_identity:
        return data.model_copy(deep=True)
    if not math.isclose(gauge.v_end, data.v_infinity, rel_tol=1e-12):
        raise DomainError(f"gauge map covers [0, {gauge.v_end}] but the data covers [0, {data.v_infinity}]")

    v_end_new = gauge.V_end
    v_new = np.linspace(0.0, v_end_new, data.n + 1)
    v_new[-1] = v_end_new
    v_old = np.asarray(gauge.inverse()(v_new), dtype=float)
    v_old[0], v_old[-1] = 0.0, data.v_infinity
    dV = np.asarray(gauge.derivative(v_old), dtype=float)
    if np.any(dV <= 0):
        raise DomainError("gauge map is not strictly increasing on the data range")

    def resample(values: np.ndarray) -> np.ndarray:
        out = CubicSpline(data.v, values)(v_old)
        out[0], out[-1] = values[0], values[-1]
        return out

    rho = np.clip(resample(data.rho), 0.0, np.nextafter(HALF_PI, 0.0))
    rho[0], rho[-1] = 0.0, HALF_PI
    profile = data.profile
    if isinstance(profile, EnsembleProfile):
        e = profile.ensemble.copy()
        dv_particle = np.asarray(gauge.derivative(e.v), dtype=float)
        e.v = np.asarray(gauge(e.v), dtype=float)
        e.g_u = e.g_u / dv_particle
        e.g_v = e.g_v / gauge.du0
        profile = EnsembleProfile(ensemble=e)

    logger.debug(f"Applied gauge map: v_infinity {data.v_infinity:.6g} -> {v_end_new:.6g}, dU0={gauge.du0:.6g}")
    return InitialDataSet(
        cosmology=data.cosmology.with_v_infinity(v_end_new),
        v=v_new,
        rho=rho,
        log_omega=resample(data.log_omega) - math.log(gauge.du0) - np.log(dV),
        drho_dv=resample(data.drho_dv) / dV,
        m_tilde=resample(data.m_tilde),
        profile=profile,
        profile_v=resample(data.profile_v),
        gauge_tag="raw",
    )


def scale_data(data: InitialDataSet, lam: float, lam_prime: float) -> InitialDataSet:
    """
    Scaling family r -> r(lam v)/lam, Omega^2 -> Omega^2(lam v), f -> lam^2 lam'^4 f(lam v; lam' p, lam lam' l).

    Lambda becomes lam^2 Lambda and v_infinity becomes v_infinity / lam, so rho and
    Omega~^2 keep their node values.
    """
    if not (lam > 0 and lam_prime > 0):
        raise DomainError("scaling parameters must be positive")
    cosmo = Cosmology(cosmological_constant=data.cosmology.cosmological_constant * lam ** 2,
                      v_infinity=data.v_infinity / lam)
    profile = data.profile
    if isinstance(profile, EnsembleProfile):
        e = profile.ensemble.copy()
        e.v = e.v / lam
        e.g_u = e.g_u / lam_prime
        e.g_v = e.g_v / lam_prime
        e.l = e.l / (lam * lam_prime)
        e.f_value = e.f_value * lam ** 2 * lam_prime ** 4
        e.weight = e.weight * lam_prime / lam
        profile = EnsembleProfile(ensemble=e)
    elif profile is not None:
        profile = profile.rescaled(lam, lam_prime)
    v = data.v / lam
    v[-1] = cosmo.v_infinity
    return InitialDataSet(cosmology=cosmo, v=v, rho=data.rho.copy(), log_omega=data.log_omega.copy(),
                          drho_dv=data.drho_dv * lam, m_tilde=data.m_tilde / lam, profile=profile,
                          profile_v=data.profile_v / lam, gauge_tag=data.gauge_tag)
