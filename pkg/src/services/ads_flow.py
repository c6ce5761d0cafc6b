"""
Closed-form null geodesic flow on exact AdS with reflections off infinity,
and the freely streamed Vlasov field built on it.
"""

import logging
import math
from typing import Optional, Tuple

import numpy as np
from numpy.polynomial.legendre import leggauss

from src.config.settings import Settings, get_settings
from src.errors import DomainError, IntegrationError, ReflectionTimeError
from src.models.geometry import Cosmology
from src.models.matter import AdSGeodesic, VlasovProfile

logger = logging.getLogger(__name__)

HALF_PI = math.pi / 2
_BISECTION_STEPS = 64
_PHASE_TOL = 1e-13


def _reduced_phase(theta):
    """theta shifted into [-pi/2, pi/2]; sgn(cos theta) sin theta equals sin of the result."""
    return theta - math.pi * np.round(theta / math.pi)


class GeodesicBundle:
    """
    Vectorised closed-form trajectories sharing one length unit.

    Each trajectory is fixed by a reference time tau_ref, the phase ``omega`` at
    tau_ref, its energy E and c = sqrt(1 - l^2 / (k E)^2).
    """

    def __init__(self, tau_ref, omega, energy, l, length_unit: float):
        self.tau_ref = np.asarray(tau_ref, dtype=float)
        self.omega = np.asarray(omega, dtype=float)
        self.energy = np.asarray(energy, dtype=float)
        self.l = np.asarray(l, dtype=float)
        self.k = float(length_unit)
        s = self.l / (self.k * self.energy)
        self.c = np.sqrt(np.clip(1.0 - s * s, 0.0, 1.0))

    @classmethod
    def from_states(cls, u, v, g_u, g_v, l, length_unit: float) -> "GeodesicBundle":
        """Trajectories through (u, v) with momenta G^u = Omega^2 p^u, G^v = Omega^2 p^v on standard AdS."""
        u = np.asarray(u, dtype=float)
        v = np.asarray(v, dtype=float)
        g_u = np.asarray(g_u, dtype=float)
        g_v = np.asarray(g_v, dtype=float)
        energy = 0.5 * (g_u + g_v)
        if np.any(energy <= 0):
            raise DomainError("geodesic energy must be positive")
        bundle = cls(u + v, np.zeros_like(energy), energy, l, length_unit)
        rho = (v - u) / (2.0 * length_unit)
        c = np.maximum(bundle.c, np.finfo(float).tiny)
        bundle.omega = np.arctan2((g_u - g_v) * np.sin(rho) / (2.0 * energy * c), np.cos(rho) / c)
        return bundle

    @classmethod
    def from_geodesic(cls, g: AdSGeodesic) -> "GeodesicBundle":
        return cls(np.array([g.v0]), np.array([g.omega0]), np.array([g.E]), np.array([g.l]), g.length_unit)

    def phase(self, tau):
        return self.omega - (np.asarray(tau, dtype=float) - self.tau_ref) / (2.0 * self.k)

    def rho(self, tau):
        return np.arccos(np.clip(self.c * np.abs(np.cos(self.phase(tau))), 0.0, 1.0))

    def position(self, tau) -> Tuple[np.ndarray, np.ndarray]:
        tau = np.asarray(tau, dtype=float)
        kr = self.k * self.rho(tau)
        return 0.5 * tau - kr, 0.5 * tau + kr

    def momentum(self, tau, side: Optional[str] = None) -> Tuple[np.ndarray, np.ndarray]:
        """
        (G^u, G^v) at tau.

        Args:
            tau: Flow parameter u + v
            side: "before" or "after"; required only exactly at a reflection off
                infinity or an axis crossing of a radial ray

        Returns:
            The two momenta, summing to 2E
        """
        theta = _reduced_phase(self.phase(tau))
        rho = self.rho(tau)
        sin_rho = np.sin(rho)
        with np.errstate(divide="ignore", invalid="ignore"):
            slope = np.where(sin_rho > 0, self.c * np.sin(theta) / sin_rho, 0.0)
        at_scri = np.abs(np.abs(theta) - HALF_PI) < _PHASE_TOL
        at_axis = (self.l == 0.0) & (np.abs(theta) < _PHASE_TOL)
        singular = at_scri | at_axis
        if np.any(singular):
            if side not in ("before", "after"):
                raise ReflectionTimeError("momenta requested exactly at a reflection; pass side='before' or 'after'")
            # outgoing before an infinity reflection, ingoing before an axis crossing
            sign = -1.0 if side == "before" else 1.0
            slope = np.where(at_scri, sign * self.c, slope)
            slope = np.where(at_axis, -sign, slope)
        return self.energy * (1.0 + slope), self.energy * (1.0 - slope)

    def _bisect(self, target, lo, hi, coordinate: int):
        lo = np.array(lo, dtype=float)
        hi = np.array(hi, dtype=float)
        target = np.asarray(target, dtype=float)
        for _ in range(_BISECTION_STEPS):
            mid = 0.5 * (lo + hi)
            value = self.position(mid)[coordinate]
            below = value <= target
            lo = np.where(below, mid, lo)
            hi = np.where(below, hi, mid)
        return lo if coordinate == 0 else hi

    def tau_at_u(self, u_target):
        """Largest tau with U(tau) <= u_target (U is nondecreasing)."""
        u_target = np.broadcast_to(np.asarray(u_target, dtype=float), self.energy.shape)
        return self._bisect(u_target, 2.0 * u_target, 2.0 * u_target + self.k * math.pi, 0)

    def tau_at_v(self, v_target):
        """Smallest tau with V(tau) >= v_target (V is nondecreasing)."""
        v_target = np.broadcast_to(np.asarray(v_target, dtype=float), self.energy.shape)
        return self._bisect(v_target, 2.0 * v_target - self.k * math.pi, 2.0 * v_target, 1)


def make_geodesic(v0: float, E: float, l: float, sigma: int, cosmo: Cosmology) -> AdSGeodesic:
    """
    Geodesic leaving (0, v0) on the standard AdS chart.

    Args:
        v0: Initial advanced time in [0, k pi)
        E: Conserved energy (G^u + G^v) / 2
        l: Angular momentum
        sigma: +1 outgoing, -1 ingoing, 0 starting at the turning point
        cosmo: Cosmological constant

    Returns:
        The geodesic record with its phase, turning angle and first arrival at infinity
    """
    k = cosmo.length_unit
    if not 0.0 <= v0 < k * math.pi:
        raise DomainError(f"v0={v0} outside [0, k pi)")
    if E <= 0 or l < 0:
        raise DomainError("geodesics need E > 0 and l >= 0")
    s = l / (k * E)
    if s >= 1.0:
        raise DomainError("l / (k E) must be below 1")
    c = math.sqrt(1.0 - s * s)
    omega0 = 0.0
    if sigma != 0:
        ratio = math.cos(v0 / (2 * k)) / c
        if ratio > 1.0 + 1e-12:
            raise DomainError(f"no geodesic with l/E={l / E:.6g} passes through (0, {v0})")
        omega0 = -float(np.sign(sigma)) * math.acos(min(ratio, 1.0))
    return AdSGeodesic(v0=v0, E=E, l=l, sigma=int(np.sign(sigma)), length_unit=k, omega0=omega0,
                       rho_min=math.asin(s), tau_infinity=v0 + k * (2 * omega0 + math.pi))


def geodesic_from_state(u: float, v: float, g_u: float, g_v: float, l: float, cosmo: Cosmology) -> AdSGeodesic:
    """Geodesic through a phase-space point; the record's v0 is then the flow time u + v of that point."""
    k = cosmo.length_unit
    bundle = GeodesicBundle.from_states([u], [v], [g_u], [g_v], [l], k)
    omega0 = float(bundle.omega[0])
    E = 0.5 * (g_u + g_v)
    return AdSGeodesic(v0=u + v, E=E, l=l, sigma=int(np.sign(g_v - g_u)), length_unit=k, omega0=omega0,
                       rho_min=math.asin(min(l / (k * E), 1.0)), tau_infinity=u + v + k * (2 * omega0 + math.pi))


def _unwrap(tau, *arrays):
    if np.ndim(tau):
        return arrays if len(arrays) > 1 else arrays[0]
    values = tuple(float(a[0]) for a in arrays)
    return values if len(values) > 1 else values[0]


def geodesic_position(g: AdSGeodesic, tau):
    """(U, V) at tau, continuous across reflections; (kpi, kpi)-translated after each period 2 k pi."""
    u, v = GeodesicBundle.from_geodesic(g).position(np.atleast_1d(np.asarray(tau, dtype=float)))
    return _unwrap(tau, u, v)


def geodesic_momentum(g: AdSGeodesic, tau, side: Optional[str] = None):
    """(G^u, G^v) at tau; ``side`` selects the one-sided value at a reflection."""
    g_u, g_v = GeodesicBundle.from_geodesic(g).momentum(np.atleast_1d(np.asarray(tau, dtype=float)), side=side)
    return _unwrap(tau, g_u, g_v)


def geodesic_radius(g: AdSGeodesic, tau):
    rho = GeodesicBundle.from_geodesic(g).rho(np.atleast_1d(np.asarray(tau, dtype=float)))
    return _unwrap(tau, g.length_unit * np.tan(rho))


def small_l_asymptote(g: AdSGeodesic, tau):
    """
    Hyperbola approximation near a radial ray: U, V = tau/2 -/+ sqrt(eps^2 + d^2/4)
    with eps = l/E and d the flow time from the nearest turning point.
    """
    k = g.length_unit
    eps = g.l / g.E
    tau = np.asarray(tau, dtype=float)
    tau_vertex = g.v0 + 2 * k * g.omega0
    period = 2 * k * math.pi
    d = tau - tau_vertex - period * np.round((tau - tau_vertex) / period)
    w = np.sqrt(eps * eps + 0.25 * d * d)
    u, v = 0.5 * tau - w, 0.5 * tau + w
    if u.ndim:
        return u, v
    return float(u), float(v)


class FreeVlasovField:
    """
    Free solution of the massless Vlasov equation on standard AdS with data F(v; p^u, l) at u = 0.

    The stress components at a point integrate over log G^u with a composite
    Gauss rule and over l with a Gauss rule; each node is traced back along its
    closed-form geodesic to u = 0.
    """

    def __init__(self, profile: Optional[VlasovProfile], cosmo: Cosmology, settings: Optional[Settings] = None):
        self.settings = settings or get_settings()
        self.profile = profile
        self.k = cosmo.length_unit
        self._zero = profile is None or profile.is_zero
        if self._zero:
            return

        panels, per_panel, n_l = self.settings.quadrature_orders
        box = profile.support_box()
        k = self.k
        if not box.bounded or box.p_min <= 0 or box.v_min <= 0 or box.v_max >= k * math.pi:
            logger.error(f"Free field support is not bounded in phase space: {box}")
            raise IntegrationError("quadrature does not converge: profile support is unbounded in phase space")

        gu_max = box.p_max / math.cos(box.v_max / (2 * k)) ** 2
        gv_max = box.l_max ** 2 / (k * k * math.sin(box.v_min / (2 * k)) ** 2 * box.p_min)
        self.energy_max = 0.5 * (gu_max + gv_max)

        x, w = leggauss(per_panel)
        edges = np.linspace(0.0, 1.0, panels + 1)
        width = np.diff(edges)
        self._xi_unit = (edges[:-1, None] + 0.5 * width[:, None] * (x[None, :] + 1.0)).ravel()
        self._xi_weight = (0.5 * width[:, None] * w[None, :]).ravel()

        xl, wl = leggauss(n_l)
        half = 0.5 * (box.l_max - box.l_min)
        self._l = box.l_min + half * (xl + 1.0)
        self._l_weight = half * wl

    def stress(self, u: float, v: float) -> Tuple[float, float, float]:
        """
        (T_uu, T_uv, T_vv) at (u, v).

        Args:
            u: Retarded time (>= 0)
            v: Advanced time with u < v < u + k pi

        Returns:
            Nonnegative stress components
        """
        k = self.k
        if u < 0 or not u < v < u + k * math.pi:
            raise DomainError(f"point ({u}, {v}) lies outside the open AdS slab")
        if self._zero:
            return 0.0, 0.0, 0.0

        rho_p = (v - u) / (2 * k)
        r = k * math.tan(rho_p)
        a = self._l ** 2 / (k * k * math.sin(rho_p) ** 2)
        two_e = 2.0 * self.energy_max
        with np.errstate(divide="ignore"):
            xi_lo = np.where(a > 0, np.log(np.maximum(a, 1e-300) / two_e), math.log(two_e) - 60.0)
        xi_hi = np.full_like(xi_lo, math.log(two_e))
        span = np.maximum(xi_hi - xi_lo, 0.0)

        xi = xi_lo[:, None] + span[:, None] * self._xi_unit[None, :]
        g_u = np.exp(xi)
        g_v = a[:, None] / g_u
        l = np.broadcast_to(self._l[:, None], g_u.shape)
        weight = span[:, None] * self._xi_weight[None, :] * self._l_weight[:, None] * l

        bundle = GeodesicBundle.from_states(np.full(g_u.shape, u), np.full(g_u.shape, v), g_u, g_v, l, k)
        tau0 = bundle.tau_at_u(0.0) if u > 0 else np.full(g_u.shape, u + v)
        _, v0 = bundle.position(tau0)
        g_u0, _ = bundle.momentum(tau0, side="after")
        p0 = g_u0 * np.cos(v0 / (2 * k)) ** 2
        f = self.profile.evaluate(v0, p0, l)

        scale = 0.5 * math.pi / (r * r)
        t_vv = scale * float(np.sum(weight * f * g_u * g_u))
        t_uv = scale * float(np.sum(weight * f * g_u * g_v))
        t_uu = scale * float(np.sum(weight * f * g_v * g_v))
        return t_uu, t_uv, t_vv


def free_vlasov_T(profile: Optional[VlasovProfile], point: Tuple[float, float], cosmo: Cosmology,
                  settings: Optional[Settings] = None) -> Tuple[float, float, float]:
    """(T_uu, T_uv, T_vv) of the freely streamed field at ``point`` = (u, v)."""
    return FreeVlasovField(profile, cosmo, settings).stress(*point)
