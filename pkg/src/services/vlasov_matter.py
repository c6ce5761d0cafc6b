"""
Macro-particle Vlasov matter: sampling, geodesic transport, reflection and deposition.
"""

import logging
import math
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.interpolate import CubicSpline

from src.config.settings import Settings, get_settings
from src.errors import DomainError, IntegrationError
from src.models.data import InitialDataSet
from src.models.matter import (
    CurrentBand,
    EnergyMomentumGrid,
    EnsembleProfile,
    Particle,
    ParticleCurrentGrid,
    ParticleEnsemble,
)

logger = logging.getLogger(__name__)

HALF_PI = math.pi / 2
_SNAP_ITERATIONS = 4
_EVENT_TOL = 1e-13
_MAX_PUSH_STEPS = 1_000_000


# Sampling

def support_interval(data: InitialDataSet) -> Optional[Tuple[float, float]]:
    """The v-interval of the data line carrying matter, or None when it is empty."""
    if data.is_trivial:
        return None
    if isinstance(data.profile, EnsembleProfile):
        v = data.profile.ensemble.v
        return (float(np.min(v)), float(np.max(v))) if v.size else None
    if not np.all(np.diff(data.profile_v) > 0):
        raise DomainError("profile coordinate must increase along the data")
    box = data.profile.support_box()
    v_lo = max(float(np.interp(box.v_min, data.profile_v, data.v)), 0.0)
    v_hi = min(float(np.interp(box.v_max, data.profile_v, data.v)), data.v_infinity)
    return (v_lo, v_hi) if v_hi > v_lo else None


def sample_ensemble(data: InitialDataSet, counts: Tuple[int, int, int],
                    settings: Optional[Settings] = None) -> ParticleEnsemble:
    """
    Tensor-product Gauss-Legendre macro-particles on u = 0.

    Nodes run over the support box in (v, q, l) with q the gauge-invariant momentum;
    each particle carries the count f dG^u l dl dv of its node and nodes with f = 0
    are dropped.

    Args:
        data: Initial data set
        counts: Nodes in (v, q, l)
        settings: Run settings

    Returns:
        The ensemble (empty for trivial data)
    """
    if data.is_trivial:
        return ParticleEnsemble.empty()
    if isinstance(data.profile, EnsembleProfile):
        e = data.profile.ensemble.copy()
        e.u = np.zeros_like(e.u)
        return e

    profile = data.profile
    box = profile.support_box()
    k = data.length_unit
    interval = support_interval(data)
    if interval is None:
        return ParticleEnsemble.empty()
    v_lo, v_hi = interval

    n_v, n_q, n_l = counts
    xv, wv = leggauss(n_v)
    xq, wq = leggauss(n_q)
    xl, wl = leggauss(n_l)
    v_nodes = v_lo + 0.5 * (v_hi - v_lo) * (xv + 1.0)
    v_weights = 0.5 * (v_hi - v_lo) * wv
    q_nodes = box.p_min + 0.5 * (box.p_max - box.p_min) * (xq + 1.0)
    q_weights = 0.5 * (box.p_max - box.p_min) * wq
    l_nodes = box.l_min + 0.5 * (box.l_max - box.l_min) * (xl + 1.0)
    l_weights = 0.5 * (box.l_max - box.l_min) * wl

    rho = CubicSpline(data.v, data.rho)(v_nodes)
    omega = np.exp(CubicSpline(data.v, data.log_omega)(v_nodes))
    scale = 4.0 * k * CubicSpline(data.v, data.drho_dv)(v_nodes)
    profile_v = CubicSpline(data.v, data.profile_v)(v_nodes)

    V, Q, L = np.meshgrid(np.arange(n_v), np.arange(n_q), np.arange(n_l), indexing="ij")
    V, Q, L = V.ravel(), Q.ravel(), L.ravel()
    q = q_nodes[Q]
    l = l_nodes[L]
    f = profile.evaluate(profile_v[V], q, l)
    keep = f > 0
    V, q, l, f = V[keep], q[keep], l[keep], f[keep]
    g_u = scale[V] * q
    g_v = omega[V] * l * l / ((k * np.sin(rho[V])) ** 2 * g_u)
    weight = f * v_weights[V] * q_weights[Q[keep]] * scale[V] * l_weights[L[keep]] * l
    ensemble = ParticleEnsemble(u=np.zeros_like(g_u), v=v_nodes[V], g_u=g_u, g_v=g_v, l=l, f_value=f,
                                weight=weight, reflections=np.zeros(g_u.size, dtype=np.int64))
    logger.info(f"Sampled {len(ensemble)} particles from counts {tuple(counts)}")
    return ensemble


# Fields seen by the pusher

@dataclass
class FieldValues:
    """Renormalised metric and first derivatives at particle positions."""

    rho: np.ndarray
    log_omega: np.ndarray
    dv_rho: np.ndarray
    du_rho: np.ndarray
    dv_log_omega: np.ndarray
    du_log_omega: np.ndarray


class AdSStencil:
    """Exact (rescaled) AdS: rho = s (v - u) / 2k and Omega~^2 = s^2 with s = k pi / v_infinity."""

    def __init__(self, length_unit: float, v_infinity: float):
        self.k = length_unit
        self.v_infinity = v_infinity
        self.s = length_unit * math.pi / v_infinity

    def sample(self, u: np.ndarray, v: np.ndarray) -> FieldValues:
        x = np.clip(np.asarray(v, dtype=float) - np.asarray(u, dtype=float), 0.0, self.v_infinity)
        slope = np.full_like(x, self.s / (2.0 * self.k))
        zero = np.zeros_like(x)
        return FieldValues(rho=np.minimum(self.s * x / (2.0 * self.k), HALF_PI),
                           log_omega=np.full_like(x, 2.0 * math.log(self.s)),
                           dv_rho=slope, du_rho=-slope, dv_log_omega=zero, du_log_omega=zero.copy())


class SliceFields:
    """rho and log Omega~^2 on one outgoing slice with their x-derivatives (x = v - u)."""

    def __init__(self, u: float, x: np.ndarray, rho: np.ndarray, log_omega: np.ndarray,
                 drho: Optional[np.ndarray] = None):
        self.u = u
        self.x = x
        self.rho = rho
        self.log_omega = log_omega
        self.drho = np.gradient(rho, x, edge_order=2) if drho is None else drho
        self.dlog_omega = np.gradient(log_omega, x, edge_order=2)


class SliceStencil:
    """
    Metric on a single slice with d_u rho supplied by the caller.

    One slice carries no u-derivative of log Omega~^2, so that entry is zero;
    the stencil serves the support functional and dumps, not the pusher.
    """

    def __init__(self, fields: SliceFields, du_rho: np.ndarray):
        self.fields = fields
        self.du_rho = du_rho

    def sample(self, u: np.ndarray, v: np.ndarray) -> FieldValues:
        f = self.fields
        x = np.clip(np.asarray(v, dtype=float) - np.asarray(u, dtype=float), 0.0, float(f.x[-1]))
        return FieldValues(rho=np.interp(x, f.x, f.rho), log_omega=np.interp(x, f.x, f.log_omega),
                           dv_rho=np.interp(x, f.x, f.drho), du_rho=np.interp(x, f.x, self.du_rho),
                           dv_log_omega=np.interp(x, f.x, f.dlog_omega), du_log_omega=np.zeros_like(x))


class StripField:
    """
    Metric between two slices u0 and u0 + h: linear in s = (u - u0)/h and in x.

    d_v = d_x at fixed u, and d_u at fixed v is d_u at fixed x minus d_x.
    """

    def __init__(self, old: SliceFields, new: SliceFields):
        self.old = old
        self.new = new
        self.h = new.u - old.u
        self.v_infinity = float(old.x[-1])

    def sample(self, u: np.ndarray, v: np.ndarray) -> FieldValues:
        u = np.asarray(u, dtype=float)
        x = np.clip(np.asarray(v, dtype=float) - u, 0.0, self.v_infinity)
        s = np.clip((u - self.old.u) / self.h, 0.0, 1.0) if self.h > 0 else np.zeros_like(u)
        o, n = self.old, self.new

        def blend(a: np.ndarray, b: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
            fa = np.interp(x, o.x, a)
            fb = np.interp(x, n.x, b)
            return fa, fb, (1.0 - s) * fa + s * fb

        rho0, rho1, rho = blend(o.rho, n.rho)
        lw0, lw1, lw = blend(o.log_omega, n.log_omega)
        drho = blend(o.drho, n.drho)[2]
        dlw = blend(o.dlog_omega, n.dlog_omega)[2]
        du_rho_x = (rho1 - rho0) / self.h if self.h > 0 else np.zeros_like(x)
        du_lw_x = (lw1 - lw0) / self.h if self.h > 0 else np.zeros_like(x)
        return FieldValues(rho=np.clip(rho, 0.0, HALF_PI), log_omega=lw, dv_rho=drho, du_rho=du_rho_x - drho,
                           dv_log_omega=dlw, du_log_omega=du_lw_x - dlw)


# Transport

def shell_target(fields: FieldValues, l: np.ndarray, length_unit: float) -> np.ndarray:
    """G^u G^v = l^2 Omega~^2 / (k^2 sin^2 rho) on the mass shell."""
    sin = np.sin(fields.rho)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(l > 0, l * l * np.exp(fields.log_omega) / (length_unit * sin) ** 2, 0.0)


def mass_shell_defect(ensemble: ParticleEnsemble, field, length_unit: float) -> np.ndarray:
    """Relative defect |G^u G^v - target| / (G^u + G^v)^2."""
    fields = field.sample(ensemble.u, ensemble.v)
    target = shell_target(fields, ensemble.l, length_unit)
    return np.abs(ensemble.g_u * ensemble.g_v - target) / (ensemble.g_u + ensemble.g_v) ** 2


class Pusher:
    """
    Geodesic transport in tau = u + v with per-step mass-shell projection.

    du/dtau = G^u / (G^u + G^v) and
    dG^u/dtau = l^2 Omega~^2 (d_v log Omega~^2 - 2 cot rho d_v rho) / (k^2 sin^2 rho (G^u + G^v)),
    with u and v exchanged for G^v.
    """

    def __init__(self, length_unit: float, v_infinity: float, h: float, settings: Optional[Settings] = None):
        self.settings = settings or get_settings()
        self.k = length_unit
        self.v_infinity = v_infinity
        self.h = h
        self.order = self.settings.push_order

    def _rates(self, field, u, v, g_u, g_v, l):
        fields = field.sample(u, v)
        total = g_u + g_v
        sin = np.sin(fields.rho)
        with np.errstate(divide="ignore", invalid="ignore"):
            cot = np.where(sin > 0, np.cos(fields.rho) / sin, 0.0)
            coeff = np.where(l > 0, l * l * np.exp(fields.log_omega) / ((self.k * sin) ** 2 * total), 0.0)
        dg_u = coeff * (fields.dv_log_omega - 2.0 * cot * fields.dv_rho)
        dg_v = coeff * (fields.du_log_omega - 2.0 * cot * fields.du_rho)
        return g_u / total, g_v / total, dg_u, dg_v

    def _step(self, field, state, l, dtau):
        u, v, g_u, g_v = state
        if self.order == 4:
            k1 = self._rates(field, u, v, g_u, g_v, l)
            y2 = [a + 0.5 * dtau * b for a, b in zip(state, k1)]
            k2 = self._rates(field, *y2, l)
            y3 = [a + 0.5 * dtau * b for a, b in zip(state, k2)]
            k3 = self._rates(field, *y3, l)
            y4 = [a + dtau * b for a, b in zip(state, k3)]
            k4 = self._rates(field, *y4, l)
            new = [a + dtau * (b1 + 2 * b2 + 2 * b3 + b4) / 6.0 for a, b1, b2, b3, b4 in zip(state, k1, k2, k3, k4)]
        else:
            k1 = self._rates(field, u, v, g_u, g_v, l)
            mid = [a + 0.5 * dtau * b for a, b in zip(state, k1)]
            k2 = self._rates(field, *mid, l)
            new = [a + dtau * b for a, b in zip(state, k2)]
        # tau = u + v advances exactly
        new[1] = u + v + dtau - new[0]
        return self._project(field, new, l)

    def _project(self, field, state, l):
        u, v, g_u, g_v = state
        g_u = np.maximum(g_u, 0.0)
        g_v = np.maximum(g_v, 0.0)
        target = shell_target(field.sample(u, v), l, self.k)
        product = g_u * g_v
        with np.errstate(divide="ignore", invalid="ignore"):
            factor = np.where((l > 0) & (product > 0), np.sqrt(target / product), 1.0)
        return [u, v, g_u * factor, g_v * factor]

    def advance_to_u(self, ensemble: ParticleEnsemble, field, u_target: float) -> ParticleEnsemble:
        """Push every particle to the slice u = u_target, reflecting off infinity and the axis on the way."""
        return self._advance(ensemble, field, u_target=u_target)

    def advance_by_tau(self, ensemble: ParticleEnsemble, field, dtau: float) -> ParticleEnsemble:
        """Push every particle by the same flow time dtau."""
        return self._advance(ensemble, field, tau_target=ensemble.u + ensemble.v + dtau)

    def _advance(self, ensemble: ParticleEnsemble, field, u_target: Optional[float] = None,
                 tau_target: Optional[np.ndarray] = None) -> ParticleEnsemble:
        out = ensemble.copy()
        if len(out) == 0:
            return out
        v_inf = self.v_infinity
        cap = self.settings.push_dtau_fraction * self.h
        axis_fraction = self.settings.push_axis_fraction

        def remaining(u, v, idx):
            if u_target is not None:
                return u_target - u
            return tau_target[idx] - (u + v)

        active = np.nonzero(remaining(out.u, out.v, np.arange(len(out))) > _EVENT_TOL)[0]
        steps = 0
        while active.size:
            steps += 1
            if steps > _MAX_PUSH_STEPS:
                raise IntegrationError("particle push did not reach its target")
            state = [out.u[active], out.v[active], out.g_u[active], out.g_v[active]]
            l = out.l[active]
            u, v, g_u, g_v = state
            total = g_u + g_v
            x = v - u

            dtau = np.full(active.size, cap)
            dtau = np.where(l > 0, np.minimum(dtau, np.maximum(axis_fraction * x, 1e-6 * self.h)), dtau)
            with np.errstate(divide="ignore", invalid="ignore"):
                du_rate = g_u / total
                dx_rate = (g_v - g_u) / total
                if u_target is not None:
                    to_target = np.where(du_rate > 0, (u_target - u) / du_rate, np.inf)
                else:
                    to_target = tau_target[active] - (u + v)
                to_scri = np.where(dx_rate > 0, (v_inf - x) / dx_rate, np.inf)
                to_axis = np.where((l == 0) & (dx_rate < 0), x / -dx_rate, np.inf)
            estimates = np.stack([to_target, to_scri, to_axis])
            event = np.argmin(estimates, axis=0)
            first = estimates[event, np.arange(active.size)]
            hits = first <= dtau
            dtau = np.where(hits, first, dtau)

            new = self._step(field, state, l, dtau)
            if np.any(hits):
                new = self._land(field, state, new, l, dtau, hits, event, u_target, tau_target, active)

            nu, nv, ngu, ngv = new
            if not (np.all(np.isfinite(nu)) and np.all(np.isfinite(ngu)) and np.all(np.isfinite(ngv))):
                raise IntegrationError("non-finite particle state during push")

            scri = hits & (event == 1)
            axis = hits & (event == 2)
            swap = scri | axis
            ngu, ngv = np.where(swap, ngv, ngu), np.where(swap, ngu, ngv)
            out.u[active], out.v[active] = nu, nv
            out.g_u[active], out.g_v[active] = ngu, ngv
            out.reflections[active] += scri.astype(np.int64)

            done = hits & (event == 0)
            still = remaining(nu, nv, active) > _EVENT_TOL
            active = active[~done & still]
        return out

    def _land(self, field, state, new, l, dtau, hits, event, u_target, tau_target, active):
        """Secant re-steps so that event particles land exactly on their event line, then snap."""
        idx = np.nonzero(hits)[0]
        sub_state = [a[idx] for a in state]
        sub_l = l[idx]
        sub_event = event[idx]
        u0, v0 = sub_state[0], sub_state[1]
        tau0 = u0 + v0

        def defect(u, v):
            x = v - u
            if u_target is not None:
                d_target = u - u_target
            else:
                d_target = u + v - tau_target[active[idx]]
            return np.select([sub_event == 0, sub_event == 1], [d_target, x - self.v_infinity], x)

        e0 = defect(u0, v0)
        step = dtau[idx]
        result = self._step(field, sub_state, sub_l, step)
        for _ in range(_SNAP_ITERATIONS):
            e1 = defect(result[0], result[1])
            if np.all(np.abs(e1) < _EVENT_TOL):
                break
            denom = e1 - e0
            with np.errstate(divide="ignore", invalid="ignore"):
                step = np.where(np.abs(denom) > 0, step * (-e0) / denom, step)
            step = np.maximum(step, 0.0)
            result = self._step(field, sub_state, sub_l, step)

        tau = tau0 + step
        u_new, v_new = result[0], result[1]
        target_u = u_target if u_target is not None else None
        on_target = sub_event == 0
        if target_u is not None:
            u_new = np.where(on_target, target_u, u_new)
            v_new = np.where(on_target, tau - target_u, v_new)
        else:
            tau = np.where(on_target, tau_target[active[idx]], tau)
            v_new = np.where(on_target, tau - u_new, v_new)
        on_scri = sub_event == 1
        u_new = np.where(on_scri, 0.5 * (tau - self.v_infinity), u_new)
        v_new = np.where(on_scri, 0.5 * (tau + self.v_infinity), v_new)
        on_axis = sub_event == 2
        u_new = np.where(on_axis, 0.5 * tau, u_new)
        v_new = np.where(on_axis, 0.5 * tau, v_new)
        landed = self._project(field, [u_new, v_new, result[2], result[3]], sub_l)

        merged = [a.copy() for a in new]
        for i in range(4):
            merged[i][idx] = landed[i]
        dtau[idx] = step
        return merged


def push(particle: Particle, field, d_tau: float, length_unit: float, v_infinity: float,
         settings: Optional[Settings] = None) -> Particle:
    """
    One pusher step of a single particle.

    Raises:
        DomainError: when the step would leave the slab through infinity (reflect first)
    """
    if d_tau == 0:
        return particle
    settings = settings or get_settings()
    fields = field.sample(np.array([particle.u]), np.array([particle.v]))
    omega_sq = np.exp(fields.log_omega) / np.cos(fields.rho) ** 2
    state = [np.array([particle.u]), np.array([particle.v]),
             particle.p_u * omega_sq, particle.p_v * omega_sq]
    l = np.array([particle.l])
    pusher = Pusher(length_unit, v_infinity, abs(d_tau), settings)
    u, v, g_u, g_v = pusher._step(field, state, l, np.array([d_tau]))
    if v[0] - u[0] > v_infinity * (1 + 1e-12):
        raise DomainError("step crosses infinity; reflect the particle first")
    if v[0] - u[0] < 0:
        raise DomainError("step crosses the axis")
    new_fields = field.sample(u, v)
    new_omega_sq = np.exp(new_fields.log_omega) / np.cos(new_fields.rho) ** 2
    return particle.model_copy(update={"u": float(u[0]), "v": float(v[0]),
                                       "p_u": float(g_u[0] / new_omega_sq[0]),
                                       "p_v": float(g_v[0] / new_omega_sq[0])})


def reflect_at_infinity(particle: Particle, v_infinity: float, tol: float = 1e-9) -> Particle:
    """Swap r^2 p^u and r^2 p^v of a particle sitting on infinity; l and f are untouched."""
    if abs(particle.v - particle.u - v_infinity) > tol * max(1.0, v_infinity):
        logger.error(f"Reflection requested away from infinity at ({particle.u}, {particle.v})")
        raise DomainError("particle is not on infinity")
    return particle.model_copy(update={"p_u": particle.p_v, "p_v": particle.p_u,
                                       "reflections": particle.reflections + 1})


def reflect_ensemble(ensemble: ParticleEnsemble, mask: np.ndarray) -> ParticleEnsemble:
    """Swap G^u and G^v of the masked particles (which must sit on infinity)."""
    out = ensemble.copy()
    out.g_u[mask], out.g_v[mask] = ensemble.g_v[mask], ensemble.g_u[mask]
    out.reflections[mask] += 1
    return out


# Deposition

def deposit_on_line(positions: np.ndarray, g_u: np.ndarray, g_v: np.ndarray, weight: np.ndarray,
                    n_cells: int, h: float):
    """
    Hat-kernel deposition onto nodes x_j = j h, j = 0..n_cells.

    Returns:
        (tau_uu, tau_uv, tau_vv, r^2 N_u, r^2 N_v)
    """
    n = n_cells + 1
    out = [np.zeros(n) for _ in range(5)]
    if positions.size == 0:
        return tuple(out)
    pos = np.clip(positions / h, 0.0, float(n_cells))
    j = np.minimum(np.floor(pos).astype(np.int64), n_cells - 1)
    frac = pos - j
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(g_u > 0, g_v / g_u, 0.0)
    values = (0.5 * math.pi * g_v * ratio * weight,
              0.5 * math.pi * g_v * weight,
              0.5 * math.pi * g_u * weight,
              math.pi * ratio * weight,
              math.pi * weight)
    for target, value in zip(out, values):
        np.add.at(target, j, value * (1.0 - frac))
        np.add.at(target, j + 1, value * frac)
        target /= h
        # half-width control volumes at the two ends
        target[0] *= 2.0
        target[-1] *= 2.0
    return tuple(out)


def deposit(ensemble: ParticleEnsemble, u: float, x_nodes: np.ndarray, field,
            length_unit: float, l_bands: Sequence[float] = ()) -> Tuple[EnergyMomentumGrid, ParticleCurrentGrid, float]:
    """
    Deposit an ensemble sitting on the slice u onto its nodes.

    Args:
        ensemble: Particles on the slice
        u: Slice retarded time
        x_nodes: Node offsets v - u
        field: Stencil used for the support functional
        length_unit: k
        l_bands: Band edges for reduced currents

    Returns:
        Stress grid, current grid and the support functional sup k(-d_u rho G^u + d_v rho G^v)/Omega~^2
    """
    n_cells = x_nodes.size - 1
    h = float(x_nodes[1] - x_nodes[0])
    x = ensemble.v - ensemble.u
    tau_uu, tau_uv, tau_vv, n_u, n_v = deposit_on_line(x, ensemble.g_u, ensemble.g_v, ensemble.weight, n_cells, h)
    bands = []
    edges = list(l_bands)
    for lo, hi in zip(edges[:-1], edges[1:]):
        mask = (ensemble.l >= lo) & (ensemble.l < hi)
        _, _, _, bu, bv = deposit_on_line(x[mask], ensemble.g_u[mask], ensemble.g_v[mask],
                                          ensemble.weight[mask], n_cells, h)
        bands.append(CurrentBand(l_low=lo, l_high=hi, n_u=bu, n_v=bv))

    support = support_functional(ensemble, field, length_unit)
    stress = EnergyMomentumGrid(u=u, x=x_nodes, tau_uu=tau_uu, tau_uv=tau_uv, tau_vv=tau_vv)
    currents = ParticleCurrentGrid(u=u, x=x_nodes, n_u=n_u, n_v=n_v, bands=bands,
                                   total_number=math.pi * ensemble.total_weight)
    return stress, currents, support


def support_functional(ensemble: ParticleEnsemble, field, length_unit: float) -> float:
    """sup over particles of (-d_u r) p^u + (d_v r) p^v, i.e. k (-d_u rho G^u + d_v rho G^v) / Omega~^2."""
    if len(ensemble) == 0:
        return 0.0
    fields = field.sample(ensemble.u, ensemble.v)
    functional = length_unit * (-fields.du_rho * ensemble.g_u + fields.dv_rho * ensemble.g_v) / np.exp(fields.log_omega)
    return float(np.max(functional))
