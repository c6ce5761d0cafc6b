"""
Double-null characteristic evolution of the spherically symmetric Einstein-Vlasov system.

Slices u = n h are marched diamond by diamond; particles are pushed through each
strip between slices and their deposited stress feeds the next pass.
"""

import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, List, Optional, Tuple

import numpy as np
from scipy.integrate import trapezoid

from src.config.settings import Settings, get_settings
from src.errors import AdsNullError, AxisRegularityError, IntegrationError, TrappedSliceError
from src.models.data import InitialDataSet
from src.models.geometry import Cosmology, DiagonalGrid
from src.models.matter import ParticleCurrentGrid, ParticleEnsemble
from src.models.responses import MonitorVerdict, RunSummary, SliceRecord
from src.services.data_io import write_grid_csv, write_particle_csv
from src.services.geometry_core import safe_ratio
from src.services.initial_data import gauge_normalize, resample_data
from src.services.vlasov_matter import (
    Pusher,
    SliceFields,
    SliceStencil,
    StripField,
    deposit,
    mass_shell_defect,
    sample_ensemble,
    support_functional,
    support_interval,
)

logger = logging.getLogger(__name__)

HALF_PI = math.pi / 2
FOUR_PI = 4.0 * math.pi
_AXIS_TOL = 1e-10
_HISTORY = 2


@dataclass
class SliceState:
    """Renormalised fields and deposited matter on one outgoing slice u = const."""

    u: float
    x: np.ndarray
    rho: np.ndarray
    log_omega: np.ndarray
    m_tilde: np.ndarray
    dv_rho: np.ndarray
    tau_uu: np.ndarray
    tau_uv: np.ndarray
    tau_vv: np.ndarray
    length_unit: float
    currents: Optional[ParticleCurrentGrid] = None
    support: float = 0.0
    mu3_axis: float = 0.0
    t_axis: float = 0.0
    m_tilde_scri_ode: float = 0.0

    @property
    def n(self) -> int:
        return self.x.size - 1

    @property
    def omega_tilde_sq(self) -> np.ndarray:
        return np.exp(self.log_omega)

    @property
    def r(self) -> np.ndarray:
        r = self.length_unit * np.tan(self.rho)
        r[0], r[-1] = 0.0, np.inf
        return r

    @property
    def omega_sq(self) -> np.ndarray:
        out = self.omega_tilde_sq / np.cos(self.rho) ** 2
        out[-1] = np.inf
        return out

    @property
    def ratio(self) -> np.ndarray:
        """q = 2 m~ cos^3 rho / (k sin rho); 1 - 2m/r = sec^2 rho (1 - q)."""
        q = safe_ratio(2.0 * self.m_tilde * np.cos(self.rho) ** 3, self.length_unit * np.sin(self.rho))
        q[-1] = 0.0
        return q

    @property
    def du_rho(self) -> np.ndarray:
        """d_u rho recovered from q = 1 + 4 k^2 d_u rho d_v rho / Omega~^2."""
        return -safe_ratio((1.0 - self.ratio) * self.omega_tilde_sq, 4.0 * self.length_unit ** 2 * self.dv_rho)

    @property
    def mu(self) -> np.ndarray:
        """2m/r, -inf on infinity."""
        out = self.ratio / np.cos(self.rho) ** 2 - np.tan(self.rho) ** 2
        out[-1] = -np.inf
        return out

    @property
    def mu_tilde(self) -> np.ndarray:
        """2m~/r, zero on the axis and on infinity."""
        out = safe_ratio(2.0 * self.m_tilde, self.length_unit * np.tan(self.rho))
        out[0] = out[-1] = 0.0
        return out

    def fields(self) -> SliceFields:
        return SliceFields(self.u, self.x, self.rho, self.log_omega, drho=self.dv_rho)

    def stencil(self) -> SliceStencil:
        return SliceStencil(self.fields(), self.du_rho)


@dataclass
class SolverState:
    """Everything the controller carries from one slice to the next."""

    cosmology: Cosmology
    grid: DiagonalGrid
    slice: SliceState
    ensemble: ParticleEnsemble
    step_index: int = 0
    history: List[SliceState] = field(default_factory=list)
    m_tilde_scri: float = 0.0
    m_tilde_scri_drift: float = 0.0
    support_initial: float = 0.0
    delta0: float = 1.0 / 3.0
    verdict: MonitorVerdict = field(default_factory=lambda: MonitorVerdict(kind="running"))
    scri_u: List[float] = field(default_factory=list)
    scri_omega: List[float] = field(default_factory=list)
    residual_v: float = 0.0
    residual_u: Optional[float] = None
    max_residual_v: float = 0.0
    max_residual_u: float = 0.0
    outgoing_integral: float = 0.0
    sup_outgoing_integral: float = 0.0
    ingoing_integrals: np.ndarray = field(default_factory=lambda: np.zeros(0))
    ingoing_last: np.ndarray = field(default_factory=lambda: np.zeros(0))
    sup_mu_tilde: float = 0.0

    @property
    def u(self) -> float:
        return self.slice.u

    @property
    def support_growth(self) -> float:
        if self.support_initial <= 0:
            return 0.0
        return self.slice.support / self.support_initial


@dataclass
class RunResult:
    """Outcome of an evolution."""

    summary: RunSummary
    records: List[SliceRecord]
    state: SolverState


SliceCallback = Callable[[SliceRecord, SolverState], None]


class CharacteristicSolver:
    """Marches asymptotically AdS data in retarded time with a reflecting boundary at infinity."""

    def __init__(self, settings: Optional[Settings] = None):
        self.settings = settings or get_settings()

    # Set-up

    def initial_state(self, data: InitialDataSet) -> SolverState:
        """
        Slice u = 0 from the data, the sampled ensemble and its deposited stress.

        The data is gauge-normalised first when needed so that infinity sits on x = v_infinity.
        """
        if data.gauge_tag != "normalised":
            logger.info("Normalising the data gauge before evolution")
            data, _ = gauge_normalize(data, self.settings)

        n = self.settings.n_per_slab
        grid = DiagonalGrid(v_infinity=data.v_infinity, n_per_slab=n, u_end=self.settings.target_u)
        if data.n % n == 0:
            stride = data.n // n
            coarse = data
            take = slice(None, None, stride)
        else:
            logger.info(f"Resampling data from {data.n} to {n} cells")
            coarse = resample_data(data, n)
            take = slice(None)
        k = data.length_unit
        x = coarse.v[take].copy()
        zero = np.zeros_like(x)
        slice0 = SliceState(u=0.0, x=x, rho=coarse.rho[take].copy(), log_omega=coarse.log_omega[take].copy(),
                            m_tilde=coarse.m_tilde[take].copy(), dv_rho=coarse.drho_dv[take].copy(),
                            tau_uu=zero, tau_uv=zero.copy(), tau_vv=zero.copy(), length_unit=k)

        ensemble = sample_ensemble(data, self.particle_counts(data, grid.h), self.settings)
        if len(ensemble):
            stress, currents, _ = deposit(ensemble, 0.0, x, slice0.stencil(), k, self.settings.l_bands)
            slice0 = self._with_stress(slice0, stress, currents)
        slice0 = self.apply_axis_bc(slice0)
        slice0 = replace(slice0, m_tilde_scri_ode=float(slice0.m_tilde[-1]),
                         support=support_functional(ensemble, slice0.stencil(), k))

        n_lines = grid.n_steps + n + 1
        state = SolverState(
            cosmology=data.cosmology, grid=grid, slice=slice0, ensemble=ensemble,
            m_tilde_scri=float(slice0.m_tilde[-1]), support_initial=slice0.support,
            delta0=self.settings.resolved_delta0(ensemble.min_l),
            scri_u=[0.0], scri_omega=[float(slice0.omega_tilde_sq[-1])],
            ingoing_integrals=np.zeros(n_lines), ingoing_last=np.full(n_lines, np.nan),
        )
        state = self._bookkeeping(state, slice0)
        state = replace(state, verdict=self.monitors(state))
        logger.info(f"Initial slice: {n} cells, {len(ensemble)} particles, m~(infinity)={state.m_tilde_scri:.6g}")
        return state

    def particle_counts(self, data: InitialDataSet, h: float) -> Tuple[int, int, int]:
        """Sampling counts with the v count raised to ``particles_per_cell`` nodes per cell of the support."""
        n_v, n_q, n_l = self.settings.particle_counts
        per_cell = self.settings.particles_per_cell
        interval = support_interval(data) if per_cell > 0 else None
        if interval is not None:
            n_v = max(n_v, math.ceil(per_cell * (interval[1] - interval[0]) / h))
        return n_v, n_q, n_l

    @staticmethod
    def _with_stress(s: SliceState, stress, currents) -> SliceState:
        tau_uu, tau_uv, tau_vv = stress.tau_uu.copy(), stress.tau_uv.copy(), stress.tau_vv.copy()
        tau_uu[0] = tau_uv[0] = tau_vv[0] = 0.0
        return replace(s, tau_uu=tau_uu, tau_uv=tau_uv, tau_vv=tau_vv, currents=currents)

    # Stepping

    def step(self, state: SolverState) -> SolverState:
        """
        Advance one slice: march the metric, push and deposit, iterate, apply boundary conditions.

        Failures inside the step become a verdict; the input state is never modified.
        """
        old = state.slice
        h = state.grid.h
        u_new = old.u + h
        try:
            new, ensemble = self._advance(state, u_new)
        except TrappedSliceError as e:
            u_loc, v_loc = e.location if e.location else (u_new, None)
            if e.value is None or not e.value > 1.0:
                logger.error(f"d_v r failed at u={u_new:.6g} without a trapped sphere (2m/r={e.value}): {str(e)}")
                return replace(state, verdict=MonitorVerdict(kind="numerical_failure", u=u_loc, v=v_loc,
                                                             value=e.value, message=str(e)))
            logger.error(f"Trapping reached while marching slice u={u_new:.6g}: 2m/r={e.value:.6g}")
            return replace(state, verdict=MonitorVerdict(kind="trapped_sphere", u=u_loc, v=v_loc, value=e.value,
                                                         message=str(e)))
        except (AdsNullError, ArithmeticError, ValueError) as e:
            logger.error(f"Step to u={u_new:.6g} failed: {str(e)}")
            return replace(state, verdict=MonitorVerdict(kind="numerical_failure", u=u_new, message=str(e)))

        history = (state.history + [old])[-_HISTORY:]
        next_state = replace(state, slice=new, ensemble=ensemble, step_index=state.step_index + 1, history=history,
                             scri_u=state.scri_u + [u_new],
                             scri_omega=state.scri_omega + [float(new.omega_tilde_sq[-1])],
                             m_tilde_scri_drift=max(state.m_tilde_scri_drift,
                                                    abs(new.m_tilde_scri_ode - state.m_tilde_scri)),
                             ingoing_integrals=state.ingoing_integrals.copy(),
                             ingoing_last=state.ingoing_last.copy())
        next_state = self._bookkeeping(next_state, new)
        verdict = self.monitors(next_state)
        logger.debug(f"Step {next_state.step_index}: u={u_new:.6g}, verdict={verdict.kind}")
        return replace(next_state, verdict=verdict)

    def _advance(self, state: SolverState, u_new: float):
        old = state.slice
        older = state.history[-1] if state.history else None
        k = old.length_unit
        h = state.grid.h
        x = old.x
        has_matter = len(state.ensemble) > 0
        passes = self.settings.corrector_depth if has_matter else 1
        pusher = Pusher(k, state.grid.v_infinity, h, self.settings)

        tau_center = old.tau_uv
        line_uv, line_vv = old.tau_uv, old.tau_vv
        ensemble = state.ensemble
        zero = np.zeros_like(x)
        new = None
        for _ in range(passes):
            rho, log_omega, m_tilde = self._march(old, older, h, tau_center, line_uv, line_vv)
            new = SliceState(u=u_new, x=x, rho=rho, log_omega=log_omega, m_tilde=m_tilde,
                             dv_rho=np.gradient(rho, x, edge_order=2),
                             tau_uu=zero, tau_uv=zero.copy(), tau_vv=zero.copy(), length_unit=k)
            if has_matter:
                strip = StripField(old.fields(), new.fields())
                ensemble = pusher.advance_to_u(state.ensemble, strip, u_new)
                stress, currents, _ = deposit(ensemble, u_new, x, new.stencil(), k, self.settings.l_bands)
                new = self._with_stress(new, stress, currents)
                tau_center = 0.5 * (old.tau_uv + new.tau_uv)
                line_uv, line_vv = new.tau_uv, new.tau_vv

        new = self.apply_axis_bc(new, old)
        new = self.apply_infinity_bc(new, old, older, state.m_tilde_scri)
        new = replace(new, support=support_functional(ensemble, new.stencil(), k))
        return new, ensemble

    def _march(self, old: SliceState, older: Optional[SliceState], h: float, tau_center: np.ndarray,
               line_uv: np.ndarray, line_vv: np.ndarray):
        """
        One sweep of the diamond rule X_N = X_E + X_W - X_S + h^2 S along the new slice.

        Raw (r, log Omega^2) are marched where r < r_switch, renormalised
        (rho, log Omega~^2) beyond; m~ follows by a midpoint step of
        d_v m~ = A - B m~ from the axis.
        """
        k = old.length_unit
        lam6 = -0.5 / (k * k)
        n = old.n
        r_switch = self.settings.r_switch_over_k
        rho_o, lw_o, m_o = old.rho, old.log_omega, old.m_tilde
        rho = np.empty(n + 1)
        lw = np.empty(n + 1)
        m = np.empty(n + 1)
        rho[0], m[0] = 0.0, 0.0
        lw[0] = self._axis_log_omega(old, h)
        h2 = h * h

        for j in range(1, n):
            rho_e, rho_s, rho_w = rho_o[j + 1], rho_o[j], rho[j - 1]
            lw_e, lw_s, lw_w = lw_o[j + 1], lw_o[j], lw[j - 1]
            tc = tau_center[j]
            if j + 1 < n and math.tan(rho_e) < r_switch:
                r_e, r_s, r_w = k * math.tan(rho_e), k * math.tan(rho_s), k * math.tan(rho_w)
                big_e = lw_e - 2.0 * math.log(math.cos(rho_e))
                big_s = lw_s - 2.0 * math.log(math.cos(rho_s))
                big_w = lw_w - 2.0 * math.log(math.cos(rho_w))
                r_c = 0.5 * (r_e + r_w)
                om_c = 0.5 * (math.exp(big_e) + math.exp(big_w))
                mu3_w = m[j - 1] / r_w ** 3 if j > 1 else old.mu3_axis
                mu3_c = 0.5 * (m_o[j + 1] / r_e ** 3 + mu3_w)
                t_c = tc / (r_c * r_c)
                s_r = r_c * om_c * (lam6 - 0.5 * mu3_c) + FOUR_PI * t_c * r_c
                s_big = om_c * (mu3_c + lam6) - 4.0 * FOUR_PI * t_c
                r_n = r_e + r_w - r_s + h2 * s_r
                if not r_n > 0:
                    raise IntegrationError(f"r reached zero off the axis at node {j}")
                rho_n = math.atan(r_n / k)
                lw_n = big_e + big_w - big_s + h2 * s_big + 2.0 * math.log(math.cos(rho_n))
            else:
                rho_c = 0.5 * (rho_e + rho_w)
                om_c = 0.5 * (math.exp(lw_e) + math.exp(lw_w))
                m_c = 0.5 * (m_o[j + 1] + m[j - 1])
                s, c = math.sin(rho_c), math.cos(rho_c)
                s2 = s * s
                s_rho = (-m_c * om_c * c * c * (1.0 + 2.0 * s2) / (2.0 * k ** 3 * s2)
                         + FOUR_PI * tc * c ** 3 / (k * k * s))
                s_lw = (m_c * om_c * c * (1.0 / s2 + 2.0 * s2) / (k ** 3 * s)
                        - 4.0 * FOUR_PI * (1.0 + 0.5 * s2) * c * c * tc / (k * k * s2))
                rho_n = rho_e + rho_w - rho_s + h2 * s_rho
                lw_n = lw_e + lw_w - lw_s + h2 * s_lw
            if not (0.0 < rho_n < HALF_PI) or not math.isfinite(lw_n):
                raise IntegrationError(f"metric left its range at node {j} (rho={rho_n})")
            rho[j], lw[j] = rho_n, lw_n
            m[j] = self._mass_step(k, h, j, old, m[j - 1], rho, lw, line_uv, line_vv)

        rho[n] = HALF_PI
        lw[n] = self._scri_log_omega(lw, old, older)
        m[n] = self._mass_step(k, h, n, old, m[n - 1], rho, lw, line_uv, line_vv)
        return rho, lw, m

    @classmethod
    def _mass_step(cls, k, h, j, old: SliceState, m_w, rho, lw, tau_uv, tau_vv) -> float:
        """Midpoint step of d_v m~ = A - B m~ from node j-1 to node j."""
        drho = (rho[j] - rho[j - 1]) / h
        if not drho > 0:
            u = old.u + h
            mu = cls._crossing_mu(k, h, j, old, rho, lw) if j < old.n else None
            raise TrappedSliceError(f"d_v r vanished between nodes {j - 1} and {j}", (u, u + float(old.x[j])), mu)
        rho_c = 0.5 * (rho[j] + rho[j - 1])
        om_c = 0.5 * (math.exp(lw[j]) + math.exp(lw[j - 1]))
        tuv = 0.5 * (tau_uv[j] + tau_uv[j - 1])
        tvv = 0.5 * (tau_vv[j] + tau_vv[j - 1])
        if tuv == 0.0 and tvv == 0.0:
            return m_w
        a = 2.0 * math.pi * tvv / (k * drho) + 8.0 * math.pi * k * tuv * drho / om_c
        b = FOUR_PI * tvv * math.cos(rho_c) ** 3 / (k * k * math.sin(rho_c) * drho)
        return (m_w * (1.0 - 0.5 * h * b) + h * a) / (1.0 + 0.5 * h * b)

    @staticmethod
    def _crossing_mu(k, h, j, old: SliceState, rho, lw) -> float:
        """
        2m/r midway between nodes j-1 and j of the new slice, measured from the metric alone:
        2m/r = 1 + 4 k^2 sec^2 rho d_u rho d_v rho / Omega~^2, with d_u rho at fixed v from the old slice.
        """
        dv = (rho[j] - rho[j - 1]) / h
        du = 0.5 * ((rho[j] - old.rho[j + 1]) + (rho[j - 1] - old.rho[j])) / h
        rho_c = 0.5 * (rho[j] + rho[j - 1])
        om_c = 0.5 * (math.exp(lw[j]) + math.exp(lw[j - 1]))
        return 1.0 + 4.0 * k * k * du * dv / (om_c * math.cos(rho_c) ** 2)

    # Boundary conditions

    def _axis_log_omega(self, old: SliceState, h: float) -> float:
        """Diamond at the axis with the mirror node of E in place of W (Omega^2 is symmetric in u and v)."""
        k = old.length_unit
        big_e = old.log_omega[1] - 2.0 * math.log(math.cos(old.rho[1]))
        source = math.exp(old.log_omega[0]) * (old.mu3_axis - 0.5 / (k * k)) - 4.0 * FOUR_PI * old.t_axis
        return 2.0 * big_e - old.log_omega[0] + h * h * source

    @staticmethod
    def _scri_log_omega(lw: np.ndarray, old: SliceState, older: Optional[SliceState]) -> float:
        """
        (d_v - d_u) log Omega~^2 = 0 on infinity, i.e. 2 d_x = d_u at fixed x.

        Backward differences in u over two old slices; the first step, with one old
        slice only, uses the trapezoid rule in u between the old and new slices.
        """
        n = lw.size - 1
        lw_o = old.log_omega
        if older is None:
            return 4.0 * lw[n - 1] - lw[n - 2] + 4.0 * lw_o[n - 1] - lw_o[n - 2] - 5.0 * lw_o[n]
        return (8.0 * lw[n - 1] - 2.0 * lw[n - 2] - 4.0 * lw_o[n] + older.log_omega[n]) / 3.0

    def apply_axis_bc(self, new: SliceState, old: Optional[SliceState] = None) -> SliceState:
        """
        Pin r = 0 and m~ = 0 on the axis node, fit the even quantities m~/r^3 and T_uv there.

        Args:
            new: Slice whose axis node is set
            old: Previous slice; when given, log Omega^2 on the axis comes from the mirrored diamond

        Raises:
            AxisRegularityError: r does not vanish on the axis or the parity fit is not finite
        """
        if abs(new.rho[0]) > _AXIS_TOL:
            logger.error(f"Axis node has rho={new.rho[0]:.3e} at u={new.u:.6g}")
            raise AxisRegularityError(f"r does not vanish on the axis (rho={new.rho[0]:.3e})")
        rho = new.rho.copy()
        m = new.m_tilde.copy()
        lw = new.log_omega.copy()
        rho[0], m[0] = 0.0, 0.0
        if old is not None:
            lw[0] = self._axis_log_omega(old, new.u - old.u)

        k = new.length_unit
        r1, r2 = k * math.tan(rho[1]), k * math.tan(rho[2])
        mu3 = (4.0 * m[1] / r1 ** 3 - m[2] / r2 ** 3) / 3.0
        t_axis = (4.0 * new.tau_uv[1] / r1 ** 2 - new.tau_uv[2] / r2 ** 2) / 3.0
        if not (math.isfinite(mu3) and math.isfinite(t_axis) and math.isfinite(lw[0])):
            raise AxisRegularityError("parity fit on the axis is not finite")
        return replace(new, rho=rho, m_tilde=m, log_omega=lw, mu3_axis=mu3, t_axis=max(t_axis, 0.0))

    def apply_infinity_bc(self, new: SliceState, old: Optional[SliceState] = None,
                          older: Optional[SliceState] = None, m_tilde_scri: Optional[float] = None) -> SliceState:
        """
        Pin 1/r = 0 on infinity, impose the reflective condition on Omega~^2 and carry m~ along infinity.

        The value of m~ found by integrating along the slice is kept as ``m_tilde_scri_ode``.

        Raises:
            IntegrationError: Omega~^2 on infinity is not finite
        """
        rho = new.rho.copy()
        lw = new.log_omega.copy()
        m = new.m_tilde.copy()
        rho[-1] = HALF_PI
        if old is not None:
            lw[-1] = self._scri_log_omega(lw, old, older)
        if not math.isfinite(lw[-1]):
            raise IntegrationError("Omega~^2 on infinity is not finite")
        m_ode = float(m[-1])
        if m_tilde_scri is not None:
            m[-1] = m_tilde_scri
        return replace(new, rho=rho, log_omega=lw, m_tilde=m, m_tilde_scri_ode=m_ode)

    # Diagnostics

    @staticmethod
    def _source(tau: np.ndarray, rho: np.ndarray, log_omega: np.ndarray, k: float) -> np.ndarray:
        return FOUR_PI * safe_ratio(tau * np.cos(rho) ** 3 * np.exp(-log_omega), k * np.sin(rho))

    def constraint_residual_v(self, s: SliceState) -> float:
        """
        max |d_v(k d_v rho e^-lw) + 4 pi tau_vv cos^3 rho e^-lw / (k sin rho)| over interior nodes.

        The flux k d_v rho e^-lw is differenced on cell midpoints, so the residual is the
        compact three-point stencil of the diamond rule.
        """
        k = s.length_unit
        h = float(s.x[1] - s.x[0])
        flux = k * np.diff(s.rho) / h * np.exp(-0.5 * (s.log_omega[1:] + s.log_omega[:-1]))
        residual = np.diff(flux) / h + self._source(s.tau_vv, s.rho, s.log_omega, k)[1:-1]
        return float(np.max(np.abs(residual)))

    def constraint_residual_u(self, window: List[SliceState]) -> float:
        """
        The d_u constraint at fixed v on the middle of three consecutive slices.

        Node j of the middle slice meets slice n + d at node j - d; the flux is differenced
        on the half-steps in u between those points.
        """
        before, mid, after = window
        n = mid.n
        h = float(mid.x[1] - mid.x[0])
        k = mid.length_unit
        j = np.arange(1, n)

        def flux(early: SliceState, late: SliceState, j_early: np.ndarray, j_late: np.ndarray) -> np.ndarray:
            du_rho = (late.rho[j_late] - early.rho[j_early]) / h
            return k * du_rho * np.exp(-0.5 * (late.log_omega[j_late] + early.log_omega[j_early]))

        derivative = (flux(mid, after, j, j - 1) - flux(before, mid, j + 1, j)) / h
        source = self._source(mid.tau_uu[j], mid.rho[j], mid.log_omega[j], k)
        return float(np.max(np.abs(derivative + source))) if j.size else 0.0

    @staticmethod
    def _ingoing_integrand(s: SliceState) -> np.ndarray:
        k2 = s.length_unit ** 2
        cos3 = np.cos(s.rho) ** 3
        sin = np.sin(s.rho)
        return (safe_ratio(s.tau_uv * cos3, k2 * sin * s.dv_rho)
                + safe_ratio(s.tau_uu * cos3, k2 * sin * -s.du_rho))

    @staticmethod
    def outgoing_constraint_integral(s: SliceState) -> float:
        """int r (T_vv / d_v r + T_uv / (-d_u r)) dv along the slice."""
        k2 = s.length_unit ** 2
        cos3 = np.cos(s.rho) ** 3
        sin = np.sin(s.rho)
        integrand = (safe_ratio(s.tau_vv * cos3, k2 * sin * s.dv_rho)
                     + safe_ratio(s.tau_uv * cos3, k2 * sin * -s.du_rho))
        return float(trapezoid(integrand, s.x))

    def _bookkeeping(self, state: SolverState, s: SliceState) -> SolverState:
        """Constraint residuals and line integrals for a newly accepted slice."""
        residual_v = self.constraint_residual_v(s)
        residual_u = None
        if len(state.history) >= _HISTORY:
            residual_u = self.constraint_residual_u(state.history[-_HISTORY:] + [s])
        outgoing = self.outgoing_constraint_integral(s)

        acc, last = state.ingoing_integrals, state.ingoing_last
        h = state.grid.h
        lines = state.step_index + np.arange(s.n + 1)
        inside = lines < acc.size
        values = self._ingoing_integrand(s)[inside]
        lines = lines[inside]
        previous = last[lines]
        started = ~np.isnan(previous)
        acc[lines[started]] += 0.5 * h * (previous[started] + values[started])
        last[lines] = values

        return replace(
            state,
            residual_v=residual_v,
            residual_u=residual_u,
            max_residual_v=max(state.max_residual_v, residual_v),
            max_residual_u=max(state.max_residual_u, residual_u or 0.0),
            outgoing_integral=outgoing,
            sup_outgoing_integral=max(state.sup_outgoing_integral, outgoing),
            sup_mu_tilde=max(state.sup_mu_tilde, float(np.max(s.mu_tilde))),
        )

    def monitors(self, state: SolverState) -> MonitorVerdict:
        """
        First failing continuation criterion on the current slice.

        Scan order: numerical, trapped, axis, bulk, infinity, support.
        """
        s = state.slice
        u = s.u
        v = u + s.x
        finite = np.isfinite(s.rho) & np.isfinite(s.log_omega) & np.isfinite(s.m_tilde)
        if not np.all(finite) or np.any((s.rho < 0) | (s.rho > HALF_PI)):
            j = int(np.argmin(finite)) if not np.all(finite) else int(np.argmax((s.rho < 0) | (s.rho > HALF_PI)))
            return MonitorVerdict(kind="numerical_failure", u=u, v=float(v[j]), message="non-finite or out-of-range metric")

        q = s.ratio
        mu = s.mu
        interior = slice(1, s.n)
        trapped = np.nonzero(q[interior] >= 1.0)[0]
        if trapped.size:
            j = 1 + int(trapped[np.argmax(q[interior][trapped])])
            logger.warning(f"Trapped sphere at u={u:.6g}, v={v[j]:.6g}: 2m/r={mu[j]:.6g}")
            return MonitorVerdict(kind="trapped_sphere", u=u, v=float(v[j]), value=float(mu[j]),
                                  message="2m/r reached 1")

        band = slice(1, min(self.settings.axis_band_cells, s.n - 1) + 1)
        mu_tilde = s.mu_tilde
        if np.any(mu_tilde[band] > state.delta0):
            j = 1 + int(np.argmax(mu_tilde[band]))
            return MonitorVerdict(kind="axis_criterion_failed", u=u, v=float(v[j]), value=float(mu_tilde[j]),
                                  message=f"2m~/r exceeds {state.delta0:.4g} near the axis")

        limit = self.settings.bulk_log_omega_limit
        bad_lw = np.abs(s.log_omega) > limit
        bad_slope = np.zeros_like(bad_lw)
        bad_slope[interior] = (s.dv_rho[interior] <= 0) & (q[interior] < 1.0)
        if np.any(bad_lw | bad_slope):
            j = int(np.argmax(bad_lw | bad_slope))
            value = float(s.log_omega[j]) if bad_lw[j] else float(s.dv_rho[j])
            return MonitorVerdict(kind="bulk_criterion_failed", u=u, v=float(v[j]), value=value,
                                  message="log Omega~^2 unbounded or d_v r <= 0 away from trapping")

        floor = self.settings.infinity_omega_floor
        om_scri = float(s.omega_tilde_sq[-1])
        if not floor <= om_scri <= 1.0 / floor:
            return MonitorVerdict(kind="infinity_criterion_failed", u=u, v=float(v[-1]), value=om_scri,
                                  message="Omega~^2 on infinity left its bounds")

        growth = state.support_growth
        if growth > self.settings.support_growth_limit:
            return MonitorVerdict(kind="support_unbounded", u=u, value=growth,
                                  message="momentum support grew past its limit")

        increments = np.diff(s.m_tilde[:-1])
        if np.any(increments < -1e-10 * max(state.m_tilde_scri, 1e-300)):
            logger.warning(f"m~ decreases along the slice u={u:.6g}")
        return MonitorVerdict(kind="running", u=u)

    def record(self, state: SolverState) -> SliceRecord:
        s = state.slice
        interior = s.mu[:-1]
        return SliceRecord(
            u=s.u,
            sup_mu=float(np.max(interior)),
            sup_mu_tilde=float(np.max(s.mu_tilde)),
            m_tilde_scri=float(s.m_tilde[-1]),
            m_tilde_scri_ode=s.m_tilde_scri_ode,
            constraint_residual_v=state.residual_v,
            constraint_residual_u=state.residual_u,
            constraint_integral=state.outgoing_integral,
            support_sup=s.support,
            min_dv_rho=float(np.min(s.dv_rho)),
            omega_tilde_sq_scri=float(s.omega_tilde_sq[-1]),
            n_particles=len(state.ensemble),
            total_particle_number=math.pi * state.ensemble.total_weight,
            verdict=state.verdict.kind,
        )

    def completeness_integral(self, state: SolverState) -> float:
        return completeness_integral(state.scri_u, state.scri_omega)

    def dump(self, state: SolverState) -> None:
        """Grid and particle CSV files for the current slice under ``output_dir``."""
        s = state.slice
        out = Path(self.settings.output_dir)
        r = s.r
        with np.errstate(invalid="ignore"):
            m = s.m_tilde - r ** 3 / (2.0 * s.length_unit ** 2)
        write_grid_csv(out / f"grid_{state.step_index:06d}.csv", {
            "u": np.full_like(s.x, s.u), "v": s.u + s.x, "r": r, "omega_sq": s.omega_sq, "rho": s.rho,
            "omega_tilde_sq": s.omega_tilde_sq, "m": m, "m_tilde": s.m_tilde, "mu": s.mu,
        })
        e = state.ensemble
        if len(e):
            fields = s.stencil().sample(e.u, e.v)
            omega_sq = np.exp(fields.log_omega) / np.cos(fields.rho) ** 2
            write_particle_csv(out / f"particles_{state.step_index:06d}.csv", e, omega_sq)

    def summary(self, state: SolverState) -> RunSummary:
        shell = 0.0
        if len(state.ensemble):
            shell = float(np.max(mass_shell_defect(state.ensemble, state.slice.stencil(), state.slice.length_unit)))
        return RunSummary(
            verdict=state.verdict,
            steps=state.step_index,
            u_final=state.slice.u,
            n_per_slab=state.grid.n_per_slab,
            completeness_integral=self.completeness_integral(state),
            m_tilde_scri_drift=state.m_tilde_scri_drift,
            sup_mu_tilde=state.sup_mu_tilde,
            max_constraint_residual_v=state.max_residual_v,
            max_constraint_residual_u=state.max_residual_u,
            sup_constraint_integral_u=state.sup_outgoing_integral,
            sup_constraint_integral_v=float(np.max(state.ingoing_integrals)) if state.ingoing_integrals.size else 0.0,
            support_growth=state.support_growth,
            mass_shell_defect=shell,
        )

    # Driver

    def run(self, data: InitialDataSet, on_slice: Optional[SliceCallback] = None) -> RunResult:
        """
        Evolve data until target_u or the first failing monitor.

        Args:
            data: Initial data set
            on_slice: Called with the record and state of every accepted slice, including u = 0

        Returns:
            Summary, per-slice records and the final state
        """
        state = self.initial_state(data)
        records = [self._accept(state, on_slice)]
        n_steps = state.grid.n_steps
        logger.info(f"Evolution started: {n_steps} steps of h={state.grid.h:.6g} to u={self.settings.target_u:.6g}")

        while state.verdict.kind == "running" and state.step_index < n_steps:
            state = self.step(state)
            records.append(self._accept(state, on_slice))

        if state.verdict.kind == "running":
            state = replace(state, verdict=MonitorVerdict(kind="reached_target_u", u=state.u))
            records[-1] = records[-1].model_copy(update={"verdict": "reached_target_u"})
        else:
            logger.warning(f"Evolution halted at u={state.verdict.u}: {state.verdict.kind}")
        summary = self.summary(state)
        logger.info(f"Evolution finished: verdict={summary.verdict.kind}, steps={summary.steps}")
        return RunResult(summary=summary, records=records, state=state)

    def _accept(self, state: SolverState, on_slice: Optional[SliceCallback]) -> SliceRecord:
        record = self.record(state)
        every = self.settings.dump_every
        if every and state.step_index % every == 0:
            self.dump(state)
        if on_slice is not None:
            on_slice(record, state)
        return record


def completeness_integral(u_samples, omega_tilde_sq_samples) -> float:
    """int Omega / (1 - Lambda r^2 / 3)^(1/2) du along infinity, i.e. the trapezoid of Omega~."""
    u = np.asarray(u_samples, dtype=float)
    if u.size < 2:
        return 0.0
    return float(trapezoid(np.sqrt(np.asarray(omega_tilde_sq_samples, dtype=float)), u))


def evolve(data: InitialDataSet, settings: Optional[Settings] = None,
           on_slice: Optional[SliceCallback] = None) -> RunResult:
    return CharacteristicSolver(settings).run(data, on_slice)
