"""
Pydantic models for Vlasov matter: profiles, macro-particles, deposited grids and AdS geodesics.
"""

import math
from typing import List, Literal, Optional, Tuple

import numpy as np
from pydantic import BaseModel, Field, PrivateAttr, field_validator, model_validator
from scipy.interpolate import RegularGridInterpolator

from src.errors import DataFormatError


def bump(t: np.ndarray) -> np.ndarray:
    """Smooth compactly supported bump exp(1 - 1/(1 - t^2)) on |t| < 1, equal to 1 at t=0."""
    t = np.asarray(t, dtype=float)
    inside = np.abs(t) < 1.0
    safe = np.where(inside, t, 0.0)
    return np.where(inside, np.exp(1.0 - 1.0 / (1.0 - safe * safe)), 0.0)


class SupportBox(BaseModel):
    """Axis-aligned bounds of a profile's support in (v, q, l)."""

    v_min: float
    v_max: float
    p_min: float
    p_max: float
    l_min: float
    l_max: float

    class Config:
        frozen = True

    @property
    def bounded(self) -> bool:
        values = (self.v_min, self.v_max, self.p_min, self.p_max, self.l_min, self.l_max)
        return all(math.isfinite(x) for x in values)

    def scaled(self, v_factor: float, p_factor: float, l_factor: float) -> "SupportBox":
        return SupportBox(v_min=self.v_min * v_factor, v_max=self.v_max * v_factor,
                          p_min=self.p_min * p_factor, p_max=self.p_max * p_factor,
                          l_min=self.l_min * l_factor, l_max=self.l_max * l_factor)


class VlasovProfile(BaseModel):
    """
    Nonnegative profile F(v; q, l).

    On initial data, q is the gauge-invariant momentum Omega^2 p^u / (4 k d_v rho)
    (equal to d_v r p^u in the normalised gauge) and v is the profile coordinate
    recorded in ``InitialDataSet.profile_v``. As a free AdS datum, q is p^u itself.
    """

    class Config:
        arbitrary_types_allowed = True
        frozen = True

    def evaluate(self, v, q, l) -> np.ndarray:
        raise NotImplementedError

    def support_box(self) -> SupportBox:
        raise NotImplementedError

    def scaled(self, factor: float) -> "VlasovProfile":
        raise NotImplementedError

    def rescaled(self, lam: float, lam_prime: float) -> "VlasovProfile":
        """The profile lam^2 lam'^4 F(lam v; lam' q, lam lam' l)."""
        raise NotImplementedError

    @property
    def is_zero(self) -> bool:
        return False


class BumpProfile(VlasovProfile):
    """Tensor product of smooth bumps; ``lw`` is the half-width in l."""

    kind: Literal["bump"] = "bump"
    amp: float = Field(..., ge=0.0)
    vc: float
    vw: float = Field(..., gt=0.0)
    pc: float
    pw: float = Field(..., gt=0.0)
    lc: float
    lw: float = Field(..., gt=0.0)

    def evaluate(self, v, q, l) -> np.ndarray:
        v, q, l = np.broadcast_arrays(np.asarray(v, float), np.asarray(q, float), np.asarray(l, float))
        value = self.amp * bump((v - self.vc) / self.vw) * bump((q - self.pc) / self.pw) * bump((l - self.lc) / self.lw)
        return np.where((q > 0.0) & (l >= 0.0), value, 0.0)

    def support_box(self) -> SupportBox:
        return SupportBox(v_min=self.vc - self.vw, v_max=self.vc + self.vw,
                          p_min=max(self.pc - self.pw, 0.0), p_max=self.pc + self.pw,
                          l_min=max(self.lc - self.lw, 0.0), l_max=self.lc + self.lw)

    def scaled(self, factor: float) -> "BumpProfile":
        return self.model_copy(update={"amp": self.amp * factor})

    def rescaled(self, lam: float, lam_prime: float) -> "BumpProfile":
        return BumpProfile(amp=self.amp * lam ** 2 * lam_prime ** 4,
                           vc=self.vc / lam, vw=self.vw / lam,
                           pc=self.pc / lam_prime, pw=self.pw / lam_prime,
                           lc=self.lc / (lam * lam_prime), lw=self.lw / (lam * lam_prime))

    @property
    def is_zero(self) -> bool:
        return self.amp == 0.0


class TableProfile(VlasovProfile):
    """Sampled profile with multilinear interpolation, zero outside the table."""

    kind: Literal["table"] = "table"
    v_axis: np.ndarray
    q_axis: np.ndarray
    l_axis: np.ndarray
    values: np.ndarray

    _interpolator: Optional[RegularGridInterpolator] = PrivateAttr(default=None)

    @field_validator("v_axis", "q_axis", "l_axis", "values", mode="before")
    @classmethod
    def _as_array(cls, value) -> np.ndarray:
        return np.asarray(value, dtype=float)

    @model_validator(mode="after")
    def _consistent(self) -> "TableProfile":
        shape = (self.v_axis.size, self.q_axis.size, self.l_axis.size)
        if self.values.shape != shape:
            raise DataFormatError(f"table values have shape {self.values.shape}, expected {shape}")
        for axis in (self.v_axis, self.q_axis, self.l_axis):
            if axis.size < 2 or np.any(np.diff(axis) <= 0):
                raise DataFormatError("table axes must be increasing with at least two entries")
        if np.any(self.values < 0) or not np.all(np.isfinite(self.values)):
            raise DataFormatError("table values must be finite and nonnegative")
        return self

    def evaluate(self, v, q, l) -> np.ndarray:
        if self._interpolator is None:
            self._interpolator = RegularGridInterpolator(
                (self.v_axis, self.q_axis, self.l_axis), self.values,
                method="linear", bounds_error=False, fill_value=0.0)
        v, q, l = np.broadcast_arrays(np.asarray(v, float), np.asarray(q, float), np.asarray(l, float))
        points = np.stack([v.ravel(), q.ravel(), l.ravel()], axis=-1)
        return self._interpolator(points).reshape(v.shape)

    def support_box(self) -> SupportBox:
        nonzero = np.nonzero(self.values > 0)
        if nonzero[0].size == 0:
            return SupportBox(v_min=0.0, v_max=0.0, p_min=0.0, p_max=0.0, l_min=0.0, l_max=0.0)

        def bounds(axis: np.ndarray, idx: np.ndarray) -> Tuple[float, float]:
            lo, hi = int(idx.min()), int(idx.max())
            return float(axis[max(lo - 1, 0)]), float(axis[min(hi + 1, axis.size - 1)])

        v_lo, v_hi = bounds(self.v_axis, nonzero[0])
        q_lo, q_hi = bounds(self.q_axis, nonzero[1])
        l_lo, l_hi = bounds(self.l_axis, nonzero[2])
        return SupportBox(v_min=v_lo, v_max=v_hi, p_min=q_lo, p_max=q_hi, l_min=l_lo, l_max=l_hi)

    def scaled(self, factor: float) -> "TableProfile":
        return TableProfile(v_axis=self.v_axis, q_axis=self.q_axis, l_axis=self.l_axis, values=self.values * factor)

    def rescaled(self, lam: float, lam_prime: float) -> "TableProfile":
        return TableProfile(v_axis=self.v_axis / lam, q_axis=self.q_axis / lam_prime,
                            l_axis=self.l_axis / (lam * lam_prime),
                            values=self.values * lam ** 2 * lam_prime ** 4)

    @property
    def is_zero(self) -> bool:
        return not np.any(self.values > 0)


class Particle(BaseModel):
    """One macro-particle in physical momenta."""

    u: float
    v: float
    p_u: float = Field(..., ge=0.0)
    p_v: float = Field(..., ge=0.0)
    l: float = Field(..., ge=0.0)
    f_value: float = Field(..., ge=0.0)
    weight: float = Field(..., gt=0.0, description="Particle count f dG^u l dl dv represented")
    reflections: int = 0


class ParticleEnsemble(BaseModel):
    """
    Structure-of-arrays store for macro-particles.

    Momenta are kept as G^u = Omega^2 p^u and G^v = Omega^2 p^v, which stay finite
    up to infinity; ``weight`` is the count f dG^u l dl dv carried by the particle.
    """

    u: np.ndarray
    v: np.ndarray
    g_u: np.ndarray
    g_v: np.ndarray
    l: np.ndarray
    f_value: np.ndarray
    weight: np.ndarray
    reflections: np.ndarray

    class Config:
        arbitrary_types_allowed = True

    @field_validator("u", "v", "g_u", "g_v", "l", "f_value", "weight", mode="before")
    @classmethod
    def _as_float(cls, value) -> np.ndarray:
        return np.array(value, dtype=float)

    @field_validator("reflections", mode="before")
    @classmethod
    def _as_int(cls, value) -> np.ndarray:
        return np.array(value, dtype=np.int64)

    @model_validator(mode="after")
    def _same_length(self) -> "ParticleEnsemble":
        n = self.u.size
        for name in ("v", "g_u", "g_v", "l", "f_value", "weight", "reflections"):
            if getattr(self, name).size != n:
                raise ValueError(f"particle array '{name}' has length {getattr(self, name).size}, expected {n}")
        return self

    @classmethod
    def empty(cls) -> "ParticleEnsemble":
        z = np.zeros(0)
        return cls(u=z, v=z, g_u=z, g_v=z, l=z, f_value=z, weight=z, reflections=np.zeros(0, dtype=np.int64))

    def __len__(self) -> int:
        return int(self.u.size)

    def copy(self) -> "ParticleEnsemble":
        return ParticleEnsemble(u=self.u.copy(), v=self.v.copy(), g_u=self.g_u.copy(), g_v=self.g_v.copy(),
                                l=self.l.copy(), f_value=self.f_value.copy(), weight=self.weight.copy(),
                                reflections=self.reflections.copy())

    def subset(self, mask: np.ndarray) -> "ParticleEnsemble":
        return ParticleEnsemble(u=self.u[mask], v=self.v[mask], g_u=self.g_u[mask], g_v=self.g_v[mask],
                                l=self.l[mask], f_value=self.f_value[mask], weight=self.weight[mask],
                                reflections=self.reflections[mask])

    @property
    def total_weight(self) -> float:
        return float(np.sum(self.weight))

    @property
    def min_l(self) -> float:
        return float(np.min(self.l)) if self.u.size else math.inf

    def to_particles(self, omega_sq: np.ndarray) -> List[Particle]:
        """Per-particle records with p = G / Omega^2 at each particle's location."""
        return [
            Particle(u=float(self.u[i]), v=float(self.v[i]),
                     p_u=float(self.g_u[i] / omega_sq[i]), p_v=float(self.g_v[i] / omega_sq[i]),
                     l=float(self.l[i]), f_value=float(self.f_value[i]), weight=float(self.weight[i]),
                     reflections=int(self.reflections[i]))
            for i in range(len(self))
        ]


class EnsembleProfile(VlasovProfile):
    """Vlasov data given directly by macro-particles on the initial line (u = 0 coordinates)."""

    kind: Literal["ensemble"] = "ensemble"
    ensemble: ParticleEnsemble

    def support_box(self) -> SupportBox:
        e = self.ensemble
        if len(e) == 0:
            return SupportBox(v_min=0.0, v_max=0.0, p_min=0.0, p_max=0.0, l_min=0.0, l_max=0.0)
        return SupportBox(v_min=float(e.v.min()), v_max=float(e.v.max()),
                          p_min=float(e.g_u.min()), p_max=float(e.g_u.max()),
                          l_min=float(e.l.min()), l_max=float(e.l.max()))

    def scaled(self, factor: float) -> "EnsembleProfile":
        e = self.ensemble.copy()
        e.f_value = e.f_value * factor
        e.weight = e.weight * factor
        return EnsembleProfile(ensemble=e)

    @property
    def is_zero(self) -> bool:
        return len(self.ensemble) == 0


class EnergyMomentumGrid(BaseModel):
    """Renormalised stress components tau = r^2 T on the nodes of one slice."""

    u: float
    x: np.ndarray = Field(..., description="Node offsets v - u")
    tau_uu: np.ndarray
    tau_uv: np.ndarray
    tau_vv: np.ndarray

    class Config:
        arbitrary_types_allowed = True

    def physical(self, r: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """T = tau / r^2, zero on infinity and continued evenly onto the axis."""
        with np.errstate(divide="ignore", invalid="ignore"):
            inv_r2 = np.where(np.isfinite(r) & (r > 0), 1.0 / np.square(r), 0.0)
        out = []
        for tau in (self.tau_uu, self.tau_uv, self.tau_vv):
            t = tau * inv_r2
            if r.size > 1 and r[0] == 0.0:
                t[0] = t[1]
            out.append(t)
        return out[0], out[1], out[2]


class CurrentBand(BaseModel):
    """Reduced particle current from particles with l in [l_low, l_high)."""

    l_low: float
    l_high: float
    n_u: np.ndarray
    n_v: np.ndarray

    class Config:
        arbitrary_types_allowed = True


class ParticleCurrentGrid(BaseModel):
    """r^2 N_u and r^2 N_v on the nodes of one slice."""

    u: float
    x: np.ndarray
    n_u: np.ndarray
    n_v: np.ndarray
    bands: List[CurrentBand] = Field(default_factory=list)
    total_number: float = Field(0.0, description="pi times the summed particle counts")

    class Config:
        arbitrary_types_allowed = True


class AdSGeodesic(BaseModel):
    """
    Closed-form null geodesic on AdS in the standard chart (v_I = k pi).

    The trajectory is parametrised by tau = u + v. With s = l/(kE) and c = sqrt(1 - s^2)
    the phase theta(tau) = omega0 - (tau - v0)/(2k) gives rho = arccos(c |cos theta|),
    U = tau/2 - k rho and V = tau/2 + k rho.
    """

    v0: float = Field(..., ge=0.0)
    E: float = Field(..., gt=0.0, description="Conserved energy (G^u + G^v)/2")
    l: float = Field(..., ge=0.0)
    sigma: int = Field(..., ge=-1, le=1, description="Sign of (G^v - G^u) at tau = v0")
    length_unit: float = Field(1.0, gt=0.0)
    omega0: float = 0.0
    rho_min: float = 0.0
    tau_infinity: float = 0.0

    class Config:
        frozen = True

    @property
    def s(self) -> float:
        return self.l / (self.length_unit * self.E)

    @property
    def c(self) -> float:
        return math.sqrt(max(1.0 - self.s * self.s, 0.0))

    @property
    def r_min(self) -> float:
        """Turning radius (E^2/l^2 + Lambda/3)^(-1/2); zero for radial rays."""
        if self.l == 0.0:
            return 0.0
        k = self.length_unit
        inv = self.E ** 2 / self.l ** 2 - 1.0 / k ** 2
        return 1.0 / math.sqrt(inv) if inv > 0 else math.inf

    @property
    def rho_min_leading_order(self) -> float:
        """arctan((1 + k^2 E^2 / l^2)^(-1/2)), which agrees with rho_min only to leading order in l/E."""
        if self.l == 0.0:
            return 0.0
        k = self.length_unit
        return math.atan((1.0 + k * k * self.E ** 2 / self.l ** 2) ** -0.5)
