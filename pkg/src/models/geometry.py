"""
Pydantic models for the double-null geometry: cosmology, grid, metric samples and gauge maps.
"""

import math
from typing import Callable, Optional

import numpy as np
from pydantic import BaseModel, Field, PrivateAttr, field_validator, model_validator
from scipy.interpolate import CubicSpline

from src.errors import DomainError


class Cosmology(BaseModel):
    """Cosmological constant and the coordinate width of the domain."""

    cosmological_constant: float = Field(..., lt=0.0, description="Lambda")
    v_infinity: float = Field(..., gt=0.0, description="Width v_I between the axis u=v and infinity v=u+v_I")

    class Config:
        frozen = True

    @property
    def length_unit(self) -> float:
        """k = sqrt(-3/Lambda)."""
        return math.sqrt(-3.0 / self.cosmological_constant)

    @property
    def is_standard(self) -> bool:
        """True when v_I = k pi, the width of the standard AdS chart."""
        return self.v_infinity == self.length_unit * math.pi

    def with_v_infinity(self, v_infinity: float) -> "Cosmology":
        return Cosmology(cosmological_constant=self.cosmological_constant, v_infinity=v_infinity)


class DiagonalGrid(BaseModel):
    """Uniform grid with du = dv = h whose node lines include the axis and infinity."""

    v_infinity: float = Field(..., gt=0.0)
    n_per_slab: int = Field(..., ge=1)
    u_start: float = Field(0.0)
    u_end: float = Field(0.0, description="End of the retarded time range covered")

    class Config:
        frozen = True

    @model_validator(mode="after")
    def _ordered(self) -> "DiagonalGrid":
        if self.u_end < self.u_start:
            raise ValueError("u_end must not precede u_start")
        return self

    @property
    def h(self) -> float:
        return self.v_infinity / self.n_per_slab

    @property
    def n_steps(self) -> int:
        """Number of whole steps from u_start to u_end."""
        return int(math.floor((self.u_end - self.u_start) / self.h + 1e-9))

    def x_nodes(self) -> np.ndarray:
        """Offsets x = v - u of the nodes of one slice, with the last node exactly at v_I."""
        x = np.arange(self.n_per_slab + 1, dtype=float) * self.h
        x[-1] = self.v_infinity
        return x

    def u_at(self, step: int) -> float:
        return self.u_start + step * self.h


class MetricSample(BaseModel):
    """Raw metric data (r, Omega^2 and first derivatives of r) at a point."""

    u: Optional[float] = None
    v: Optional[float] = None
    r: float = Field(..., ge=0.0, description="Area radius; +inf on infinity")
    omega_sq: float = Field(..., gt=0.0, description="Omega^2")
    dv_r: float = Field(..., description="d r / d v")
    du_r: float = Field(..., description="d r / d u")
    at_infinity: bool = False

    class Config:
        frozen = True


class RenormalisedSample(BaseModel):
    """Renormalised metric data rho = arctan(r/k), Omega~^2 = Omega^2 / (1 - Lambda r^2 / 3)."""

    u: Optional[float] = None
    v: Optional[float] = None
    rho: float = Field(..., ge=0.0, le=math.pi / 2)
    omega_tilde_sq: float = Field(..., gt=0.0)
    dv_rho: float
    du_rho: float
    at_infinity: bool = False

    class Config:
        frozen = True


class MassSample(BaseModel):
    """Hawking mass, renormalised mass and their ratios to r/2."""

    m: float
    m_tilde: float
    mu: float = Field(..., description="2m/r")
    mu_tilde: float = Field(..., description="2m~/r")

    class Config:
        frozen = True


class GaugeMap(BaseModel):
    """
    Reparametrisation v -> V(v) of the outgoing coordinate together with dU/du at u=0.

    V is stored as monotone samples and evaluated through a cubic spline. With
    ``periodic`` set the map extends to the whole development by translation
    with integer multiples of v_end (this requires V(v_end) = v_end).
    """

    v_nodes: np.ndarray
    V_nodes: np.ndarray
    du0: float = Field(..., gt=0.0, description="dU/du at u=0")
    periodic: bool = False

    _spline: Optional[CubicSpline] = PrivateAttr(default=None)
    _identity: bool = PrivateAttr(default=False)

    class Config:
        arbitrary_types_allowed = True
        frozen = True

    @field_validator("v_nodes", "V_nodes", mode="before")
    @classmethod
    def _as_array(cls, value) -> np.ndarray:
        return np.asarray(value, dtype=float)

    @model_validator(mode="after")
    def _monotone(self) -> "GaugeMap":
        if self.v_nodes.shape != self.V_nodes.shape or self.v_nodes.size < 2:
            raise DomainError("gauge map needs matching node arrays with at least two entries")
        if self.v_nodes[0] != 0.0 or abs(self.V_nodes[0]) > 1e-14:
            raise DomainError("gauge map must fix v=0")
        if np.any(np.diff(self.v_nodes) <= 0) or np.any(np.diff(self.V_nodes) <= 0):
            raise DomainError("gauge map must be strictly increasing")
        if self.periodic and not math.isclose(self.V_nodes[-1], self.v_nodes[-1], rel_tol=1e-12):
            raise DomainError("periodic extension needs V(v_end) = v_end")
        return self

    @classmethod
    def identity(cls, v_end: float) -> "GaugeMap":
        gauge = cls(v_nodes=np.array([0.0, v_end]), V_nodes=np.array([0.0, v_end]), du0=1.0, periodic=True)
        gauge._identity = True
        return gauge

    @classmethod
    def affine(cls, c: float, v_end: float) -> "GaugeMap":
        """V = c v with dU/du = c (a global rescaling of both null coordinates)."""
        return cls(v_nodes=np.array([0.0, v_end]), V_nodes=np.array([0.0, c * v_end]), du0=c)

    @classmethod
    def from_function(cls, fn: Callable[[np.ndarray], np.ndarray], v_end: float, du0: float,
                      samples: int = 4097, periodic: bool = False) -> "GaugeMap":
        v = np.linspace(0.0, v_end, samples)
        V = np.asarray(fn(v), dtype=float)
        V[0] = 0.0
        return cls(v_nodes=v, V_nodes=V, du0=du0, periodic=periodic)

    @property
    def is_identity(self) -> bool:
        return self._identity

    @property
    def v_end(self) -> float:
        return float(self.v_nodes[-1])

    @property
    def V_end(self) -> float:
        return float(self.V_nodes[-1])

    def _curve(self) -> CubicSpline:
        if self._spline is None:
            if self.v_nodes.size == 2:
                # straight line; a two-point cubic spline is linear already
                self._spline = CubicSpline(self.v_nodes, self.V_nodes, bc_type="natural")
            else:
                self._spline = CubicSpline(self.v_nodes, self.V_nodes, bc_type="not-a-knot")
        return self._spline

    def __call__(self, v):
        v = np.asarray(v, dtype=float)
        if self._identity:
            return v.copy() if v.ndim else float(v)
        out = self._curve()(np.clip(v, 0.0, self.v_end))
        return out if out.ndim else float(out)

    def derivative(self, v):
        v = np.asarray(v, dtype=float)
        if self._identity:
            return np.ones_like(v) if v.ndim else 1.0
        out = self._curve()(np.clip(v, 0.0, self.v_end), 1)
        return out if out.ndim else float(out)

    def inverse(self) -> "GaugeMap":
        if self._identity:
            return GaugeMap.identity(self.v_end)
        return GaugeMap(v_nodes=self.V_nodes.copy(), V_nodes=self.v_nodes.copy(), du0=1.0 / self.du0,
                        periodic=self.periodic)

    def compose(self, other: "GaugeMap", samples: int = 4097) -> "GaugeMap":
        """The map v -> other(self(v)) with dU/du multiplied."""
        if self._identity:
            return other
        if other._identity:
            return self
        v = np.linspace(0.0, self.v_end, max(samples, self.v_nodes.size))
        return GaugeMap(v_nodes=v, V_nodes=np.asarray(other(self(v))), du0=self.du0 * other.du0,
                        periodic=self.periodic and other.periodic)

    def _extend(self, w):
        if not self.periodic:
            raise DomainError("map has no periodic extension")
        w = np.asarray(w, dtype=float)
        period = self.v_end
        n = np.floor(w / period)
        inner = w - n * period
        return self(inner) + n * period, self.derivative(inner)

    def extend_u(self, u):
        """U(u) of the development-level extension."""
        return self._extend(u)[0]

    def extend_v(self, v):
        """V(v) of the development-level extension."""
        return self._extend(v)[0]

    def extension_derivative(self, w):
        return self._extend(w)[1]
