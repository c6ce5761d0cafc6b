"""
Pydantic models for characteristic initial data on the outgoing line u = 0.
"""

import math
from typing import Literal, Optional, Union

import numpy as np
from pydantic import BaseModel, Field, field_validator, model_validator

from src.errors import DomainError
from src.models.geometry import Cosmology
from src.models.matter import BumpProfile, EnsembleProfile, TableProfile

ProfileType = Union[BumpProfile, TableProfile, EnsembleProfile]


class InitialDataSet(BaseModel):
    """
    Asymptotically AdS data sampled on n+1 uniform nodes v_j = j v_I / n.

    The metric is stored in renormalised form: rho = arctan(r/k) and
    log_omega = log(Omega^2 cos^2 rho), both finite on the infinity node.
    ``profile_v`` holds, at every node, the coordinate in which ``profile``
    is evaluated, so a profile survives reparametrisation of v.
    """

    cosmology: Cosmology
    v: np.ndarray
    rho: np.ndarray
    log_omega: np.ndarray = Field(..., description="log of the renormalised Omega~^2")
    drho_dv: np.ndarray
    m_tilde: np.ndarray
    profile: Optional[ProfileType] = None
    profile_v: np.ndarray
    gauge_tag: Literal["raw", "normalised"] = "raw"

    class Config:
        arbitrary_types_allowed = True
        frozen = True

    @field_validator("v", "rho", "log_omega", "drho_dv", "m_tilde", "profile_v", mode="before")
    @classmethod
    def _as_array(cls, value) -> np.ndarray:
        return np.array(value, dtype=float)

    @model_validator(mode="after")
    def _well_formed(self) -> "InitialDataSet":
        n = self.v.size
        if n < 3:
            raise DomainError("data needs at least three nodes")
        for name in ("rho", "log_omega", "drho_dv", "m_tilde", "profile_v"):
            if getattr(self, name).size != n:
                raise DomainError(f"data array '{name}' has {getattr(self, name).size} entries, expected {n}")
        if self.v[0] != 0.0 or not math.isclose(self.v[-1], self.cosmology.v_infinity, rel_tol=1e-12):
            raise DomainError("data nodes must run from 0 to v_infinity")
        steps = np.diff(self.v)
        if not np.allclose(steps, steps[0], rtol=1e-9, atol=0.0):
            raise DomainError("data nodes must be uniformly spaced")
        if self.rho[0] != 0.0:
            raise DomainError("r must vanish on the axis node")
        if self.rho[-1] != math.pi / 2:
            raise DomainError("1/r must vanish on the infinity node")
        if np.any((self.rho[1:-1] <= 0.0) | (self.rho[1:-1] >= math.pi / 2)):
            raise DomainError("interior nodes must have 0 < r < infinity")
        for name in ("log_omega", "drho_dv", "m_tilde"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise DomainError(f"data array '{name}' has non-finite entries")
        return self

    @property
    def n(self) -> int:
        """Number of cells."""
        return self.v.size - 1

    @property
    def h(self) -> float:
        return float(self.v[1] - self.v[0])

    @property
    def v_infinity(self) -> float:
        return self.cosmology.v_infinity

    @property
    def length_unit(self) -> float:
        return self.cosmology.length_unit

    @property
    def omega_tilde_sq(self) -> np.ndarray:
        return np.exp(self.log_omega)

    @property
    def r(self) -> np.ndarray:
        r = self.length_unit * np.tan(self.rho)
        r[-1] = np.inf
        return r

    @property
    def omega_sq(self) -> np.ndarray:
        cos = np.cos(self.rho)
        with np.errstate(divide="ignore"):
            out = self.omega_tilde_sq / np.square(cos)
        out[-1] = np.inf
        return out

    @property
    def dv_r(self) -> np.ndarray:
        """d_v r = k d_v rho / cos^2 rho, infinite on the last node."""
        cos = np.cos(self.rho)
        with np.errstate(divide="ignore"):
            out = self.length_unit * self.drho_dv / np.square(cos)
        out[-1] = np.inf
        return out

    @property
    def is_trivial(self) -> bool:
        return self.profile is None or self.profile.is_zero

    @property
    def total_mass(self) -> float:
        """m~ at infinity."""
        return float(self.m_tilde[-1])

    def replace(self, **updates) -> "InitialDataSet":
        """Validated copy with some fields replaced."""
        values = {name: getattr(self, name) for name in type(self).model_fields}
        values.update(updates)
        return InitialDataSet(**values)


class ConstructionProfile(BaseModel):
    """Free datum F(v; q, l) of the construction together with its smallness functional."""

    profile: Union[BumpProfile, TableProfile]
    cosmology: Cosmology
    smallness: Optional[float] = Field(None, description="Smallness functional of F on the rescaled AdS background")

    class Config:
        arbitrary_types_allowed = True
        frozen = True

    @property
    def v_infinity(self) -> float:
        return self.cosmology.v_infinity
