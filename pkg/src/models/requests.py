"""
Pydantic models for subcommand requests.
"""

from typing import List, Optional

from pydantic import BaseModel, Field, field_validator


class MakeDataRequest(BaseModel):
    """Request model for constructing initial data from a bump profile."""

    output: str = Field(..., description="Path of the data file to write")
    profile: str = Field(..., description="One-line profile, e.g. 'kind=bump amp=1e-3 vc=1.5 vw=0.3 pc=1 pw=0.2 lc=0.5 lw=0.1'")
    nodes: Optional[int] = Field(None, ge=3, description="Cells of the data grid (default: settings.data_nodes)")


class NormalizeRequest(BaseModel):
    """Request model for gauge normalisation of a data file."""

    data: str = Field(..., description="Input data file")
    output: str = Field(..., description="Normalised data file")


class ValidateRequest(BaseModel):
    """Request model for data validation."""

    data: str = Field(..., description="Data file to check")


class NormRequest(BaseModel):
    """Request model for the scale-invariant norm of a data file."""

    data: str = Field(..., description="Data file")
    lattice: Optional[List[int]] = Field(None, min_length=2, max_length=2,
                                         description="Samples of U* and V* (default: settings.norm_lattice)")


class GeodesicRequest(BaseModel):
    """Request model for sampling a closed-form AdS geodesic."""

    v0: float = Field(..., ge=0.0, description="Advanced time of the axis-side start on u = 0")
    energy: float = Field(..., gt=0.0, description="E = (G^u + G^v) / 2")
    l: float = Field(0.0, ge=0.0, description="Angular momentum")
    sigma: int = Field(0, ge=-1, le=1, description="Sign of G^v - G^u at the start")
    tau: List[float] = Field(..., min_length=1, description="Sample times tau = u + v")
    side: Optional[str] = Field(None, description="'before' or 'after' for samples exactly at a reflection")

    @field_validator("side")
    @classmethod
    def _known_side(cls, value: Optional[str]) -> Optional[str]:
        if value is not None and value not in ("before", "after"):
            raise ValueError("side must be 'before' or 'after'")
        return value


class EvolveRequest(BaseModel):
    """Request model for an evolution run."""

    data: str = Field(..., description="Initial data file")
    h: Optional[float] = Field(None, gt=0.0, description="Grid spacing; v_infinity / h must be an integer")
    target_u: Optional[float] = Field(None, ge=0.0, description="Retarded time to reach")
    dump_every: Optional[int] = Field(None, ge=0, description="Dump grid and particles every n slices")


class StabilityRequest(BaseModel):
    """Request model for the Cauchy-stability experiment."""

    family: str = Field(..., description="One-line unit-amplitude bump profile")
    eps: List[float] = Field(..., min_length=1, description="Amplitudes")
    target_u: float = Field(..., ge=0.0, description="Retarded time each run aims for")
    norm_every: int = Field(8, ge=1, description="Slice stride of slice-norm measurements")

    @field_validator("eps")
    @classmethod
    def _nonnegative(cls, value: List[float]) -> List[float]:
        if any(e < 0 for e in value):
            raise ValueError("amplitudes must be nonnegative")
        return value
