"""
Pydantic models for command output records.
"""

from typing import List, Literal, Optional

from pydantic import BaseModel, Field

VerdictKind = Literal[
    "running",
    "reached_target_u",
    "trapped_sphere",
    "axis_criterion_failed",
    "bulk_criterion_failed",
    "infinity_criterion_failed",
    "support_unbounded",
    "numerical_failure",
]

SCHEMA_VERSION = 1


class SchemaHeader(BaseModel):
    """First line of every NDJSON stream."""
    schema_name: str = Field(..., serialization_alias="schema", description="Record family, e.g. adsnull/slice")
    version: int = Field(SCHEMA_VERSION, description="Schema version")


class MonitorVerdict(BaseModel):
    """Outcome of the continuation monitors on one slice."""
    kind: VerdictKind = Field(..., description="Verdict kind")
    u: Optional[float] = Field(None, description="Retarded time of the violation")
    v: Optional[float] = Field(None, description="Advanced time of the violation")
    value: Optional[float] = Field(None, description="Violating quantity")
    message: Optional[str] = Field(None, description="Human-readable detail")

    @property
    def is_green(self) -> bool:
        return self.kind in ("running", "reached_target_u")


class SliceRecord(BaseModel):
    """Per-slice diagnostics of an evolution."""
    u: float
    sup_mu: float = Field(..., description="Supremum of 2m/r over the slice")
    sup_mu_tilde: float = Field(..., description="Supremum of 2m~/r over the slice")
    m_tilde_scri: float = Field(..., description="m~ at infinity carried along infinity")
    m_tilde_scri_ode: float = Field(..., description="m~ at infinity from the slice mass integration")
    constraint_residual_v: float
    constraint_residual_u: Optional[float] = Field(None, description="Three-slice residual on the previous slice")
    constraint_integral: float = Field(..., description="int r (T_vv / d_v r + T_uv / (-d_u r)) dv along the slice")
    support_sup: float = Field(..., description="sup over particles of (-d_u r) p^u + d_v r p^v, renormalised")
    min_dv_rho: float
    omega_tilde_sq_scri: float
    n_particles: int
    total_particle_number: float
    verdict: VerdictKind


class RunSummary(BaseModel):
    """Final record of an evolution."""
    verdict: MonitorVerdict
    steps: int
    u_final: float
    n_per_slab: int
    completeness_integral: float
    m_tilde_scri_drift: float = Field(..., description="Largest deviation of the carried m~ at infinity from its start")
    sup_mu_tilde: float
    max_constraint_residual_v: float
    max_constraint_residual_u: float
    sup_constraint_integral_u: float = Field(..., description="Supremum over slices of the outgoing constraint integral")
    sup_constraint_integral_v: float = Field(..., description="Supremum over ingoing lines of the constraint integral")
    support_growth: float
    mass_shell_defect: float = Field(0.0, description="Largest relative mass-shell defect of the final ensemble")


class ConstructionEstimates(BaseModel):
    """Closeness of constructed data to AdS."""
    sup_difference: float = Field(..., ge=0.0, description="sup |k d_v rho - k pi / (2 v_infinity)|")
    energy_flux: float = Field(..., ge=0.0, description="int r T_vv / d_v r dv")


class ValidationReport(BaseModel):
    """Checks of an initial data set."""
    constraint_residual: float = Field(..., description="Max residual of the outgoing Raychaudhuri constraint")
    axis_residual: float = Field(..., description="|rho| on the axis node")
    infinity_residual: float = Field(..., description="|cos rho| on the infinity node")
    normalisation_residual: float = Field(..., description="Max relative residual of Omega~^2 = 4 k^2 (d_v rho)^2")
    support_constant: float = Field(..., description="sup of G^u + G^v over the phase-space support")
    min_dv_rho: float
    no_trapping: bool
    mass_monotone: bool
    total_mass: float
    gauge_tag: str


class DataSummary(BaseModel):
    """Record written after data is produced or normalised."""
    path: str
    n: int
    v_infinity: float
    cosmological_constant: float
    gauge_tag: str
    total_mass: float
    smallness: Optional[float] = None
    gauge_b: Optional[float] = Field(None, description="dU/du at u=0 of the normalising map")
    estimates: Optional[ConstructionEstimates] = None


class GeodesicSample(BaseModel):
    """One sample of a closed-form geodesic."""
    tau: float
    u: float
    v: float
    G_u: float
    G_v: float
    r: float


class GeodesicSummary(BaseModel):
    """Parameters of a closed-form geodesic."""
    v0: float
    E: float
    l: float
    sigma: int
    omega0: float
    rho_min: float
    rho_min_leading_order: float
    r_min: float
    tau_infinity: float


class NormBreakdown(BaseModel):
    """Scale-invariant norm and its summands."""
    ingoing_sup: float = Field(..., ge=0.0, description="sup over U* of the ingoing flux integral")
    outgoing_sup: float = Field(..., ge=0.0, description="sup over V* of the outgoing flux integral")
    mass_term: float = Field(..., ge=0.0, description="sqrt(-Lambda) m~ at infinity")
    total: float = Field(..., ge=0.0)
    lattice: List[int] = Field(..., description="Number of U* and V* intervals used")
    argmax_u: Optional[float] = Field(None, description="U* attaining the ingoing supremum")
    argmax_v: Optional[float] = Field(None, description="V* attaining the outgoing supremum")


class StabilityReport(BaseModel):
    """Measured left-hand sides of the stability estimates for one amplitude."""
    epsilon: float = Field(..., ge=0.0)
    initial_norm: float = Field(..., ge=0.0)
    slice_norm_sup: float = Field(..., ge=0.0)
    support_growth: float = Field(..., ge=0.0)
    sup_mu_tilde: float = Field(..., ge=0.0)
    constraint_integrals: List[float] = Field(..., description="Suprema of the outgoing and ingoing constraint line integrals")
    verdict: VerdictKind
    steps: int


class ScalingCheck(BaseModel):
    """Cross-amplitude linear scaling check."""
    field: str
    ratio: Optional[float]
    expected: float
    passed: bool


class ErrorRecord(BaseModel):
    """Last record of a command that failed before producing its output."""
    error: str = Field(..., description="Error code (USAGE_ERROR, CONFIG_ERROR, IO_ERROR) or the adsnull error class")
    message: str = Field(..., description="Error message")
    exception_type: str = Field(..., description="Python exception class")
    command: Optional[str] = Field(None, description="Subcommand that failed, when one was parsed")
    exit_code: int = Field(1, description="Process exit status")
    u: Optional[float] = Field(None, description="Retarded time of the failure, when the error carries a location")
    v: Optional[float] = Field(None, description="Advanced time of the failure, when the error carries a location")
