"""
Configuration settings for adsnull runs.
"""

import math
import os
from functools import lru_cache
from pathlib import Path
from typing import Any, Dict, Literal, Optional, Tuple, Union

from dotenv import load_dotenv
from pydantic import Field, field_validator, model_validator
from pydantic_settings import BaseSettings

from src.errors import DataFormatError

# Load ADSNULL_* variables from a local .env file
load_dotenv()


class Settings(BaseSettings):
    """Run configuration (geometry, grid, particles, monitors, output)."""

    # Geometry
    cosmological_constant: float = Field(-3.0, description="Cosmological constant Lambda (negative)")
    v_infinity: float = Field(math.pi, description="Coordinate width v_I between the axis and conformal infinity")

    # Grid
    n_per_slab: int = Field(256, description="Cells per slab; the grid spacing is h = v_infinity / n_per_slab")
    target_u: float = Field(2 * math.pi, description="Retarded time at which a run stops with reached_target_u")
    r_switch_over_k: float = Field(0.25, description="Raw variables are marched where r < r_switch_over_k * k")
    corrector_depth: int = Field(2, description="Predictor/corrector passes per step")

    # Particles
    particle_counts: Tuple[int, int, int] = Field((64, 16, 16), description="Quadrature nodes in (v, q, l) for the initial ensemble")
    particles_per_cell: float = Field(0.0, description="Least v nodes per grid cell across the matter support (0 keeps particle_counts)")
    push_order: int = Field(2, description="Geodesic pusher order: 2 explicit midpoint, 4 classical Runge-Kutta")
    push_dtau_fraction: float = Field(1.0, description="Largest pusher step as a multiple of h")
    push_axis_fraction: float = Field(0.1, description="Largest pusher step as a fraction of the distance v - u to the axis")
    l_bands: Tuple[float, ...] = Field((), description="Angular momentum band edges for reduced particle currents")

    # Monitors
    delta0: Optional[float] = Field(None, description="Axis threshold for 2m~/r; none selects 1/3 or 1e-2 from the ensemble's minimum l")
    l_min_floor: float = Field(1e-3, description="Minimum l above which the 1/3 axis threshold applies")
    axis_band_cells: int = Field(4, description="Width of the near-axis band in cells")
    support_growth_limit: float = Field(10.0, description="Halt when the support functional grows past this factor")
    bulk_log_omega_limit: float = Field(30.0, description="Halt when |log Omega~^2| exceeds this in the bulk")
    infinity_omega_floor: float = Field(1e-12, description="Halt when Omega~^2 at infinity leaves [floor, 1/floor]")

    # Initial data
    data_nodes: int = Field(4096, description="Cells of the constructed data grid (also the construction ODE step count)")
    shooting_tolerance: float = Field(1e-10, description="Relative tolerance on the blow-up endpoint in the shooting")
    smallness_threshold: float = Field(0.1, description="Warn when the smallness functional of a profile exceeds this")
    moment_orders: Tuple[int, int] = Field((48, 32), description="Gauss-Legendre orders in (q, l) for profile moments")

    # Norm and free field
    quadrature_orders: Tuple[int, int, int] = Field((32, 32, 16), description="Free-field quadrature: (panels, nodes per panel) in log G and nodes in l")
    norm_lattice: Tuple[int, int] = Field((64, 128), description="Samples of U* in [0, k pi] and V* in [0, 2 k pi]")

    # Output
    output_dir: str = Field("runs", description="Directory for grid and particle dumps")
    dump_every: int = Field(0, description="Dump every n slices (0 disables dumps)")
    threads: int = Field(1, description="Worker threads for independent runs (ADSNULL_THREADS overrides)")
    log_level: str = Field("INFO", description="Logging level")
    log_format: Literal["text", "json"] = Field("text", description="Log record format on stderr")

    class Config:
        env_prefix = "ADSNULL_"
        case_sensitive = False

    @field_validator("cosmological_constant")
    @classmethod
    def _negative_lambda(cls, value: float) -> float:
        if not value < 0:
            raise ValueError("cosmological_constant must be negative")
        return value

    @field_validator("v_infinity", "target_u", "r_switch_over_k", "push_dtau_fraction",
                     "push_axis_fraction", "support_growth_limit", "shooting_tolerance")
    @classmethod
    def _positive(cls, value: float, info) -> float:
        if info.field_name == "target_u":
            if value < 0:
                raise ValueError("target_u must be nonnegative")
        elif not value > 0:
            raise ValueError(f"{info.field_name} must be positive")
        return value

    @field_validator("particles_per_cell")
    @classmethod
    def _nonnegative(cls, value: float) -> float:
        if value < 0:
            raise ValueError("particles_per_cell must be nonnegative")
        return value

    @field_validator("n_per_slab", "corrector_depth", "axis_band_cells", "data_nodes", "threads")
    @classmethod
    def _positive_int(cls, value: int, info) -> int:
        if value < 1:
            raise ValueError(f"{info.field_name} must be at least 1")
        return value

    @field_validator("particle_counts", "moment_orders", "quadrature_orders", "norm_lattice")
    @classmethod
    def _positive_counts(cls, value: Tuple[int, ...], info) -> Tuple[int, ...]:
        if any(n < 1 for n in value):
            raise ValueError(f"{info.field_name} entries must be positive")
        return value

    @field_validator("push_order")
    @classmethod
    def _known_order(cls, value: int) -> int:
        if value not in (2, 4):
            raise ValueError("push_order must be 2 or 4")
        return value

    @model_validator(mode="after")
    def _sorted_bands(self) -> "Settings":
        if list(self.l_bands) != sorted(self.l_bands):
            raise ValueError("l_bands must be increasing")
        return self

    @property
    def length_unit(self) -> float:
        """k = sqrt(-3 / Lambda)."""
        return math.sqrt(-3.0 / self.cosmological_constant)

    @property
    def h(self) -> float:
        return self.v_infinity / self.n_per_slab

    def resolved_delta0(self, min_l: float) -> float:
        """Axis threshold: explicit value, else 1/3 for l bounded away from zero, else 1e-2."""
        if self.delta0 is not None:
            return self.delta0
        return 1.0 / 3.0 if min_l > self.l_min_floor else 1e-2


def _parse_value(raw: str) -> Any:
    text = raw.strip()
    if text.lower() in ("none", "null", ""):
        return None
    if text.startswith("(") and text.endswith(")"):
        text = text[1:-1].strip()
        if not text:
            return []
    if "," in text:
        return [part.strip() for part in text.split(",") if part.strip()]
    return text


def parse_config_text(text: str) -> Dict[str, Any]:
    """
    Parse flat ``key = value`` text.

    Args:
        text: Config file contents; ``#`` starts a comment

    Returns:
        Mapping of field name to raw value (strings or lists of strings)
    """
    values: Dict[str, Any] = {}
    known = set(Settings.model_fields)
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise DataFormatError(f"config line {lineno}: expected 'key = value'")
        key, raw = (part.strip() for part in line.split("=", 1))
        key = key.lower().replace("-", "_")
        if key not in known:
            raise DataFormatError(f"config line {lineno}: unknown key '{key}'")
        value = _parse_value(raw)
        if key == "l_bands" and isinstance(value, str):
            value = [value]
        if key == "l_bands" and value is None:
            value = []
        values[key] = value
    return values


def _format_value(value: Any) -> str:
    if value is None:
        return "none"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, (tuple, list)):
        return "(" + ", ".join(_format_value(v) for v in value) + (",)" if len(value) == 1 else ")")
    return str(value)


def emit_config(settings: Settings) -> str:
    """Render every field with its description so that parsing the text reproduces the settings."""
    lines = ["# adsnull run configuration"]
    for name, field in Settings.model_fields.items():
        if field.description:
            lines.append(f"# {field.description}")
        lines.append(f"{name} = {_format_value(getattr(settings, name))}")
    return "\n".join(lines) + "\n"


def build_settings(config_path: Optional[Union[str, Path]] = None, **overrides: Any) -> Settings:
    """
    Build settings from an optional config file plus explicit overrides.

    Args:
        config_path: Flat config file; its values take precedence over defaults
        **overrides: Values from the command line (None entries are ignored)

    Returns:
        Validated settings
    """
    values: Dict[str, Any] = {}
    if config_path is not None:
        values.update(parse_config_text(Path(config_path).read_text()))
    values.update({k: v for k, v in overrides.items() if v is not None})
    if "threads" in values and os.getenv("ADSNULL_THREADS"):
        values.pop("threads")
    return Settings(**values)


@lru_cache()
def get_settings() -> Settings:
    """Get cached settings instance."""
    return Settings()
