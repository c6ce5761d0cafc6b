"""
Subcommand handlers: each reads its request, runs the service pipeline and writes NDJSON records.
"""

import logging
import math
from typing import IO, Callable, Dict, Tuple, Type

import numpy as np
from pydantic import BaseModel

from src.config.settings import Settings
from src.errors import UsageError
from src.models.geometry import Cosmology
from src.models.requests import (
    EvolveRequest,
    GeodesicRequest,
    MakeDataRequest,
    NormalizeRequest,
    NormRequest,
    StabilityRequest,
    ValidateRequest,
)
from src.models.responses import DataSummary, GeodesicSample, GeodesicSummary, SchemaHeader
from src.services.ads_flow import geodesic_momentum, geodesic_position, geodesic_radius, make_geodesic
from src.services.data_io import parse_profile_spec, read_data, write_data
from src.services.diagnostics_norm import NormService, scaling_checks
from src.services.evolution import CharacteristicSolver
from src.services.initial_data import InitialDataService, construct_from_profile, make_construction_profile

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_HALTED = 2


def write_header(out: IO[str], record: str) -> None:
    out.write(SchemaHeader(schema_name=f"adsnull/{record}").model_dump_json(by_alias=True) + "\n")


def write_record(out: IO[str], record: BaseModel) -> None:
    out.write(record.model_dump_json(by_alias=True) + "\n")
    out.flush()


def _cosmology(settings: Settings) -> Cosmology:
    return Cosmology(cosmological_constant=settings.cosmological_constant, v_infinity=settings.v_infinity)


def make_data(request: MakeDataRequest, settings: Settings, out: IO[str]) -> int:
    """Construct normalised data from a bump profile and write it to a data file."""
    if request.nodes is not None:
        settings = settings.model_copy(update={"data_nodes": request.nodes})
    profile = parse_profile_spec(request.profile)
    service = InitialDataService(settings)
    cp = make_construction_profile(profile, _cosmology(settings), settings)
    data = construct_from_profile(cp, settings=settings)
    path = write_data(data, request.output)

    write_header(out, "data")
    write_record(out, DataSummary(
        path=str(path), n=data.n, v_infinity=data.v_infinity,
        cosmological_constant=data.cosmology.cosmological_constant, gauge_tag=data.gauge_tag,
        total_mass=data.total_mass, smallness=cp.smallness, estimates=service.construction_estimates(data),
    ))
    return EXIT_OK


def normalize(request: NormalizeRequest, settings: Settings, out: IO[str]) -> int:
    """Gauge-normalise a data file."""
    data = read_data(request.data)
    normalised, gauge = InitialDataService(settings).gauge_normalize(data)
    path = write_data(normalised, request.output)

    write_header(out, "data")
    write_record(out, DataSummary(
        path=str(path), n=normalised.n, v_infinity=normalised.v_infinity,
        cosmological_constant=normalised.cosmology.cosmological_constant, gauge_tag=normalised.gauge_tag,
        total_mass=normalised.total_mass, gauge_b=gauge.du0,
    ))
    return EXIT_OK


def validate(request: ValidateRequest, settings: Settings, out: IO[str]) -> int:
    data = read_data(request.data)
    report = InitialDataService(settings).validate(data)
    write_header(out, "validation")
    write_record(out, report)
    return EXIT_OK


def norm(request: NormRequest, settings: Settings, out: IO[str]) -> int:
    if request.lattice is not None:
        settings = settings.model_copy(update={"norm_lattice": tuple(request.lattice)})
    data = read_data(request.data)
    breakdown = NormService(settings).norm(data)
    write_header(out, "norm")
    write_record(out, breakdown)
    return EXIT_OK


def geodesic(request: GeodesicRequest, settings: Settings, out: IO[str]) -> int:
    """Sample a closed-form geodesic of standard AdS at the requested flow times."""
    g = make_geodesic(request.v0, request.energy, request.l, request.sigma, _cosmology(settings))
    tau = np.asarray(request.tau, dtype=float)
    u, v = geodesic_position(g, tau)
    g_u, g_v = geodesic_momentum(g, tau, side=request.side)
    r = geodesic_radius(g, tau)

    write_header(out, "geodesic")
    write_record(out, GeodesicSummary(
        v0=g.v0, E=g.E, l=g.l, sigma=g.sigma, omega0=g.omega0, rho_min=g.rho_min,
        rho_min_leading_order=g.rho_min_leading_order, r_min=g.r_min, tau_infinity=g.tau_infinity,
    ))
    for i in range(tau.size):
        write_record(out, GeodesicSample(tau=float(tau[i]), u=float(u[i]), v=float(v[i]),
                                         G_u=float(g_u[i]), G_v=float(g_v[i]), r=float(r[i])))
    return EXIT_OK


def evolve(request: EvolveRequest, settings: Settings, out: IO[str]) -> int:
    """
    Evolve a data file, streaming one record per slice and a final summary.

    Returns:
        0 when target_u is reached, 2 when a monitor halts the run
    """
    data = read_data(request.data)
    updates: Dict[str, object] = {}
    if request.h is not None:
        cells = round(data.v_infinity / request.h)
        if cells < 2 or not math.isclose(cells * request.h, data.v_infinity, rel_tol=1e-9):
            raise UsageError(f"h={request.h} does not divide v_infinity={data.v_infinity}")
        updates["n_per_slab"] = cells
    if request.target_u is not None:
        updates["target_u"] = request.target_u
    if request.dump_every is not None:
        updates["dump_every"] = request.dump_every
    settings = settings.model_copy(update=updates)

    write_header(out, "slice")
    result = CharacteristicSolver(settings).run(data, on_slice=lambda record, state: write_record(out, record))
    write_record(out, result.summary)
    if not result.summary.verdict.is_green:
        logger.warning(f"Run halted: {result.summary.verdict.kind} at u={result.summary.verdict.u}")
        return EXIT_HALTED
    return EXIT_OK


def stability(request: StabilityRequest, settings: Settings, out: IO[str]) -> int:
    """Run the amplitude family and report per-amplitude estimates and the cross-amplitude scaling."""
    profile = parse_profile_spec(request.family)
    reports = NormService(settings).cauchy_stability_experiment(profile, request.eps, request.target_u,
                                                                request.norm_every)
    write_header(out, "stability")
    for report in reports:
        write_record(out, report)
    checks = scaling_checks(reports)
    for check in checks:
        write_record(out, check)
    failed = [c.field for c in checks if not c.passed]
    if failed:
        logger.warning(f"Scaling checks outside tolerance: {', '.join(failed)}")
    if any(r.verdict != "reached_target_u" for r in reports):
        return EXIT_HALTED
    return EXIT_OK


Handler = Callable[[BaseModel, Settings, IO[str]], int]

COMMANDS: Dict[str, Tuple[Type[BaseModel], Handler]] = {
    "make-data": (MakeDataRequest, make_data),
    "normalize": (NormalizeRequest, normalize),
    "validate": (ValidateRequest, validate),
    "norm": (NormRequest, norm),
    "geodesic": (GeodesicRequest, geodesic),
    "evolve": (EvolveRequest, evolve),
    "stability": (StabilityRequest, stability),
}
