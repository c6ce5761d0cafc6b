"""
Flat-file formats: initial data files and CSV dumps of grids and particles.
"""

import logging
import math
from pathlib import Path
from typing import Dict, List, Optional, Union

import numpy as np
from pydantic import ValidationError

from src.errors import DataFormatError
from src.models.data import InitialDataSet
from src.models.geometry import Cosmology
from src.models.matter import BumpProfile, EnsembleProfile, ParticleEnsemble, TableProfile

logger = logging.getLogger(__name__)

DATA_MAGIC = "adsnull-idata v1"
GRID_COLUMNS = ("u", "v", "r", "omega_sq", "rho", "omega_tilde_sq", "m", "m_tilde", "mu")
PARTICLE_COLUMNS = ("u", "v", "p_u", "p_v", "l", "f", "weight", "reflections")
_BUMP_KEYS = ("amp", "vc", "vw", "pc", "pw", "lc", "lw")


def _fmt(value: float) -> str:
    if math.isinf(value):
        return "inf"
    return f"{value:.17g}"


def _row(values) -> str:
    return " ".join(_fmt(float(x)) for x in values)


def format_data(data: InitialDataSet) -> str:
    """Render a data set in the idata text format."""
    lines = [
        DATA_MAGIC,
        f"lambda={_fmt(data.cosmology.cosmological_constant)}",
        f"v_infinity={_fmt(data.v_infinity)}",
        f"n={data.n}",
        f"gauge={data.gauge_tag}",
        f"omega_tilde_sq_scri={_fmt(float(data.omega_tilde_sq[-1]))}",
    ]
    r, omega_sq = data.r, data.omega_sq
    for j in range(data.n + 1):
        lines.append(_row((data.v[j], r[j], omega_sq[j], data.m_tilde[j], data.drho_dv[j], data.profile_v[j])))

    profile = data.profile
    if profile is None:
        lines.append("F kind=none")
    elif isinstance(profile, BumpProfile):
        lines.append("F kind=bump " + " ".join(f"{key}={_fmt(getattr(profile, key))}" for key in _BUMP_KEYS))
    elif isinstance(profile, TableProfile):
        nv, nq, nl = profile.values.shape
        lines.append(f"F kind=table nv={nv} np={nq} nl={nl}")
        lines.append(_row(profile.v_axis))
        lines.append(_row(profile.q_axis))
        lines.append(_row(profile.l_axis))
        for block in profile.values.reshape(nv * nq, nl):
            lines.append(_row(block))
    elif isinstance(profile, EnsembleProfile):
        e = profile.ensemble
        lines.append(f"F kind=ensemble count={len(e)}")
        for i in range(len(e)):
            lines.append(_row((e.u[i], e.v[i], e.g_u[i], e.g_v[i], e.l[i], e.f_value[i], e.weight[i], e.reflections[i])))
    else:
        raise DataFormatError(f"cannot serialise profile of type {type(profile).__name__}")
    return "\n".join(lines) + "\n"


def write_data(data: InitialDataSet, path: Union[str, Path]) -> Path:
    """Write a data set; parent directories are created."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(format_data(data))
    logger.info(f"Wrote initial data ({data.n} cells) to {path}")
    return path


def _key_values(tokens: List[str], lineno: int) -> Dict[str, str]:
    out = {}
    for token in tokens:
        if "=" not in token:
            raise DataFormatError(f"line {lineno}: expected key=value, got '{token}'")
        key, value = token.split("=", 1)
        out[key] = value
    return out


def _floats(line: str, lineno: int, expected: Optional[int] = None) -> List[float]:
    try:
        values = [float(tok) for tok in line.split()]
    except ValueError:
        raise DataFormatError(f"line {lineno}: non-numeric entry")
    if expected is not None and len(values) != expected:
        raise DataFormatError(f"line {lineno}: expected {expected} numbers, got {len(values)}")
    return values


def parse_data(text: str) -> InitialDataSet:
    """
    Parse the idata text format.

    Rows carry ``v r omega_sq m_tilde [drho_dv profile_v]``; with four columns
    d_v rho is recovered by differentiating rho and profile_v defaults to v.

    Raises:
        DataFormatError: for any malformed content
    """
    lines = [line.strip() for line in text.splitlines()]
    lines = [(i + 1, line) for i, line in enumerate(lines) if line and not line.startswith("#")]
    if not lines or lines[0][1] != DATA_MAGIC:
        raise DataFormatError(f"missing '{DATA_MAGIC}' header")

    header: Dict[str, str] = {}
    pos = 1
    while pos < len(lines) and "=" in lines[pos][1] and not lines[pos][1].startswith("F "):
        header.update(_key_values(lines[pos][1].split(), lines[pos][0]))
        pos += 1
    for key in ("lambda", "v_infinity", "n"):
        if key not in header:
            raise DataFormatError(f"header key '{key}' missing")
    try:
        cosmo = Cosmology(cosmological_constant=float(header["lambda"]), v_infinity=float(header["v_infinity"]))
        n = int(header["n"])
    except ValueError as e:
        raise DataFormatError(f"bad header value: {str(e)}")
    gauge = header.get("gauge", "raw")
    if gauge not in ("raw", "normalised"):
        raise DataFormatError(f"unknown gauge tag '{gauge}'")

    rows = []
    for _ in range(n + 1):
        if pos >= len(lines):
            raise DataFormatError(f"expected {n + 1} data rows, got {len(rows)}")
        lineno, line = lines[pos]
        values = _floats(line, lineno)
        if len(values) not in (4, 6):
            raise DataFormatError(f"line {lineno}: expected 4 or 6 columns, got {len(values)}")
        rows.append(values)
        pos += 1
    if len({len(row) for row in rows}) != 1:
        raise DataFormatError("data rows mix 4 and 6 columns")
    table = np.array(rows)

    k = cosmo.length_unit
    v = table[:, 0]
    r = table[:, 1]
    if r[0] != 0.0 or not math.isinf(r[-1]):
        raise DataFormatError("first row must have r = 0 and last row r = inf")
    rho = np.empty_like(r)
    rho[0], rho[-1] = 0.0, math.pi / 2
    rho[1:-1] = np.arctan(r[1:-1] / k)
    log_omega = np.empty_like(r)
    log_omega[:-1] = np.log(table[:-1, 2] * np.cos(rho[:-1]) ** 2)
    if "omega_tilde_sq_scri" in header:
        log_omega[-1] = math.log(float(header["omega_tilde_sq_scri"]))
    else:
        log_omega[-1] = 2.0 * log_omega[-2] - log_omega[-3]
    if table.shape[1] == 6:
        drho_dv = table[:, 4]
        profile_v = table[:, 5]
    else:
        drho_dv = np.gradient(rho, v, edge_order=2)
        profile_v = v.copy()

    profile = _parse_profile(lines[pos:])
    try:
        return InitialDataSet(cosmology=cosmo, v=v, rho=rho, log_omega=log_omega, drho_dv=drho_dv,
                              m_tilde=table[:, 3], profile=profile, profile_v=profile_v, gauge_tag=gauge)
    except ValidationError as e:
        raise DataFormatError(f"inconsistent data: {str(e)}")


def _parse_profile(lines):
    if not lines:
        return None
    lineno, line = lines[0]
    tokens = line.split()
    if tokens[0] != "F":
        raise DataFormatError(f"line {lineno}: expected profile section")
    spec = _key_values(tokens[1:], lineno)
    kind = spec.get("kind")
    try:
        if kind == "none":
            return None
        if kind == "bump":
            return BumpProfile(**{key: float(spec[key]) for key in _BUMP_KEYS})
        if kind == "table":
            nv, nq, nl = int(spec["nv"]), int(spec["np"]), int(spec["nl"])
            v_axis = _floats(lines[1][1], lines[1][0], nv)
            q_axis = _floats(lines[2][1], lines[2][0], nq)
            l_axis = _floats(lines[3][1], lines[3][0], nl)
            block = [_floats(text, no, nl) for no, text in lines[4:4 + nv * nq]]
            if len(block) != nv * nq:
                raise DataFormatError("profile table is truncated")
            return TableProfile(v_axis=v_axis, q_axis=q_axis, l_axis=l_axis,
                                values=np.array(block).reshape(nv, nq, nl))
        if kind == "ensemble":
            count = int(spec["count"])
            rows = np.array([_floats(text, no, 8) for no, text in lines[1:1 + count]]).reshape(count, 8)
            ensemble = ParticleEnsemble(u=rows[:, 0], v=rows[:, 1], g_u=rows[:, 2], g_v=rows[:, 3], l=rows[:, 4],
                                        f_value=rows[:, 5], weight=rows[:, 6], reflections=rows[:, 7].astype(np.int64))
            return EnsembleProfile(ensemble=ensemble)
    except DataFormatError:
        raise
    except (KeyError, IndexError) as e:
        raise DataFormatError(f"line {lineno}: incomplete profile section ({str(e)})")
    except ValueError as e:
        raise DataFormatError(f"line {lineno}: invalid profile ({str(e)})")
    raise DataFormatError(f"line {lineno}: unknown profile kind '{kind}'")


def parse_profile_spec(text: str):
    """
    A bump profile from one line such as ``kind=bump amp=1 vc=1.2 ...`` (a leading ``F`` is optional).

    Raises:
        DataFormatError: unknown kind or missing keys
    """
    line = text.strip()
    if not line.startswith("F "):
        line = "F " + line
    spec = _key_values(line.split()[1:], 1)
    if spec.get("kind") != "bump":
        raise DataFormatError("a one-line profile must have kind=bump")
    return _parse_profile([(1, line)])


def read_data(path: Union[str, Path]) -> InitialDataSet:
    """Read a data file; malformed content raises DataFormatError."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as e:
        logger.error(f"Cannot read data file {path}: {str(e)}")
        raise
    data = parse_data(text)
    logger.info(f"Read initial data ({data.n} cells, gauge {data.gauge_tag}) from {path}")
    return data


def write_grid_csv(path: Union[str, Path], columns: Dict[str, np.ndarray]) -> Path:
    """Grid dump with the columns u,v,r,omega_sq,rho,omega_tilde_sq,m,m_tilde,mu."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    table = np.column_stack([np.asarray(columns[name], dtype=float) for name in GRID_COLUMNS])
    np.savetxt(path, table, fmt="%.17g", delimiter=",", header=",".join(GRID_COLUMNS), comments="")
    return path


def write_particle_csv(path: Union[str, Path], ensemble: ParticleEnsemble, omega_sq: np.ndarray) -> Path:
    """Particle dump with momenta p = G / Omega^2."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with np.errstate(divide="ignore", invalid="ignore"):
        table = np.column_stack([ensemble.u, ensemble.v, ensemble.g_u / omega_sq, ensemble.g_v / omega_sq,
                                 ensemble.l, ensemble.f_value, ensemble.weight, ensemble.reflections.astype(float)])
    np.savetxt(path, table.reshape(-1, len(PARTICLE_COLUMNS)), fmt="%.17g", delimiter=",",
               header=",".join(PARTICLE_COLUMNS), comments="")
    return path
