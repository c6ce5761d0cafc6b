"""
Tests for data files, profile specs and CSV dumps.
"""

import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from src.errors import DataFormatError
from src.models.matter import BumpProfile, EnsembleProfile, ParticleEnsemble
from src.services.data_io import (
    GRID_COLUMNS,
    PARTICLE_COLUMNS,
    format_data,
    parse_data,
    parse_profile_spec,
    read_data,
    write_data,
    write_grid_csv,
    write_particle_csv,
)


def ads_file(n: int = 4, header: str = "") -> str:
    """Standard AdS in the four-column layout."""
    lines = ["adsnull-idata v1", "lambda=-3", f"v_infinity={math.pi!r}", f"n={n}"]
    if header:
        lines.append(header)
    for j in range(n):
        v = j * math.pi / n
        lines.append(f"{v!r} {math.tan(v / 2)!r} {1.0 / math.cos(v / 2) ** 2!r} 0")
    lines.append(f"{math.pi!r} inf inf 0")
    return "\n".join(lines) + "\n"


class TestDataFile:
    """Test the initial data text format."""

    def test_four_column_rows(self):
        """Test that d_v rho and the profile coordinate are recovered from four columns."""
        data = parse_data(ads_file())
        assert data.n == 4
        assert data.gauge_tag == "raw"
        assert data.is_trivial
        assert_allclose(data.drho_dv, 0.5)
        assert_allclose(data.omega_tilde_sq, 1.0)
        assert_allclose(data.profile_v, data.v)

    def test_written_file_reads_back(self, bump_data, tmp_path):
        path = write_data(bump_data, tmp_path / "nested" / "bump.idata")
        data = read_data(path)
        assert data.gauge_tag == "normalised"
        assert isinstance(data.profile, BumpProfile)
        assert data.profile == bump_data.profile
        assert_allclose(data.rho, bump_data.rho, rtol=1e-14)
        assert_allclose(data.log_omega, bump_data.log_omega, atol=1e-11)
        assert data.total_mass == bump_data.total_mass

    def test_ensemble_profile(self, trivial_data):
        e = ParticleEnsemble(u=[0.0, 0.0], v=[1.0, 2.0], g_u=[0.5, 0.4], g_v=[0.3, 0.6], l=[0.2, 0.3],
                             f_value=[1.0, 2.0], weight=[0.1, 0.2], reflections=[0, 0])
        data = trivial_data.replace(profile=EnsembleProfile(ensemble=e))
        parsed = parse_data(format_data(data)).profile
        assert isinstance(parsed, EnsembleProfile)
        assert_allclose(parsed.ensemble.weight, [0.1, 0.2])

    def test_comments_are_skipped(self):
        text = ads_file().replace("n=4\n", "n=4\n# a comment\n\n")
        assert parse_data(text).n == 4

    @pytest.mark.parametrize("text, match", [
        ("not a data file\n", "header"),
        ("adsnull-idata v1\nlambda=-3\nn=4\n", "v_infinity"),
        (ads_file().replace("n=4", "n=5"), "data rows"),
        (ads_file() + "F kind=spiral\n", "unknown profile kind"),
        (ads_file() + "F kind=bump amp=1\n", "incomplete"),
        (ads_file().replace("lambda=-3", "lambda=3"), "header value"),
    ])
    def test_malformed(self, text, match):
        with pytest.raises(DataFormatError, match=match):
            parse_data(text)

    def test_axis_radius_checked(self):
        text = ads_file().replace("0.0 0.0 1.0 0", "0.0 0.1 1.0 0", 1)
        with pytest.raises(DataFormatError):
            parse_data(text)

    def test_inconsistent_arrays_reported_as_format_error(self):
        """Test that nodes that are not uniform fail as a format problem."""
        text = ads_file().replace(f"{math.pi / 4!r} ", "0.9 ", 1)
        with pytest.raises(DataFormatError, match="inconsistent"):
            parse_data(text)

    def test_missing_file(self, tmp_path):
        with pytest.raises(OSError):
            read_data(tmp_path / "missing.idata")


class TestProfileSpec:
    """Test one-line profile specs."""

    def test_bump(self):
        profile = parse_profile_spec("kind=bump amp=1e-3 vc=1.5 vw=0.3 pc=1 pw=0.2 lc=0.5 lw=0.1")
        assert profile == BumpProfile(amp=1e-3, vc=1.5, vw=0.3, pc=1.0, pw=0.2, lc=0.5, lw=0.1)

    def test_leading_marker(self):
        assert parse_profile_spec("F kind=bump amp=1 vc=1 vw=0.2 pc=1 pw=0.2 lc=0.5 lw=0.1").amp == 1.0

    def test_other_kinds_rejected(self):
        with pytest.raises(DataFormatError):
            parse_profile_spec("kind=table nv=2 np=2 nl=2")

    def test_invalid_value(self):
        with pytest.raises(DataFormatError, match="invalid profile"):
            parse_profile_spec("kind=bump amp=-1 vc=1 vw=0.2 pc=1 pw=0.2 lc=0.5 lw=0.1")


class TestCsvDumps:
    """Test grid and particle dumps."""

    def test_grid_header(self, tmp_path):
        columns = {name: np.arange(3.0) for name in GRID_COLUMNS}
        path = write_grid_csv(tmp_path / "dump" / "grid.csv", columns)
        lines = path.read_text().splitlines()
        assert lines[0] == "u,v,r,omega_sq,rho,omega_tilde_sq,m,m_tilde,mu"
        assert len(lines) == 4

    def test_particle_momenta(self, tmp_path):
        e = ParticleEnsemble(u=[0.0], v=[1.0], g_u=[2.0], g_v=[4.0], l=[0.3], f_value=[1.0], weight=[0.5],
                             reflections=[1])
        path = write_particle_csv(tmp_path / "particles.csv", e, np.array([2.0]))
        header, row = path.read_text().splitlines()
        assert header == ",".join(PARTICLE_COLUMNS)
        assert [float(x) for x in row.split(",")] == [0.0, 1.0, 1.0, 2.0, 0.3, 1.0, 0.5, 1.0]

    def test_empty_particle_dump(self, tmp_path):
        path = write_particle_csv(tmp_path / "particles.csv", ParticleEnsemble.empty(), np.zeros(0))
        assert path.read_text().splitlines() == [",".join(PARTICLE_COLUMNS)]
