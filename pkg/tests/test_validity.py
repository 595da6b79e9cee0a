import math

import numpy as np
import pytest

from qredshift.errors import BracketInvalid
from qredshift.mixer import BasisSet, gram_schmidt
from qredshift.spectra import GaussianChirp, RedshiftFactor
from qredshift.validity import (PARAMS_HEADER, SCAN_HEADER, find_boundary, frequency_energy_report,
                                gaussian_pair, parameters_csv, residual_at, scan_chi, scan_csv,
                                scan_parameters)


@pytest.fixture(scope="module")
def pair():
    return gram_schmidt(gaussian_pair(10, 0, 20, 1))


class TestScan:
    def test_chi_one_record(self, pair):
        recs = scan_chi(pair, [0.9, 1.0, 1.2])
        assert recs[1].residual <= 1e-10 and recs[1].converged
        assert [r.chi for r in recs] == [0.9, 1.0, 1.2]

    def test_single_mode_always_valid(self):
        b = BasisSet.from_modes([GaussianChirp(10, 1, phi=0.3)])
        recs = scan_chi(b, np.linspace(0.2, 5, 11))
        assert all(r.residual <= 1e-10 for r in recs)
        assert all(r.deficit <= 1e-10 for r in recs)

    def test_rejects_unsorted(self, pair):
        with pytest.raises(ValueError):
            scan_chi(pair, [1.2, 1.0])

    def test_records_finite_and_bounded(self, pair):
        for r in scan_chi(pair, np.linspace(0.5, 3, 9)):
            assert 0 <= r.residual <= 1
            assert all(math.isfinite(v) for v in (r.deficit, r.min_eigenvalue, r.leakage))
            assert len(r.magnitudes) == 2

    def test_csv_schema(self, pair):
        text = scan_csv(scan_chi(pair, [1.0, 1.5]))
        lines = text.splitlines()
        assert lines[0] == ",".join(SCAN_HEADER)
        assert len(lines) == 3 and lines[1].startswith("1.0,0.0,")
        assert not text.endswith("\r\n")

    def test_parallel_matches_serial(self, pair):
        grid = [1.0, 1.1, 1.5, 2.0]
        assert scan_csv(scan_chi(pair, grid, workers=1)) == scan_csv(scan_chi(pair, grid, workers=3))

    def test_serial_override(self, pair, monkeypatch):
        monkeypatch.setenv("QREDSHIFT_NO_PARALLEL", "1")
        assert len(scan_chi(pair, [1.0, 2.0], workers=4)) == 2

    def test_continuity(self, pair):
        # |r(chi) - r(chi + d)| <= L d away from the eigenvalue-floor switch
        d = 1e-4
        xs = np.linspace(1.2, 2.5, 14)
        jumps = [abs(residual_at(pair, x + d) - residual_at(pair, x)) / d for x in xs]
        assert max(jumps) < 50


class TestBoundary:
    def test_bracket_width(self, pair):
        res = find_boundary(pair, 1e-3, (1.0, 3.0))
        lo, hi = res.bracket
        assert lo < res.chi_star < hi
        assert hi - lo <= 1e-3 * res.chi_star
        assert residual_at(pair, lo) < 1e-3 <= residual_at(pair, hi)

    def test_threshold_above_max(self, pair):
        with pytest.raises(BracketInvalid):
            find_boundary(pair, 0.9, (1.0, 3.0))

    def test_bad_bracket(self, pair):
        with pytest.raises(BracketInvalid):
            find_boundary(pair, 1e-3, (3.0, 1.0))

    def test_lower_threshold_moves_inward(self, pair):
        a = find_boundary(pair, 1e-3, (1.0, 3.0), rel_width=1e-9)
        b = find_boundary(pair, 5e-4, (1.0, 3.0), rel_width=1e-9)
        assert b.chi_star <= a.chi_star + 1e-9

    def test_narrower_modes_fail_sooner(self):
        wide = gram_schmidt(gaussian_pair(10, 0, 20, 1.0))
        narrow = gram_schmidt([GaussianChirp(10, 0.5), GaussianChirp(30, 0.5)])
        a = find_boundary(wide, 1e-3, (1.0, 3.0), rel_width=1e-9)
        b = find_boundary(narrow, 1e-3, (1.0, 3.0), rel_width=1e-9)
        assert b.chi_star < a.chi_star

    def test_non_monotone_flag(self, pair):
        assert not find_boundary(pair, 1e-3, (1.0, 3.0)).monotone_in_bracket


class TestFrequencyEnergy:
    def test_identity(self):
        rep = frequency_energy_report(GaussianChirp(10, 1), 1.0)
        assert rep.ratio == 1 and rep.delta_E_ratio == 0

    def test_chi_squared_two(self):
        rep = frequency_energy_report(GaussianChirp(10, 1, phi=0.3), RedshiftFactor.from_chi_squared(2))
        assert rep.ratio == pytest.approx(2, rel=1e-6)
        assert rep.delta_E_ratio == pytest.approx(rep.z, rel=1e-6)

    def test_bob_to_alice(self):
        chi = RedshiftFactor.from_chi_squared(3)
        rep = frequency_energy_report(GaussianChirp(10, 1), chi.inverse())
        assert rep.ratio == pytest.approx(1 / 3, rel=1e-6)


class TestParameters:
    def test_single_point_matches_scan(self):
        recs = scan_parameters("gaussian_pair", ("omega0_over_sigma", [10.0]), ("sigma_phi", [0.0]), 1.2)
        scan = scan_chi(gram_schmidt(gaussian_pair(10, 0)), [1.2])
        assert recs[0].residual == scan[0].residual

    def test_larger_chirp_larger_residual(self):
        recs = scan_parameters("gaussian_pair", ("omega0_over_sigma", [10.0]), ("sigma_phi", [0.0, 5.0]), 1.05)
        assert recs[1].residual > recs[0].residual

    def test_larger_center_smaller_overlap(self):
        recs = scan_parameters("gaussian_pair", ("omega0_over_sigma", [5.0, 20.0]), ("sigma_phi", [0.0]), 1.05)
        assert recs[1].magnitudes[0] < recs[0].magnitudes[0]

    def test_csv_and_order(self):
        recs = scan_parameters("gaussian_pair", ("omega0_over_sigma", [5.0, 10.0]),
                               ("sigma_phi", [0.0, 1.0]), 1.05, fixed={"separation": 25.0})
        assert [(r.p1, r.p2) for r in recs] == [(5, 0), (5, 1), (10, 0), (10, 1)]
        assert parameters_csv(recs).splitlines()[0] == ",".join(PARAMS_HEADER)

    def test_invalid_point_recorded(self):
        recs = scan_parameters("gaussian_pair", ("omega0_over_sigma", [2.0, 10.0]), ("sigma_phi", [0.0]), 1.05)
        assert not recs[0].passed and recs[0].error and math.isnan(recs[0].residual)
        assert recs[1].error == ""

    def test_unknown_template(self):
        with pytest.raises(ValueError):
            scan_parameters("nope", ("a", [1.0]), ("b", [1.0]), 1.1)
