import cmath
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

import oracles
from families import ORACLE_NAMES, extended_family, family_mode
from qredshift.overlap import (FUNCTIONAL_SETTINGS, asymptotic_decay_check, functionals,
                               gaussian_closed_form, optimize_linear_phase, overlap_exact,
                               overlap_perturbative)
from qredshift.spectra import Comb, GaussianChirp, RedshiftFactor, Tooth, normalize

FROZEN = oracles.load()


class TestOverlapExact:
    def test_identity(self):
        for mode in extended_family().values():
            assert abs(overlap_exact(mode, 1.0).delta - 1) < 1e-12

    def test_chi_squared_two_reference(self):
        res = overlap_exact(GaussianChirp(10, 1), RedshiftFactor.from_chi_squared(2))
        assert res.magnitude == pytest.approx(FROZEN["gaussian_chi2_2"], abs=1e-12)
        assert res.magnitude == pytest.approx(6.026603007498e-3, rel=1e-10)

    @pytest.mark.parametrize("row", FROZEN["gaussian_overlap"][::4])
    def test_against_mpmath(self, row):
        g = GaussianChirp(row["omega0_over_sigma"], 1.0, phi=row["sigma_phi"])
        d = overlap_exact(g, row["chi"]).delta
        assert abs(d - complex(*row["delta"])) < 1e-9

    def test_closed_form_phase_orientation(self):
        g = GaussianChirp(10, 1, phi=0.3)
        for chi in (0.8, 1.05, 1.3):
            q = overlap_exact(g, chi).delta
            c = gaussian_closed_form(10, 1, 0.3, chi).delta
            assert abs(q - c) < 1e-10

    def test_magnitude_bounded(self):
        for mode in extended_family().values():
            for chi in (0.3, 0.9, 1.2, 4.0):
                assert overlap_exact(mode, chi).magnitude <= 1 + 1e-12

    def test_bob_alice_conjugate(self):
        # <F'|F> at 1/chi equals conj of the value at chi (change of variables)
        g = GaussianChirp(10, 1, phi=0.4, beta=0.02)
        a = overlap_exact(g, 1.3).delta
        b = overlap_exact(g, RedshiftFactor(1.3).inverse()).delta
        assert abs(a - np.conj(b)) < 1e-10


class TestFunctionals:
    @pytest.mark.parametrize("name", ORACLE_NAMES)
    def test_against_mpmath(self, name):
        f = functionals(family_mode(name))
        ref = FROZEN["functionals"][name]
        assert abs(f.K - complex(*ref["K"])) < 1e-9
        assert f.mu_squared == pytest.approx(ref["mu_squared"], rel=1e-10)
        assert f.omega_bar == pytest.approx(ref["omega_bar"], rel=1e-10)

    def test_gaussian_values(self):
        f = functionals(GaussianChirp(10, 1, phi=0.3))
        assert f.kappa == pytest.approx(-3.0, abs=1e-10)
        assert f.mu_squared == pytest.approx(103 / 4 + 0.09 * 101, rel=1e-12)

    def test_routes_agree(self):
        for name, mode in extended_family().items():
            f = functionals(mode)
            if not f.polar_available:
                continue
            assert f.route_mismatch < 1e-8, name
            assert f.mu_squared_polar == pytest.approx(f.mu_squared, abs=1e-8), name

    def test_comb_with_gap_has_no_polar_route(self):
        f = functionals(normalize(Comb((Tooth(10, 1), Tooth(40, 1)))))
        assert not f.polar_available and math.isnan(f.kappa_polar)
        assert f.K.real == pytest.approx(-0.5, abs=1e-9)

    def test_kappa_opt(self):
        f = functionals(GaussianChirp(10, 1))
        assert f.kappa_opt == pytest.approx(math.sqrt(25.75 - 0.25), rel=1e-12)

    @given(st.floats(5, 30), st.floats(-1, 1), st.floats(-0.1, 0.1))
    def test_second_order_coefficient_positive(self, x0, phi, beta):
        f = functionals(GaussianChirp(x0, 1.0, phi=phi, beta=beta))
        assert f.second_order_coefficient > 0
        assert f.mu_squared >= f.kappa**2 + 0.25 - 1e-9


class TestPerturbative:
    def test_imaginary_second_order_coefficient(self):
        # Im Delta - 2 kappa eps = -kappa eps^2 + O(eps^3)
        # (the third-order term is large, so extrapolate the two samples to eps -> 0)
        kappa = -3.0
        (e1, c1), (e2, c2) = [
            (row["epsilon"], (row["delta"][1] - 2 * kappa * row["epsilon"]) / row["epsilon"] ** 2)
            for row in FROZEN["second_order"]
        ]
        c0 = c1 - e1 * (c2 - c1) / (e2 - e1)
        assert c0 == pytest.approx(-kappa, abs=0.05)
        assert abs(c0 - (-3 * kappa)) > 1.0
        f = functionals(GaussianChirp(10, 1, phi=0.3))
        p = overlap_perturbative(f, e1)
        assert (p.delta_poly.imag - 2 * kappa * e1) / e1**2 == pytest.approx(-kappa, rel=1e-9)

    def test_forms_match_exact_to_third_order(self):
        g = GaussianChirp(10, 1, phi=0.3)
        f = functionals(g)
        errs = []
        for eps in (1e-3, 2e-3, 4e-3):
            d = overlap_exact(g, 1 + eps, FUNCTIONAL_SETTINGS).delta
            p = overlap_perturbative(f, eps)
            errs.append((abs(d - p.delta_poly), abs(d - p.delta_exp)))
        errs = np.array(errs)
        slopes = np.log(errs[-1] / errs[0]) / math.log(4)
        assert np.all(slopes > 2.8)

    def test_guard_flag(self):
        f = functionals(GaussianChirp(10, 1))
        assert overlap_perturbative(f, 0.25).outside_guard
        assert not overlap_perturbative(f, 0.01).outside_guard

    def test_magnitude_form(self):
        f = functionals(GaussianChirp(10, 1))
        p = overlap_perturbative(f, 1e-3)
        assert p.magnitude == pytest.approx(1 - 51 * 1e-6, abs=1e-12)
        assert abs(p.delta_exp) == pytest.approx(math.exp(-51e-6), rel=1e-12)


class TestClosedForm:
    def test_identity(self):
        assert gaussian_closed_form(10, 1, 0.3, 1.0).delta == 1

    def test_phase_vanishes_without_linear_phase(self):
        assert gaussian_closed_form(10, 1, 0.0, 1.4).phase == 0

    def test_first_order_phase(self):
        eps = 1e-6
        ph = gaussian_closed_form(10, 1, 0.3, 1 + eps).phase
        assert ph == pytest.approx(2 * (-3.0) * eps, rel=1e-5)

    def test_second_order_constant(self):
        # |Delta| = 1 - (x0^2 + 2 + 4 sigma^2 phi^2) eps^2 / 2 + O(eps^3)
        eps = 1e-4
        mag = gaussian_closed_form(10, 1, 0.5, 1 + eps).magnitude
        assert (1 - mag) / eps**2 == pytest.approx((100 + 2 + 1) / 2, rel=1e-3)


class TestOptimizeLinearPhase:
    def test_never_decreases(self):
        for mode in (GaussianChirp(10, 1, phi=0.3), GaussianChirp(10, 1, beta=0.05)):
            res = optimize_linear_phase(mode, 1.01)
            assert res.achieved.magnitude >= res.baseline.magnitude - 1e-12

    def test_removes_linear_phase(self):
        res = optimize_linear_phase(GaussianChirp(10, 1, phi=0.3), 1.01)
        assert res.c_star == pytest.approx(0.3, abs=1e-3)

    def test_identity_at_chi_one(self):
        res = optimize_linear_phase(GaussianChirp(10, 1), 1.0)
        assert res.c_star == 0 and res.achieved.magnitude == pytest.approx(1.0, abs=1e-12)

    def test_real_gaussian_optimum_at_zero(self):
        res = optimize_linear_phase(GaussianChirp(10, 1), 1.01)
        assert res.c_star == 0.0
        assert res.analytic.magnitude < res.baseline.magnitude


class TestAsymptoticDecay:
    def test_vanishes_both_ends(self):
        out = asymptotic_decay_check(GaussianChirp(10, 1), [1 / 30, 1.0, 30.0])
        assert out[0][1] < 1e-6 and out[-1][1] < 1e-6 and out[1][1] == pytest.approx(1.0)

    def test_rejects_short_span(self):
        with pytest.raises(ValueError):
            asymptotic_decay_check(GaussianChirp(10, 1), [1.0, 2.0])

    def test_rejects_unsorted(self):
        with pytest.raises(ValueError):
            asymptotic_decay_check(GaussianChirp(10, 1), [30.0, 0.01])
