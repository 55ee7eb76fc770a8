import itertools
import json
import math
from fractions import Fraction

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gfc import specfun
from gfc.bernstein import CompoundPoissonExp, CompoundPoissonGamma, PureDrift, Stable, Sum
from gfc.counting import (
    Resolvent,
    StableClosedForm,
    build_generator,
    gcp_pmf,
    gn_pmf_closed,
    governing_residual,
    omega_coefficient,
    omega_set,
    pgf,
    pmf,
    pmf_no_inverse,
    pmf_time_changed,
    poisson_pmf,
    series_exp,
)
from gfc.errors import MethodMismatchError, ParameterError, UnsupportedOrderError
from gfc.laplace import tilde_ell
from gfc.process import GCP, Poisson, ProcessSpec

PSI_E = CompoundPoissonExp(1.0, 1.0)


def brute_omega(k, n):
    return sorted(x for x in itertools.product(range(n + 1), repeat=k) if sum((j + 1) * v for j, v in enumerate(x)) == n)


class TestOmega:
    def test_examples(self):
        assert [o.x for o in omega_set(2, 2)] == [(0, 1), (2, 0)]
        assert [o.x for o in omega_set(4, 0)] == [(0, 0, 0, 0)]
        assert [o.x for o in omega_set(1, 3)] == [(3,)]

    @pytest.mark.parametrize("k", range(1, 6))
    def test_against_enumeration(self, k):
        for n in range(13):
            got = omega_set(k, n)
            assert [o.x for o in got] == brute_omega(k, n)
            assert all(sum((j + 1) * v for j, v in enumerate(o.x)) == n for o in got)

    def test_z(self):
        assert [o.z for o in omega_set(3, 3)] == [1, 2, 3]

    def test_domain(self):
        with pytest.raises(ParameterError):
            omega_set(0, 1)


class TestBasePmfs:
    def test_poisson_trivial(self):
        assert poisson_pmf(3.0, 0.0, 0) == 1.0
        assert poisson_pmf(1.0, 1.0, 1) == pytest.approx(math.exp(-1), rel=1e-15)

    def test_poisson_against_mp(self):
        # (lam t)^k / k! is the exact rational 54; only e^{-6} needs high precision
        weight = Fraction(6**4, math.factorial(4))
        with mpmath.workdps(50):
            want = float(mpmath.exp(-6) * weight.numerator / weight.denominator)
        assert poisson_pmf(2.0, 3.0, 4) == pytest.approx(want, rel=1e-14)

    def test_gcp_examples(self):
        assert gcp_pmf((1.0, 0.5), 1.0, 2) == pytest.approx(math.exp(-1.5), rel=1e-14)
        assert gcp_pmf((1.0, 0.5), 1.0, 2) == pytest.approx(0.223130, abs=1e-6)
        assert gcp_pmf((0.3, 0.2, 0.9), 1.7, 0) == pytest.approx(math.exp(-1.4 * 1.7), rel=1e-14)
        for n in range(6):
            assert gcp_pmf((0.7,), 2.0, n) == pytest.approx(poisson_pmf(0.7, 2.0, n), rel=1e-13)

    def test_gcp_sums_to_one(self):
        total = math.fsum(gcp_pmf((1.0, 0.5, 0.25), 1.3, n) for n in range(80))
        assert total == pytest.approx(1.0, abs=1e-12)


class TestGenerator:
    def test_birth_process(self):
        g = build_generator(Poisson(2.0), PureDrift(1.0), 5)
        assert g.diagonal == pytest.approx(-2.0)
        np.testing.assert_allclose(g.coeffs[1:], [2.0, 0, 0, 0, 0], atol=1e-15)

    def test_exponential_jumps(self):
        g = build_generator(Poisson(1.0), CompoundPoissonExp(2.0, 1.0), 4)
        assert g.diagonal == pytest.approx(-1.0, rel=1e-14)
        assert g.coeffs[1] == pytest.approx(0.5, rel=1e-14)

    def test_gcp_identity(self):
        g = build_generator(GCP((1.0, 0.5)), None, 6)
        np.testing.assert_allclose(g.coeffs, [-1.5, 1.0, 0.5, 0, 0, 0, 0], atol=1e-15)
        dense = g.dense()
        assert dense[4, 3] == pytest.approx(1.0) and dense[4, 2] == pytest.approx(0.5) and dense[2, 4] == 0.0

    def test_nonnegative_off_diagonal(self):
        g = build_generator(GCP((1.0, 0.5, 0.2)), Stable(0.6), 60)
        assert np.all(g.coeffs[1:] >= 0)
        # full operator rows sum to zero; truncation only loses mass
        assert g.coeffs.sum() <= 1e-12

    @settings(max_examples=25, deadline=None)
    @given(
        rates=st.lists(st.floats(0.1, 2.0), min_size=1, max_size=4),
        which=st.sampled_from(["cpe", "cpg", "stable", "sum"]),
        m=st.integers(0, 10),
    )
    def test_against_omega_sum(self, rates, which, m):
        psi = {
            "cpe": CompoundPoissonExp(1.3, 0.7),
            "cpg": CompoundPoissonGamma(0.8, 0.4, 1.5),
            "stable": Stable(0.45),
            "sum": Sum((PureDrift(0.2), Stable(0.7))),
        }[which]
        outer = GCP(tuple(rates)) if len(rates) > 1 else Poisson(rates[0])
        got = build_generator(outer, psi, 10).coeffs[m]
        want = omega_coefficient(outer, psi, m)
        assert got == pytest.approx(want, rel=1e-11, abs=1e-300)

    def test_cap(self):
        with pytest.raises(UnsupportedOrderError):
            build_generator(Poisson(1.0), PSI_E, 513)


class TestNoInverse:
    def test_zero_term(self):
        tab = pmf_no_inverse(ProcessSpec(Poisson(1.5), inner=Stable(0.4)), 0.8)
        assert tab.probs[0] == pytest.approx(math.exp(-0.8 * 1.5**0.4), rel=1e-14)

    def test_identity_reduction(self):
        tab = pmf_no_inverse(ProcessSpec(GCP((1.0, 0.5)), inner=PureDrift(1.0)), 1.2)
        want = [gcp_pmf((1.0, 0.5), 1.2, n) for n in range(len(tab.probs))]
        np.testing.assert_allclose(tab.probs, want, atol=1e-10)
        assert tab.mass_deficit <= 1e-8 and not tab.cap_hit

    def test_pgf_taylor_oracle(self):
        # G(u) = exp(-sqrt(1 - u)) for Poisson(1) on a 1/2-stable clock at t = 1
        with mpmath.workdps(40):
            coeffs = mpmath.taylor(lambda u: mpmath.exp(-mpmath.sqrt(1 - u)), 0, 3)
        tab = pmf_no_inverse(ProcessSpec(Poisson(1.0), inner=Stable(0.5)), 1.0, nmax=3)
        np.testing.assert_allclose(tab.probs, [float(c) for c in coeffs], atol=1e-6)

    def test_pgf_finite_difference_oracle(self):
        h = 1e-4
        G = lambda u: math.exp(-math.sqrt(1 - u))  # noqa: E731
        p1 = (G(h) - G(-h)) / (2 * h)
        p2 = (G(h) - 2 * G(0) + G(-h)) / h**2 / 2
        tab = pmf_no_inverse(ProcessSpec(Poisson(1.0), inner=Stable(0.5)), 1.0, nmax=3)
        assert abs(tab.probs[1] - p1) <= 1e-6 and abs(tab.probs[2] - p2) <= 1e-6

    def test_monotone_truncation(self):
        proc = ProcessSpec(GCP((1.0, 0.5)), inner=PSI_E)
        short = pmf_no_inverse(proc, 2.0, nmax=10).probs
        long = pmf_no_inverse(proc, 2.0, nmax=40).probs
        np.testing.assert_allclose(long[:11], short, atol=1e-12, rtol=0)

    def test_series_exp_matches_expm(self):
        from scipy.linalg import expm

        g = build_generator(GCP((1.0, 0.5)), Stable(0.6), 12)
        np.testing.assert_allclose(series_exp(g.coeffs, 0.9), expm(0.9 * g.dense())[:, 0], atol=1e-13)

    @settings(max_examples=20, deadline=None)
    @given(lam=st.floats(0.1, 3.0), beta=st.floats(0.2, 3.0), t=st.floats(0.05, 3.0))
    def test_normalization_property(self, lam, beta, t):
        tab = pmf_no_inverse(ProcessSpec(Poisson(lam), inner=CompoundPoissonExp(1.0, beta)), t)
        assert np.all(tab.probs >= 0)
        assert tab.probs.sum() <= 1 + 1e-9
        assert -1e-9 <= tab.mass_deficit <= 1e-8

    def test_rejects_inverse(self):
        with pytest.raises(ParameterError):
            pmf_no_inverse(ProcessSpec(Poisson(1.0), inverse=Stable(0.5)), 1.0)


class TestTimeChanged:
    def test_zero_term_is_tilde_ell(self):
        proc = ProcessSpec(Poisson(1.0), inner=PSI_E, inverse=Stable(0.7))
        tab = pmf_time_changed(proc, 1.3, nmax=4)
        assert tab.probs[0] == pytest.approx(tilde_ell(Stable(0.7), 1.3, PSI_E.value(1.0)), abs=1e-7)

    def test_identity_clock(self):
        proc = ProcessSpec(GCP((1.0, 0.5)), inner=PSI_E)
        direct = pmf_no_inverse(proc, 1.0, nmax=12).probs
        clocked = pmf_time_changed(ProcessSpec(proc.outer, inner=PSI_E, inverse=PureDrift(1.0)), 1.0, nmax=12).probs
        np.testing.assert_allclose(clocked, direct, atol=1e-6)

    def test_reduction_chain(self):
        proc = ProcessSpec(Poisson(1.0), inner=PureDrift(1.0), inverse=PureDrift(1.0))
        got = pmf_time_changed(proc, 2.0, nmax=10).probs
        np.testing.assert_allclose(got, [poisson_pmf(1.0, 2.0, k) for k in range(11)], atol=1e-6)

    def test_stable_dual_methods(self):
        proc = ProcessSpec(Poisson(1.0), inverse=Stable(0.5))
        closed = pmf_time_changed(proc, 1.0, nmax=5, method=StableClosedForm()).probs
        res = pmf_time_changed(proc, 1.0, nmax=5, method=Resolvent()).probs
        np.testing.assert_allclose(closed, res, atol=1e-5)
        assert closed[0] == pytest.approx(specfun.mittag_leffler(0.5, -1.0), rel=1e-12)

    def test_stable_closed_form_mismatch(self):
        with pytest.raises(MethodMismatchError):
            pmf_time_changed(ProcessSpec(Poisson(1.0), inner=PSI_E, inverse=Stable(0.5)), 1.0, method=StableClosedForm())
        with pytest.raises(MethodMismatchError):
            pmf_time_changed(ProcessSpec(GCP((1.0, 0.5)), inverse=Stable(0.5)), 1.0, method=StableClosedForm())

    def test_adaptive_normalization(self):
        tab = pmf_time_changed(ProcessSpec(GCP((1.0, 0.5)), inner=PSI_E, inverse=Stable(0.6)), 1.0)
        assert tab.mass_deficit <= 1e-8 and not tab.cap_hit
        assert np.all(tab.probs >= 0)

    def test_monotone_truncation(self):
        proc = ProcessSpec(GCP((1.0, 0.5)), inner=PSI_E, inverse=Stable(0.6))
        short = pmf_time_changed(proc, 1.0, nmax=4).probs
        long = pmf_time_changed(proc, 1.0, nmax=12).probs
        np.testing.assert_allclose(long[:5], short, atol=1e-12, rtol=0)

    def test_multiple_inner_exponents(self):
        # a list of inner exponents is their sum
        listed = ProcessSpec(Poisson(1.0), inner=[PSI_E, Stable(0.5)], inverse=Stable(0.8))
        summed = ProcessSpec(Poisson(1.0), inner=Sum((PSI_E, Stable(0.5))), inverse=Stable(0.8))
        np.testing.assert_array_equal(pmf_time_changed(listed, 1.0, nmax=6).probs, pmf_time_changed(summed, 1.0, nmax=6).probs)

    def test_time_zero(self):
        tab = pmf_time_changed(ProcessSpec(Poisson(1.0), inverse=Stable(0.5)), 0.0, nmax=3)
        np.testing.assert_array_equal(tab.probs, [1.0, 0, 0, 0])

    def test_dispatch(self):
        assert pmf(ProcessSpec(Poisson(1.0)), 1.0, nmax=2).method == "series-exp"
        assert pmf(ProcessSpec(Poisson(1.0), inverse=Stable(0.5)), 1.0, nmax=2).method == "resolvent"


class TestPgf:
    def test_examples(self):
        assert pgf(ProcessSpec(GCP((1.0, 0.5)), inner=PSI_E, inverse=Stable(0.6)), 1.0, 2.0) == 1.0
        assert pgf(ProcessSpec(Poisson(1.0), inverse=Stable(0.5)), 0.0, 1.0) == pytest.approx(0.4275836, abs=1e-7)
        assert pgf(ProcessSpec(GCP((1.0, 0.5))), 0.5, 1.0) == pytest.approx(math.exp(-0.875), rel=1e-15)

    @pytest.mark.parametrize("u", [0.3, 0.7])
    def test_duality(self, u):
        proc = ProcessSpec(GCP((1.0, 0.5)), inner=PSI_E, inverse=Stable(0.6))
        tab = pmf_time_changed(proc, 1.0)
        series = float(np.polyval(tab.probs[::-1], u))
        assert series == pytest.approx(pgf(proc, u, 1.0), abs=1e-5)

    def test_domain(self):
        with pytest.raises(ParameterError):
            pgf(ProcessSpec(Poisson(1.0)), 1.5, 1.0)


class TestCompoundPoissonGammaClosedForm:
    def test_zero_term_alpha_one(self):
        assert gn_pmf_closed((1.0, 0.5), 0.8, 1.0, 2.0, 1.5, 0) == pytest.approx(
            math.exp(-0.8 * 1.5 * 1.5 / 3.5), rel=1e-13
        )

    def test_zero_term_general(self):
        got = gn_pmf_closed((1.0, 0.5), 0.8, 0.6, 2.0, 1.5, 0)
        assert got == pytest.approx(math.exp(-0.8 * 1.5 * (1 - (2.0 / 3.5) ** 0.6)), rel=1e-13)

    def test_against_resolvent(self):
        proc = ProcessSpec(Poisson(1.0), inner=CompoundPoissonGamma(1.0, 1.0, 1.0), inverse=PureDrift(1.0))
        tab = pmf_time_changed(proc, 1.0, nmax=5)
        closed = [gn_pmf_closed((1.0,), 1.0, 1.0, 1.0, 1.0, n) for n in range(6)]
        np.testing.assert_allclose(tab.probs, closed, atol=1e-6)

    def test_against_series(self):
        # general alpha: compare with the no-inverse series solution
        rates, lam, alpha, beta, t = (0.6, 0.3), 1.2, 0.7, 1.5, 0.9
        tab = pmf_no_inverse(ProcessSpec(GCP(rates), inner=CompoundPoissonGamma(lam, alpha, beta)), t, nmax=6)
        closed = [gn_pmf_closed(rates, lam, alpha, beta, t, n) for n in range(7)]
        np.testing.assert_allclose(tab.probs, closed, atol=1e-12)

    def test_domain(self):
        with pytest.raises(ParameterError):
            gn_pmf_closed((1.0,), 1.0, -1.0, 1.0, 1.0, 0)


class TestGoverningResidual:
    def test_poisson_ode(self):
        rep = governing_residual(ProcessSpec(Poisson(1.0), inverse=PureDrift(1.0)), 1, h=1e-3)
        assert rep.max_abs <= 1e-4

    def test_no_inverse_is_ode(self):
        rep = governing_residual(ProcessSpec(GCP((1.0, 0.5)), inner=PSI_E), 3, h=1e-3)
        assert rep.max_abs <= 1e-4

    def test_stable_zero_term(self):
        rep = governing_residual(ProcessSpec(Poisson(1.0), inverse=Stable(0.5)), 0, h=1e-3)
        assert rep.max_abs <= 5e-3 and rep.passed

    def test_gcp_stable(self):
        rep = governing_residual(ProcessSpec(GCP((1.0, 0.5)), inner=PSI_E, inverse=Stable(0.6)), 2, h=1e-3)
        assert rep.max_abs <= 5e-3

    def test_negative_index(self):
        with pytest.raises(ParameterError):
            governing_residual(ProcessSpec(Poisson(1.0)), -1)


class TestOutput:
    def test_csv_and_sidecar(self, tmp_path):
        tab = pmf_time_changed(ProcessSpec(Poisson(1.0), inverse=Stable(0.5)), 1.0, nmax=3)
        out = tmp_path / "pmf.csv"
        tab.write(out)
        lines = out.read_text().splitlines()
        assert lines[0].startswith("# ")
        assert lines[1] == "n,p_n" and len(lines) == 6
        assert float(lines[2].split(",")[1]) == tab.probs[0]
        meta = json.loads((tmp_path / "pmf.csv.json").read_text())
        assert meta["method"] == "resolvent" and meta["nmax"] == 3
        assert meta["process"]["inverse"]["family"] == "stable"
