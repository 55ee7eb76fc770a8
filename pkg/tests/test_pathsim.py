import io
import math

import numpy as np
import pytest
from scipy import stats

from gfc import specfun
from gfc.bernstein import CompoundPoissonExp, CompoundPoissonGamma, Custom, PureDrift, Stable, Sum
from gfc.counting import Resolvent, pmf_time_changed, poisson_pmf
from gfc.errors import ParameterError, UnsupportedError
from gfc.laplace import tilde_ell
from gfc.pathsim import (
    RngStream,
    increments,
    inverse_passage_with_path,
    passage_on_path,
    run_batch,
    sample_counts,
    sample_inverse_passage,
    sample_inverse_passages,
    sample_subordinator_path,
    sample_time_changed_count,
    stable_standard,
)
from gfc.process import GCP, Poisson, ProcessSpec

CATALOG = [
    Stable(0.7),
    CompoundPoissonGamma(1.5, 0.6, 2.0),
    CompoundPoissonExp(2.0, 1.0),
    PureDrift(0.8),
    Sum((PureDrift(0.3), Stable(0.4), CompoundPoissonExp(1.0, 3.0))),
]


def within(mean, se, want, k=3.0):
    return abs(mean - want) <= k * se + 1e-15


class TestRng:
    def test_reproducible(self):
        a = RngStream(7, 3).generator().random(5)
        b = RngStream(7, 3).generator().random(5)
        np.testing.assert_array_equal(a, b)

    def test_streams_differ(self):
        assert not np.array_equal(RngStream(7, 0).generator().random(5), RngStream(7, 1).generator().random(5))

    def test_bad_rng(self):
        with pytest.raises(ParameterError):
            sample_subordinator_path(Stable(0.5), 1.0, 0.1, rng=42)


class TestSubordinatorPaths:
    @pytest.mark.parametrize("spec", CATALOG, ids=lambda s: s.family)
    def test_starts_at_zero_and_monotone(self, spec):
        path = sample_subordinator_path(spec, 2.0, 0.01, RngStream(1, 0))
        assert path.values[0] == 0.0
        assert np.all(np.diff(path.values) >= 0)
        assert path.times[-1] >= 2.0 - 1e-12

    def test_pure_drift_exact(self):
        path = sample_subordinator_path(PureDrift(1.0), 3.0, 0.07, RngStream(1, 0))
        np.testing.assert_array_equal(path.values, path.times)

    def test_bit_identical_rerun(self):
        a = sample_subordinator_path(CATALOG[-1], 1.0, 0.01, RngStream(5, 2))
        b = sample_subordinator_path(CATALOG[-1], 1.0, 0.01, RngStream(5, 2))
        np.testing.assert_array_equal(a.values, b.values)
        assert (a.seed, a.stream_id) == (5, 2)

    def test_stable_sampler_law(self):
        s = stable_standard(0.5, 200_000, RngStream(2, 0).generator())
        # for alpha = 1/2, S = 1 / (4 G) with G ~ Gamma(1/2, 1)
        res = stats.kstest(1.0 / (4.0 * s), stats.gamma(0.5).cdf)
        assert res.pvalue > 1e-3

    @pytest.mark.parametrize("spec", CATALOG, ids=lambda s: s.family)
    @pytest.mark.parametrize("s", [0.5, 1.0, 2.0])
    def test_laplace_exponent(self, spec, s):
        h1 = increments(spec, 1.0, 100_000, RngStream(11, 0).generator())
        v = np.exp(-s * h1)
        assert within(v.mean(), v.std(ddof=1) / math.sqrt(len(v)), math.exp(-float(spec.value(s))))

    def test_stable_path_endpoint(self):
        # same check through the path sampler
        ends = np.array(
            [sample_subordinator_path(Stable(0.7), 1.0, 0.25, RngStream(4, i)).values[-1] for i in range(4000)]
        )
        v = np.exp(-2.0 * ends)
        assert within(v.mean(), v.std(ddof=1) / math.sqrt(len(v)), math.exp(-(2.0**0.7)))

    def test_custom_rejected(self):
        spec = Custom(b=1.0, tail_expr="exp(-s)")
        with pytest.raises(UnsupportedError):
            sample_subordinator_path(spec, 1.0, 0.1, RngStream(0))


class TestInversePassage:
    def test_pure_drift(self):
        assert sample_inverse_passage(PureDrift(1.0), 2.5, RngStream(0)) == pytest.approx(2.5, abs=1e-3)

    def test_nonnegative(self):
        ys = sample_inverse_passages(CATALOG[-1], 1.0, 2000, RngStream(3))
        assert np.all(ys >= 0)

    def test_stable_mean_small(self):
        ys = sample_inverse_passages(Stable(0.5), 1.0, 20_000, RngStream(9), refine_eps=1e-3)
        se = ys.std(ddof=1) / math.sqrt(len(ys))
        assert within(ys.mean(), se, 1.0 / math.gamma(1.5))

    def test_compound_poisson_exact_laplace(self):
        spec = Sum((PureDrift(0.5), CompoundPoissonExp(1.0, 2.0)))
        ys = sample_inverse_passages(spec, 1.5, 50_000, RngStream(21))
        v = np.exp(-ys)
        assert within(v.mean(), v.std(ddof=1) / math.sqrt(len(v)), tilde_ell(spec, 1.5, 1.0))

    def test_bracket_on_refined_path(self):
        eps = 1e-3
        for sid in range(5):
            y, path = inverse_passage_with_path(Stable(0.6), 1.0, RngStream(13, sid), refine_eps=eps)
            lo, hi = passage_on_path(path, 1.0)
            assert hi - lo == pytest.approx(eps)
            assert y == pytest.approx(lo + eps / 2)
            i = int(round(lo / eps))
            assert path.values[i] <= 1.0 < path.values[i + 1]

    def test_monotone_in_t_on_common_path(self):
        path = sample_subordinator_path(Sum((Stable(0.5), CompoundPoissonExp(1.0, 1.0))), 50.0, 1e-3, RngStream(8))
        ts = np.linspace(0.1, float(path.values[-1]) * 0.9, 40)
        ys = [passage_on_path(path, t)[1] for t in ts]
        assert np.all(np.diff(ys) >= 0)

    def test_bad_arguments(self):
        with pytest.raises(ParameterError):
            sample_inverse_passages(Stable(0.5), 0.0, 10, RngStream(0))
        with pytest.raises(ParameterError):
            sample_inverse_passages(Stable(0.5), 1.0, 10, RngStream(0), refine_eps=0.0)

    def test_path_route_needs_stable(self):
        with pytest.raises(UnsupportedError):
            inverse_passage_with_path(PureDrift(1.0), 1.0, RngStream(0))


class TestCounts:
    def test_time_zero(self):
        proc = ProcessSpec(GCP((1.0, 0.5)), inner=CompoundPoissonExp(1.0, 1.0), inverse=Stable(0.6))
        assert sample_time_changed_count(proc, 0.0, RngStream(0)) == 0

    def test_identity_time_change(self):
        proc = ProcessSpec(Poisson(1.0), inner=PureDrift(1.0), inverse=PureDrift(1.0))
        draws = sample_counts(proc, 2.0, 100_000, RngStream(17))
        n = len(draws)
        for k in range(6):
            p = poisson_pmf(1.0, 2.0, k)
            emp = np.mean(draws == k)
            assert abs(emp - p) <= 3 * math.sqrt(p * (1 - p) / n)

    def test_gcp_superposition(self):
        draws = sample_counts(ProcessSpec(GCP((1.0, 0.5))), 1.0, 50_000, RngStream(2))
        assert within(draws.mean(), draws.std(ddof=1) / math.sqrt(len(draws)), 1.0 + 2 * 0.5)
        assert set(np.unique(draws)) >= {0, 1, 2}

    def test_zero_probability_cross_module(self):
        proc = ProcessSpec(GCP((1.0, 0.5)), inner=CompoundPoissonExp(1.0, 1.0), inverse=Stable(0.6))
        draws = sample_counts(proc, 1.0, 20_000, RngStream(23))
        p0 = pmf_time_changed(proc, 1.0, nmax=2, method=Resolvent()).probs[0]
        emp = np.mean(draws == 0)
        assert abs(emp - p0) <= 3 * math.sqrt(p0 * (1 - p0) / len(draws))

    def test_poisson_on_stable_clock(self):
        proc = ProcessSpec(Poisson(1.0), inverse=Stable(0.5))
        draws = sample_counts(proc, 1.0, 20_000, RngStream(29))
        p0 = specfun.mittag_leffler(0.5, -1.0)
        assert abs(np.mean(draws == 0) - p0) <= 3 * math.sqrt(p0 * (1 - p0) / len(draws))


class TestBatch:
    @staticmethod
    def draw(count, stream):
        return sample_inverse_passages(CompoundPoissonExp(2.0, 1.0), 1.0, count, stream)

    def test_thread_independent(self):
        a = run_batch(self.draw, 2500, seed=4, per_stream=1000, threads=1)
        b = run_batch(self.draw, 2500, seed=4, per_stream=1000, threads=3)
        np.testing.assert_array_equal(a.values, b.values)
        assert a.csv_text() == b.csv_text()

    def test_layout(self):
        res = run_batch(self.draw, 2500, seed=4, per_stream=1000)
        np.testing.assert_array_equal(np.bincount(res.stream_ids), [1000, 1000, 500])
        assert res.draw_index[1000] == 0
        lines = res.csv_text().splitlines()
        assert lines[0] == "stream_id,draw_index,value" and len(lines) == 2501
        summary = res.summary()
        assert summary["n"] == 2500
        assert summary["stderr"] == pytest.approx(summary["std"] / 50)

    def test_csv_writer(self):
        res = run_batch(lambda c, s: np.arange(c, dtype=float) + 0.5, 3, seed=0)
        buf = io.StringIO()
        res.to_csv(buf)
        assert buf.getvalue().splitlines()[1:] == ["0,0,0.5", "0,1,1.5", "0,2,2.5"]

    def test_bad_size(self):
        with pytest.raises(ParameterError):
            run_batch(self.draw, 0, seed=1)
