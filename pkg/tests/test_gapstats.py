import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gapaudit.errors import DegenerateVariance, InsufficientSamples
from gapaudit.gapstats import GapReport, delta_pct, dprime, gap_report, render_gap_text
from gapaudit.scoring import PairKind, ScoreDistribution


def dist_with(mean, var, n=100):
    return ScoreDistribution(n=n, mean=mean, m2=var * (n - 1), minimum=mean,
                             maximum=mean, hist=np.zeros(4, dtype=np.int64))


class TestDprime:
    def test_identical_distributions(self):
        a = dist_with(0.4, 0.01)
        assert dprime(a, dist_with(0.4, 0.01)) == 0.0

    def test_closed_form(self):
        a = dist_with(0.3, 0.05 ** 2)
        b = dist_with(0.5, 0.05 ** 2)
        assert dprime(a, b) == pytest.approx(4.0, rel=1e-12)

    def test_seeded_sampling_oracle(self):
        rng = np.random.default_rng(202)
        xa = rng.normal(0.3, 0.05, size=10**5)
        xb = rng.normal(0.5, 0.05, size=10**5)
        a = ScoreDistribution.from_scores(xa)
        b = ScoreDistribution.from_scores(xb)
        assert dprime(a, b) == pytest.approx(4.0, abs=0.05)

    def test_streaming_matches_raw(self):
        rng = np.random.default_rng(7)
        xs = rng.normal(0.2, 0.1, size=5000)
        ys = rng.normal(0.1, 0.2, size=3000)
        streamed = ScoreDistribution.from_scores(xs[:1000]).merge(
            ScoreDistribution.from_scores(xs[1000:]))
        raw_d = abs(xs.mean() - ys.mean()) / np.sqrt(
            (xs.var(ddof=1) + ys.var(ddof=1)) / 2)
        assert dprime(streamed, ScoreDistribution.from_scores(ys)) == \
            pytest.approx(raw_d, rel=1e-9)

    def test_symmetry(self):
        a, b = dist_with(0.1, 0.02), dist_with(0.7, 0.05)
        assert dprime(a, b) == dprime(b, a)

    @given(st.floats(1e-3, 1e3), st.floats(-10, 10))
    @settings(max_examples=50, deadline=None)
    def test_affine_invariance(self, alpha, beta):
        rng = np.random.default_rng(31)
        xs = rng.normal(0.2, 0.05, size=400)
        ys = rng.normal(0.5, 0.08, size=300)
        base = dprime(ScoreDistribution.from_scores(xs),
                      ScoreDistribution.from_scores(ys))
        moved = dprime(ScoreDistribution.from_scores(alpha * xs + beta),
                       ScoreDistribution.from_scores(alpha * ys + beta))
        assert moved == pytest.approx(base, rel=1e-9)

    def test_insufficient_samples(self):
        with pytest.raises(InsufficientSamples):
            dprime(dist_with(0.1, 0.01, n=1), dist_with(0.2, 0.01))

    def test_degenerate_variance(self):
        with pytest.raises(DegenerateVariance):
            dprime(dist_with(0.1, 0.0), dist_with(0.2, 0.0))


class TestGapReport:
    def _dists(self, f_imp, m_imp, f_gen, m_gen):
        return {("Female", PairKind.IMPOSTOR): f_imp,
                ("Male", PairKind.IMPOSTOR): m_imp,
                ("Female", PairKind.GENUINE): f_gen,
                ("Male", PairKind.GENUINE): m_gen}

    def test_published_delta_rows(self):
        # -75% row: 0.509 before, 0.129 after
        assert round(delta_pct(0.509, 0.129)) == -75
        # -98% row: 0.208 before, 0.004 after
        assert round(delta_pct(0.208, 0.004)) == -98
        assert delta_pct(0.3, 0.3) == 0.0
        assert delta_pct(0.0, 0.1) is None

    def test_report_fields(self):
        sd = 0.05
        before = self._dists(dist_with(0.3, sd**2), dist_with(0.5, sd**2),
                             dist_with(0.8, sd**2), dist_with(0.9, sd**2))
        after = self._dists(dist_with(0.4, sd**2), dist_with(0.5, sd**2),
                            dist_with(0.88, sd**2), dist_with(0.9, sd**2))
        report = gap_report(before, after, dataset="synthetic",
                            matcher="cosine", race="Caucasian")
        assert report.impostor_dprime_before == pytest.approx(4.0)
        assert report.impostor_dprime_after == pytest.approx(2.0)
        assert round(report.impostor_delta_pct) == -50
        assert report.genuine_dprime_before == pytest.approx(2.0)
        assert report.pair_counts["before_Female_impostor"] == 100
        doc = report.to_dict()
        assert doc["impostor"]["delta_pct"] == pytest.approx(-50.0)
        assert doc["context"]["race"] == "Caucasian"

    def test_render_text(self):
        sd = 0.05
        before = self._dists(dist_with(0.3, sd**2), dist_with(0.5, sd**2),
                             dist_with(0.8, sd**2), dist_with(0.9, sd**2))
        after = self._dists(dist_with(0.45, sd**2), dist_with(0.5, sd**2),
                            dist_with(0.9, sd**2), dist_with(0.9, sd**2))
        report = gap_report(before, after, dataset="synthetic", race="C")
        text = render_gap_text([report])
        assert "-75%" in text          # 4.0 -> 1.0
        assert "-100%" in text         # 2.0 -> 0.0
        assert "Imp d' before" in text
