"""Metrics, threshold selection, BCa bootstrap and the DeLong test."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy.stats import beta as beta_dist

from afsmote.errors import SingleClassInput
from afsmote.evaluation import (
    BootstrapConfig,
    auroc,
    average_precision,
    bca_bootstrap,
    bca_endpoints,
    brier,
    confusion_at,
    delong_test,
    delong_variance,
    ece_mce,
    evaluate,
    f_tilde_beta,
    percentile_interval,
    prf_metrics,
    recall_statistic,
    select_threshold,
    threshold_candidates,
)

unit = st.floats(0.0, 1.0, allow_nan=False)


def labelled(draw_size=st.integers(4, 40)):
    @st.composite
    def strat(draw):
        n = draw(draw_size)
        p = draw(arrays(np.float64, n, elements=unit))
        y = draw(arrays(np.int64, n, elements=st.integers(0, 1)))
        y[0], y[1] = 0, 1
        return p, y
    return strat()


def brute_auroc(s, y):
    pos, neg = s[y == 1], s[y == 0]
    total = sum(1.0 if a > b else 0.5 if a == b else 0.0 for a in pos for b in neg)
    return total / (pos.size * neg.size)


def brute_ap(s, y):
    ap, prev_r = 0.0, 0.0
    for thr in sorted(set(s.tolist()), reverse=True):
        tp, fp, _, fn = confusion_at(s, y, thr)
        r, p = tp / (tp + fn), tp / (tp + fp)
        ap += (r - prev_r) * p
        prev_r = r
    return ap


class TestConfusion:
    def test_basic(self):
        assert confusion_at([0.9, 0.1], [1, 0], 0.5) == (1, 0, 1, 0)

    def test_inclusive(self):
        assert confusion_at([0.5], [1], 0.5) == (1, 0, 0, 0)

    def test_brute_force(self, rng):
        p, y = rng.random(20), rng.integers(0, 2, 20)
        c = [0, 0, 0, 0]
        for pi, yi in zip(p, y):
            pred = pi >= 0.37
            c[0] += pred and yi == 1
            c[1] += pred and yi == 0
            c[2] += (not pred) and yi == 0
            c[3] += (not pred) and yi == 1
        assert confusion_at(p, y, 0.37) == tuple(c)


class TestPRF:
    def test_perfect(self):
        m = prf_metrics(1, 0, 1, 0)
        assert m.precision == m.recall == m.f1 == 1.0

    def test_zero_division(self):
        m = prf_metrics(0, 0, 5, 3)
        assert m.precision == 0.0 and m.recall == 0.0 and m.f1 == 0.0

    def test_published_f1(self):
        p, r = 0.7891, 0.8632
        f1 = 2 * p * r / (p + r)
        assert f1 == pytest.approx(0.8245, abs=5e-5)
        assert abs(f1 - 0.8247) < 5e-4

    def test_f_beta_weights_recall(self):
        m = prf_metrics(5, 1, 10, 5, beta=2.0)
        assert m.f_beta == pytest.approx(5 * 5 / (5 * 5 + 4 * 5 + 1))


class TestFTilde:
    def test_perfect_scorer(self):
        y = np.array([1, 0, 1, 0])
        assert f_tilde_beta(y.astype(float), y, 0.5, 1.0, 0.5) == 2.0

    def test_empty_numerator(self):
        assert f_tilde_beta([0.1, 0.2, 0.9], [1, 1, 0], 0.5, 1.0, 0.3) == 0.0

    def test_large_beta_limit(self, rng):
        p, y = rng.random(200), rng.integers(0, 2, 200)
        limit = np.mean(p[y == 1] * (p[y == 1] >= 0.4))
        assert f_tilde_beta(p, y, 0.4, 100.0, y.mean()) == pytest.approx(limit, rel=0.01)

    def test_single_class(self):
        with pytest.raises(SingleClassInput):
            f_tilde_beta([0.1, 0.2], [1, 1], 0.5, 1.0, 0.5)

    @settings(max_examples=100)
    @given(labelled(), unit, st.data())
    def test_numerator_grows_when_positive_crosses(self, py, t, data):
        p, y = py
        below = np.flatnonzero((y == 1) & (p < t))
        if below.size == 0 or t == 0:
            return
        i = data.draw(st.sampled_from(below.tolist()))
        q = p.copy()
        q[i] = data.draw(st.floats(t, 1.0))
        num = lambda v: np.mean(v[y == 1] * (v[y == 1] >= t))  # noqa: E731
        assert num(q) >= num(p)


class TestAuroc:
    def test_separated(self):
        assert auroc([0.1, 0.2, 0.8, 0.9], [0, 0, 1, 1]) == 1.0

    def test_all_ties(self):
        assert auroc(np.ones(6), [0, 1, 0, 1, 1, 0]) == 0.5

    def test_pair_count_oracle(self, rng):
        s = np.round(rng.random(30), 1)
        y = rng.integers(0, 2, 30)
        assert auroc(s, y) == pytest.approx(brute_auroc(s, y), abs=1e-12)

    @given(labelled())
    def test_monotone_transform_invariance(self, py):
        # a 0.01 grid keeps both transforms strictly increasing in floating point
        s, y = np.round(py[0], 2), py[1]
        base = auroc(s, y)
        assert auroc(s ** 3, y) == base
        assert auroc(np.exp(s), y) == base

    def test_single_class(self):
        with pytest.raises(SingleClassInput):
            auroc([0.1, 0.2], [0, 0])


class TestAveragePrecision:
    def test_positive_first(self):
        assert average_precision([0.9, 0.5, 0.1], [1, 0, 0]) == 1.0

    def test_positive_last(self):
        assert average_precision([0.9, 0.5, 0.3, 0.1], [0, 0, 0, 1]) == pytest.approx(1 / 4)

    def test_tie_group_oracle(self):
        s = np.array([0.95, 0.9, 0.8, 0.8, 0.8, 0.8, 0.6, 0.5, 0.4, 0.3, 0.2, 0.1])
        y = np.array([1, 0, 1, 0, 1, 0, 1, 0, 0, 1, 0, 0])
        assert average_precision(s, y) == pytest.approx(brute_ap(s, y), abs=1e-15)

    @given(labelled())
    def test_matches_threshold_enumeration(self, py):
        s, y = py
        assert average_precision(s, y) == pytest.approx(brute_ap(s, y), abs=1e-12)

    @given(labelled())
    def test_constant_scores_give_prior(self, py):
        _, y = py
        assert average_precision(np.full(y.size, 0.3), y) == pytest.approx(y.mean(), abs=1e-15)

    def test_can_fall_below_prior(self):
        # a negative ranked above a tie group holding every positive
        s, y = np.array([1.0, 0.0, 1.0, 1.0]), np.array([0, 1, 1, 1])
        assert average_precision(s, y) == pytest.approx(2 / 3 * 2 / 3 + 1 / 3 * 3 / 4)
        assert average_precision(s, y) < y.mean()


class TestCalibrationMetrics:
    def test_brier(self):
        assert brier([1.0, 0.0], [1, 0]) == 0.0
        assert brier([0.5] * 4, [1, 0, 1, 0]) == 0.25
        assert brier([0.8, 0.3], [1, 0]) == pytest.approx(0.065, abs=1e-15)

    def test_ece_perfect(self):
        assert ece_mce(np.full(10, 0.5), np.r_[np.ones(5), np.zeros(5)]) == (0.0, 0.0)

    def test_ece_two_bins(self):
        ece, mce = ece_mce(np.r_[np.full(4, 0.1), np.full(4, 0.9)], np.r_[np.zeros(4), np.ones(4)])
        assert ece == pytest.approx(0.1, abs=1e-15) and mce == pytest.approx(0.1, abs=1e-15)

    def test_single_sample(self):
        ece, mce = ece_mce([0.9], [0])
        assert ece == pytest.approx(0.9) and mce == pytest.approx(0.9)

    @given(labelled(), st.integers(1, 20))
    def test_ece_at_most_mce(self, py, n_bins):
        ece, mce = ece_mce(*py, n_bins=n_bins)
        assert ece <= mce + 1e-15


def exhaustive_threshold(p, y, p0):
    """Scan every distinct score (and 0, 1) as a threshold; same selection rule."""
    best_key, best = None, None
    for t in sorted(set(p.tolist()) | {0.0, 1.0}):
        tp, fp, tn, fn = confusion_at(p, y, t)
        m = prf_metrics(tp, fp, tn, fn)
        key = (m.precision >= p0, m.f1 if m.precision >= p0 else m.precision, m.f1)
        if best_key is None or key >= best_key:
            best_key, best = key, (tp, fp, m.precision, m.f1)
    return best


class TestSelectThreshold:
    def test_separated(self):
        op = select_threshold([0.1, 0.2, 0.3, 0.7, 0.8], [0, 0, 0, 1, 1], 0.9)
        assert op.threshold == pytest.approx(0.5)
        assert op.precision == op.recall == 1.0 and op.feasible

    def test_infeasible_falls_back(self, rng):
        p = rng.random(200)
        y = (rng.random(200) < 0.3).astype(int)
        op = select_threshold(p, y, 0.99)
        assert not op.feasible
        ts = threshold_candidates(p)
        best_prec = max(prf_metrics(*confusion_at(p, y, t)).precision for t in ts)
        assert op.precision == best_prec

    def test_ten_sample_oracle(self):
        p = np.array([0.05, 0.12, 0.3, 0.41, 0.47, 0.55, 0.62, 0.7, 0.83, 0.91])
        y = np.array([0, 0, 1, 0, 0, 1, 0, 1, 1, 1])
        op = select_threshold(p, y, 0.85)
        tp, fp, prec, f1 = exhaustive_threshold(p, y, 0.85)
        assert confusion_at(p, y, op.threshold)[:2] == (tp, fp)
        assert (op.precision, op.f1) == pytest.approx((prec, f1))
        assert op.feasible and op.threshold == pytest.approx((0.62 + 0.7) / 2)

    @settings(max_examples=100)
    @given(labelled(), st.floats(0.05, 0.95))
    def test_no_better_feasible_candidate(self, py, p0):
        p, y = py
        op = select_threshold(p, y, p0)
        if not op.feasible:
            return
        for t in threshold_candidates(p):
            m = prf_metrics(*confusion_at(p, y, t))
            assert not (m.precision >= p0 and m.f1 > op.f1 + 1e-15)


class TestBootstrap:
    def test_constant_statistic(self, rng):
        p, y = rng.random(30), np.r_[np.ones(10), np.zeros(20)]
        ci = bca_bootstrap(lambda p, y: 0.42, p, y, BootstrapConfig(n_resamples=200))
        assert ci.lo == ci.hi == ci.point == 0.42 and ci.degenerate

    def test_percentile_reduction(self, rng):
        boot = rng.normal(size=999)
        assert bca_endpoints(boot, 0.0, 0.0, 0.95) == percentile_interval(boot, 0.95)

    def test_deterministic(self, rng):
        p, y = rng.random(60), (rng.random(60) < 0.4).astype(int)
        cfg = BootstrapConfig(n_resamples=300, seed=5)
        a = bca_bootstrap(average_precision, p, y, cfg)
        b = bca_bootstrap(average_precision, p, y, cfg)
        assert (a.lo, a.hi) == (b.lo, b.hi)

    def test_counts_path_matches_direct(self, rng):
        p, y = rng.random(80), (rng.random(80) < 0.3).astype(int)
        cfg = BootstrapConfig(n_resamples=300, seed=2)
        fast = bca_bootstrap(average_precision, p, y, cfg, keep_samples=True)
        slow = bca_bootstrap(lambda p, y: average_precision(p, y), p, y, cfg, keep_samples=True)
        np.testing.assert_allclose(fast.boot, slow.boot, rtol=0, atol=1e-12)
        assert fast.lo == pytest.approx(slow.lo, abs=1e-12) and fast.hi == pytest.approx(slow.hi, abs=1e-12)

    def test_interval_contains_point(self, rng):
        p, y = rng.random(100), (rng.random(100) < 0.3).astype(int)
        ci = bca_bootstrap(average_precision, p, y, BootstrapConfig(n_resamples=500))
        assert ci.lo <= ci.point <= ci.hi

    def test_too_small(self):
        with pytest.raises(ValueError):
            bca_bootstrap(average_precision, np.zeros(5), np.array([0, 1, 0, 1, 0]))

    @pytest.mark.slow
    def test_recall_coverage(self):
        # positives score ~ Beta(3, 2); true recall at t = 0.5 is its survival function there
        t = 0.5
        truth = float(beta_dist.sf(t, 3, 2))
        hits = 0
        for rep in range(200):
            r = np.random.default_rng(10_000 + rep)
            y = (r.random(300) < 0.3).astype(int)
            p = np.where(y == 1, r.beta(3, 2, 300), r.beta(2, 3, 300))
            ci = bca_bootstrap(recall_statistic(t), p, y, BootstrapConfig(seed=rep))
            hits += ci.lo <= truth <= ci.hi
        assert 0.90 <= hits / 200 <= 0.99


def permutation_p(a, b, y, n_perm=2000, seed=0):
    r = np.random.default_rng(seed)
    obs = abs(auroc(a, y) - auroc(b, y))
    count = 0
    for _ in range(n_perm):
        swap = r.random(y.size) < 0.5
        pa, pb = np.where(swap, b, a), np.where(swap, a, b)
        count += abs(auroc(pa, y) - auroc(pb, y)) >= obs
    return (count + 1) / (n_perm + 1)


class TestDeLong:
    def test_identical(self, rng):
        s, y = rng.random(50), rng.integers(0, 2, 50)
        assert delong_test(s, s, y).p_value == 1.0

    def test_perfect_vs_random(self):
        r = np.random.default_rng(4)
        y = (r.random(200) < 0.5).astype(int)
        perfect = y + 0.01 * r.random(200)
        noise = r.random(200)
        res = delong_test(perfect, noise, y)
        assert res.p_value < 0.001
        assert permutation_p(perfect, noise, y) < 0.001

    def test_variance_matches_bootstrap(self):
        r = np.random.default_rng(8)
        y = (r.random(500) < 0.3).astype(int)
        s = r.normal(size=500) + 1.0 * y
        v = delong_variance(s, y)
        boot = []
        for _ in range(2000):
            idx = r.integers(0, 500, 500)
            boot.append(auroc(s[idx], y[idx]))
        assert v == pytest.approx(np.var(boot, ddof=1), rel=0.2)

    def test_zero_variance_unequal(self):
        y = np.array([0, 1])
        res = delong_test([0.1, 0.9], [0.9, 0.1], y)
        assert res.p_value == 0.0 and res.zero_variance_unequal

    def test_single_class(self):
        with pytest.raises(SingleClassInput):
            delong_test([0.1], [0.2], [1])


class TestEvaluate:
    def test_report_ranges_and_serialisation(self, rng):
        p, y = rng.random(120), (rng.random(120) < 0.25).astype(int)
        rep = evaluate(p, y, 0.5, bootstrap=BootstrapConfig(n_resamples=200))
        d = rep.to_dict()
        for k in ("recall", "precision", "f1", "auroc", "average_precision", "balanced_accuracy",
                  "brier", "ece", "mce", "f_beta_1", "f_beta_2", "f_beta_4"):
            assert 0.0 <= d[k] <= 1.0
        assert "f_tilde_beta_4" in d and "delong_p" not in d
        lo, hi = d["recall_ci"]
        assert lo <= d["recall"] <= hi
        assert d["f_beta_1"] == d["f1"]
