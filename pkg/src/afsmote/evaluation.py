"""Imbalance-aware metrics, precision-floor thresholding and inference.

Predictions are positive iff ``p >= t``.  Ratio metrics use count-based
formulas (e.g. F1 = 2tp / (2tp + fp + fn)) so equal rationals compare
equal in floating point.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.special import ndtr, ndtri

from .calibration import reliability_bins
from .errors import SingleClassInput

DEFAULT_BETAS = (1.0, 2.0, 4.0)


def _arrays(probs, labels):
    p = np.asarray(probs, dtype=float).ravel()
    y = np.asarray(labels).ravel().astype(np.int64)
    if p.shape != y.shape:
        raise ValueError("probs and labels differ in length")
    return p, y


def _require_both(y):
    if y.size == 0 or y.min() == y.max():
        raise SingleClassInput("metric needs both classes present")


# ---------------------------------------------------------------------------
# Operating-point metrics
# ---------------------------------------------------------------------------


def confusion_at(probs, labels, t):
    p, y = _arrays(probs, labels)
    pred = p >= t
    tp = int(np.sum(pred & (y == 1)))
    fp = int(np.sum(pred & (y == 0)))
    fn = int(np.sum(~pred & (y == 1)))
    tn = int(np.sum(~pred & (y == 0)))
    return tp, fp, tn, fn


def _ratio(num, den):
    return num / den if den > 0 else 0.0


def f_beta_from_counts(tp, fp, fn, beta):
    b2 = beta * beta
    return _ratio((1 + b2) * tp, (1 + b2) * tp + b2 * fn + fp)


@dataclass(frozen=True)
class PRF:
    precision: float
    recall: float
    f1: float
    f_beta: float
    balanced_accuracy: float


def prf_metrics(tp, fp, tn, fn, beta=1.0) -> PRF:
    """Precision, recall, F1, F-beta and balanced accuracy.

    0/0 is taken as 0 for precision, recall and F-beta.
    """
    precision = _ratio(tp, tp + fp)
    recall = _ratio(tp, tp + fn)
    specificity = _ratio(tn, tn + fp)
    return PRF(precision, recall, f_beta_from_counts(tp, fp, fn, 1.0),
               f_beta_from_counts(tp, fp, fn, beta), 0.5 * (recall + specificity))


def f_tilde_beta(probs, labels, t, beta, pi1):
    """Prior-weighted, probability-weighted F-beta surrogate.

    (1 + b^2) pi1 E[p 1{p >= t} | y=1] / (b^2 pi1 + (1 - pi1) P(p >= t | y=0)),
    with class-conditional sample means.  Not clamped; it can exceed 1.
    """
    p, y = _arrays(probs, labels)
    _require_both(y)
    b2 = beta * beta
    pos = p[y == 1]
    neg = p[y == 0]
    num = (1 + b2) * pi1 * np.mean(pos * (pos >= t))
    den = b2 * pi1 + (1 - pi1) * np.mean(neg >= t)
    return float(num / den)


# ---------------------------------------------------------------------------
# Threshold-free metrics
# ---------------------------------------------------------------------------


def midranks(x):
    """1-based ranks with ties sharing the average rank."""
    x = np.asarray(x, dtype=float)
    order = np.argsort(x, kind="mergesort")
    xs = x[order]
    n = x.size
    ranks_sorted = np.empty(n)
    i = 0
    while i < n:
        j = i
        while j < n and xs[j] == xs[i]:
            j += 1
        ranks_sorted[i:j] = 0.5 * (i + j - 1) + 1
        i = j
    out = np.empty(n)
    out[order] = ranks_sorted
    return out


def auroc(scores, labels):
    """Mann-Whitney AUC with half credit for ties."""
    s, y = _arrays(scores, labels)
    _require_both(y)
    m = int(y.sum())
    n = y.size - m
    r = midranks(s)
    return float((r[y == 1].sum() - m * (m + 1) / 2) / (m * n))


def average_precision(scores, labels):
    """Step-wise AP over descending distinct-score cut points."""
    s, y = _arrays(scores, labels)
    _require_both(y)
    return _ap_counts_fn(s, y)(np.ones(y.size))


def _ap_counts_fn(scores, labels):
    """AP as a function of per-sample multiplicities (tie groups fixed)."""
    order = np.argsort(-scores, kind="mergesort")
    ss = scores[order]
    ys = labels[order]
    last_of_group = np.r_[ss[1:] != ss[:-1], True]

    def fn(counts):
        w = counts[order]
        tp = np.cumsum(w * ys)[last_of_group]
        k = np.cumsum(w)[last_of_group]
        n_pos = tp[-1]
        d_tp = np.diff(np.r_[0.0, tp])
        hit = d_tp > 0
        return float(np.sum(d_tp[hit] / n_pos * (tp[hit] / k[hit])))

    return fn


average_precision.counts_fn = _ap_counts_fn


def brier(probs, labels):
    p, y = _arrays(probs, labels)
    return float(np.mean((y - p) ** 2))


def ece_mce(probs, labels, n_bins=10):
    bins = reliability_bins(probs, labels, n_bins)
    occ = bins.occupied
    if not occ.any():
        return 0.0, 0.0
    gaps = bins.gaps()[occ]
    w = bins.counts[occ] / bins.counts.sum()
    return float(np.sum(w * gaps)), float(np.max(gaps))


# ---------------------------------------------------------------------------
# Precision-floor threshold
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class OperatingPoint:
    threshold: float
    precision: float
    recall: float
    f1: float
    feasible: bool
    p0: float


def threshold_candidates(probs):
    u = np.unique(np.asarray(probs, dtype=float))
    mids = 0.5 * (u[1:] + u[:-1])
    return np.unique(np.r_[0.0, mids, 1.0])


def select_threshold(probs, labels, p0) -> OperatingPoint:
    """Maximise F1 subject to precision >= p0 over midpoint thresholds.

    Ties go to the higher threshold.  When no candidate meets the floor,
    the threshold with the highest precision is taken (F1, then the higher
    threshold, break ties) and ``feasible`` is False.
    """
    p, y = _arrays(probs, labels)
    _require_both(y)
    ts = threshold_candidates(p)
    pos = np.sort(p[y == 1])
    neg = np.sort(p[y == 0])
    tp = pos.size - np.searchsorted(pos, ts, side="left")
    fp = neg.size - np.searchsorted(neg, ts, side="left")
    fn = pos.size - tp
    with np.errstate(invalid="ignore", divide="ignore"):
        prec = np.where(tp + fp > 0, tp / np.maximum(tp + fp, 1), 0.0)
        rec = tp / pos.size
        f1 = np.where(tp > 0, 2 * tp / (2 * tp + fp + fn), 0.0)
    feasible = prec >= p0
    idx = np.arange(ts.size)
    if feasible.any():
        cand = idx[feasible]
        best = cand[np.lexsort((ts[cand], f1[cand]))[-1]]
    else:
        best = idx[np.lexsort((ts, f1, prec))[-1]]
    return OperatingPoint(float(ts[best]), float(prec[best]), float(rec[best]), float(f1[best]),
                          bool(feasible.any()), float(p0))


# ---------------------------------------------------------------------------
# BCa bootstrap
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BootstrapConfig:
    n_resamples: int = 2000
    confidence: float = 0.95
    seed: int = 0
    stratified: bool = False

    def __post_init__(self):
        if not 0 < self.confidence < 1:
            raise ValueError("confidence must lie in (0, 1)")
        if self.n_resamples < 1:
            raise ValueError("n_resamples must be positive")


@dataclass
class BootstrapInterval:
    lo: float
    hi: float
    point: float
    z0: float = 0.0
    acceleration: float = 0.0
    degenerate: bool = False
    redraw_capped: int = 0
    boot: Optional[np.ndarray] = field(default=None, repr=False)


def percentile_interval(boot, confidence):
    alpha = (1 - confidence) / 2
    lo, hi = np.quantile(np.asarray(boot, dtype=float), [alpha, 1 - alpha])
    return float(lo), float(hi)


def bca_endpoints(boot, z0, a, confidence):
    """Quantiles of ``boot`` at the BCa-adjusted levels."""
    alpha = (1 - confidence) / 2
    if z0 == 0 and a == 0:
        # skip the ndtr(ndtri(q)) round trip, which is not bit-exact
        return percentile_interval(boot, confidence)
    levels = []
    for q in (alpha, 1 - alpha):
        zq = ndtri(q)
        levels.append(ndtr(z0 + (z0 + zq) / (1 - a * (z0 + zq))))
    lo, hi = np.quantile(np.asarray(boot, dtype=float), levels)
    return float(lo), float(hi)


def jackknife_acceleration(jack):
    jack = np.asarray(jack, dtype=float)
    d = jack.mean() - jack
    den = np.sum(d ** 2)
    if den == 0:
        return 0.0
    return float(np.sum(d ** 3) / (6.0 * den ** 1.5))


def bias_correction(boot, point):
    """z0 from the fraction of bootstrap values strictly below ``point``.

    The fraction is clamped to [1/(2B), 1 - 1/(2B)] to keep z0 finite.
    """
    boot = np.asarray(boot, dtype=float)
    B = boot.size
    frac = np.mean(boot < point)
    frac = min(max(frac, 0.5 / B), 1 - 0.5 / B)
    return float(ndtri(frac))


def _has_both(y):
    return y.size > 0 and y.min() != y.max()


def _resample(rng, y, stratified):
    n = y.size
    if not stratified:
        return rng.integers(0, n, size=n)
    parts = []
    for cls in (0, 1):
        idx = np.flatnonzero(y == cls)
        parts.append(idx[rng.integers(0, idx.size, size=idx.size)])
    return np.concatenate(parts)


def bca_bootstrap(statistic: Callable, probs, labels, config: BootstrapConfig = BootstrapConfig(),
                  keep_samples=False) -> BootstrapInterval:
    """BCa interval for ``statistic(probs, labels)``.

    Resample ``b`` uses its own generator spawned from ``config.seed``, so
    results do not depend on evaluation order.  Resamples missing a class
    are redrawn from the same generator up to 10 times; after that the
    last draw is used as is and counted in ``redraw_capped``.
    """
    p, y = _arrays(probs, labels)
    if y.size < 10:
        raise ValueError("bootstrap needs n >= 10")
    if config.n_resamples < 100:
        warnings.warn("fewer than 100 resamples; BCa endpoints are unreliable", stacklevel=2)
    point = float(statistic(p, y))
    # Statistics exposing ``counts_fn`` are evaluated from multiplicities,
    # which avoids re-sorting each resample; the draws are unchanged.
    fast = statistic.counts_fn(p, y) if hasattr(statistic, "counts_fn") else None
    children = np.random.SeedSequence(config.seed).spawn(config.n_resamples)
    boot = np.empty(config.n_resamples)
    capped = 0
    for b, child in enumerate(children):
        rng = np.random.default_rng(child)
        for _ in range(10):
            idx = _resample(rng, y, config.stratified)
            if _has_both(y[idx]):
                break
        else:
            capped += 1
        if fast is not None:
            boot[b] = fast(np.bincount(idx, minlength=y.size).astype(float))
        else:
            boot[b] = statistic(p[idx], y[idx])
    if np.all(boot == boot[0]):
        return BootstrapInterval(point, point, point, degenerate=True, redraw_capped=capped,
                                 boot=boot if keep_samples else None)
    z0 = bias_correction(boot, point)
    keep = np.ones(y.size, dtype=bool)
    jack = np.empty(y.size)
    ones = np.ones(y.size)
    for i in range(y.size):
        if fast is not None:
            ones[i] = 0.0
            jack[i] = fast(ones)
            ones[i] = 1.0
        else:
            keep[i] = False
            jack[i] = statistic(p[keep], y[keep])
            keep[i] = True
    a = jackknife_acceleration(jack)
    lo, hi = bca_endpoints(boot, z0, a, config.confidence)
    return BootstrapInterval(lo, hi, point, z0, a, False, capped, boot if keep_samples else None)


# ---------------------------------------------------------------------------
# DeLong
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DeLongResult:
    auc_a: float
    auc_b: float
    z: float
    p_value: float
    var_a: float
    var_b: float
    cov_ab: float
    zero_variance_unequal: bool = False


def _structural_components(scores, y):
    """DeLong placement values V10 (per positive) and V01 (per negative)."""
    pos = scores[y == 1]
    neg = scores[y == 0]
    m, n = pos.size, neg.size
    r_all = midranks(np.r_[pos, neg])
    r_pos = midranks(pos)
    r_neg = midranks(neg)
    v10 = (r_all[:m] - r_pos) / n
    v01 = 1.0 - (r_all[m:] - r_neg) / m
    return v10, v01


def delong_test(scores_a, scores_b, labels) -> DeLongResult:
    """Two-sided DeLong test for two correlated AUCs on the same samples."""
    a, y = _arrays(scores_a, labels)
    b, _ = _arrays(scores_b, labels)
    _require_both(y)
    m = int(y.sum())
    n = y.size - m
    v10 = np.vstack([_structural_components(s, y)[0] for s in (a, b)])
    v01 = np.vstack([_structural_components(s, y)[1] for s in (a, b)])
    aucs = v10.mean(axis=1)
    s10 = np.cov(v10, ddof=1) if m > 1 else np.zeros((2, 2))
    s01 = np.cov(v01, ddof=1) if n > 1 else np.zeros((2, 2))
    S = s10 / m + s01 / n
    var_diff = S[0, 0] + S[1, 1] - 2 * S[0, 1]
    diff = aucs[0] - aucs[1]
    flagged = False
    if var_diff <= 1e-300:
        if diff == 0:
            z, pval = 0.0, 1.0
        else:
            z, pval, flagged = math.copysign(math.inf, diff), 0.0, True
    else:
        z = float(diff / math.sqrt(var_diff))
        pval = float(2 * ndtr(-abs(z)))
    return DeLongResult(float(aucs[0]), float(aucs[1]), z, pval, float(S[0, 0]), float(S[1, 1]),
                        float(S[0, 1]), flagged)


def delong_variance(scores, labels) -> float:
    return delong_test(scores, scores, labels).var_a


# ---------------------------------------------------------------------------
# Report
# ---------------------------------------------------------------------------


@dataclass
class MetricReport:
    recall: float
    precision: float
    f1: float
    f_beta: dict
    f_tilde_beta: dict
    auroc: float
    average_precision: float
    balanced_accuracy: float
    brier: float
    ece: float
    mce: float
    threshold: float = math.nan
    intervals: dict = field(default_factory=dict)
    delong_p: Optional[float] = None

    def to_dict(self):
        out = {
            "recall": self.recall,
            "precision": self.precision,
            "f1": self.f1,
            "auroc": self.auroc,
            "average_precision": self.average_precision,
            "balanced_accuracy": self.balanced_accuracy,
            "brier": self.brier,
            "ece": self.ece,
            "mce": self.mce,
            "threshold": self.threshold,
        }
        for b, v in self.f_beta.items():
            out[f"f_beta_{_beta_key(b)}"] = v
        for b, v in self.f_tilde_beta.items():
            out[f"f_tilde_beta_{_beta_key(b)}"] = v
        for name, (lo, hi) in self.intervals.items():
            out[f"{name}_ci"] = [lo, hi]
        if self.delong_p is not None:
            out["delong_p"] = self.delong_p
        return out

    def scalars(self):
        """Flat name -> float view without intervals (for aggregation)."""
        return {k: v for k, v in self.to_dict().items() if not isinstance(v, list)}


def _beta_key(b):
    return f"{b:g}"


def recall_statistic(t):
    def stat(p, y):
        tp, fp, tn, fn = confusion_at(p, y, t)
        return _ratio(tp, tp + fn)

    def counts_fn(p, y):
        pos = y == 1
        hit = pos & (p >= t)

        def fn(counts):
            return _ratio(float(counts[hit].sum()), float(counts[pos].sum()))
        return fn

    stat.counts_fn = counts_fn
    return stat


def evaluate(probs, labels, threshold, betas: Sequence[float] = DEFAULT_BETAS, pi1=None, n_bins=10,
             bootstrap: Optional[BootstrapConfig] = None) -> MetricReport:
    """All metrics for calibrated ``probs`` at ``threshold``.

    ``pi1`` defaults to the positive rate of ``labels``.  With a bootstrap
    config, BCa intervals are attached for average precision and recall.
    """
    p, y = _arrays(probs, labels)
    _require_both(y)
    tp, fp, tn, fn = confusion_at(p, y, threshold)
    prf = prf_metrics(tp, fp, tn, fn)
    pi = float(y.mean()) if pi1 is None else pi1
    ece, mce = ece_mce(p, y, n_bins)
    report = MetricReport(
        recall=prf.recall,
        precision=prf.precision,
        f1=prf.f1,
        f_beta={b: f_beta_from_counts(tp, fp, fn, b) for b in betas},
        f_tilde_beta={b: f_tilde_beta(p, y, threshold, b, pi) for b in betas},
        auroc=auroc(p, y),
        average_precision=average_precision(p, y),
        balanced_accuracy=prf.balanced_accuracy,
        brier=brier(p, y),
        ece=ece,
        mce=mce,
        threshold=float(threshold),
    )
    if bootstrap is not None:
        ap = bca_bootstrap(average_precision, p, y, bootstrap)
        rc = bca_bootstrap(recall_statistic(threshold), p, y, bootstrap)
        report.intervals = {"average_precision": (ap.lo, ap.hi), "recall": (rc.lo, rc.hi)}
    return report
