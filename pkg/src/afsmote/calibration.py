"""Post-hoc probability calibration and reliability binning."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
from scipy.special import expit, xlogy

from .errors import SingleClassInput, UnfittedMap

KINDS = ("platt", "isotonic", "temperature")
TEMPERATURE_BRACKET = (0.05, 20.0)


def binary_nll(probs, labels, targets=None) -> float:
    """Mean cross-entropy; ``targets`` overrides hard labels (Platt smoothing)."""
    p = np.asarray(probs, dtype=float)
    t = np.asarray(labels if targets is None else targets, dtype=float)
    return float(-np.mean(xlogy(t, p) + xlogy(1 - t, 1 - p)))


@dataclass
class CalibrationMap:
    kind: str
    params: dict = field(default_factory=dict)
    n_samples: int = 0
    final_loss: float = math.nan

    def apply(self, raw):
        return apply_calibration(self, raw)

    def to_dict(self):
        params = {k: (list(map(float, v)) if isinstance(v, np.ndarray) else v) for k, v in self.params.items()}
        return {"kind": self.kind, "params": params, "n_samples": self.n_samples, "final_loss": self.final_loss}


def _require_both(labels):
    y = np.asarray(labels, dtype=float)
    if y.min() == y.max():
        raise SingleClassInput("calibration needs both classes")
    return y


# ---------------------------------------------------------------------------
# Platt
# ---------------------------------------------------------------------------


def platt_targets(labels):
    y = np.asarray(labels, dtype=float)
    n_pos = y.sum()
    n_neg = y.size - n_pos
    return np.where(y == 1, (n_pos + 1) / (n_pos + 2), 1 / (n_neg + 2))


def _platt_loss(a, b, s, t):
    z = a * s + b
    return float(np.mean(np.logaddexp(0.0, z) - t * z))


def fit_platt(raw_scores, labels, max_iter=100, tol=1e-10) -> CalibrationMap:
    """Fit ``sigma(a*s + b)`` by damped Newton on Platt's smoothed targets.

    Starts from the identity map (a=1, b=0), so the fitted objective never
    exceeds that of ``sigma(s)``.
    """
    s = np.asarray(raw_scores, dtype=float)
    y = _require_both(labels)
    t = platt_targets(y)
    a, b = 1.0, 0.0
    loss = _platt_loss(a, b, s, t)
    for _ in range(max_iter):
        p = expit(a * s + b)
        r = p - t
        g = np.array([np.mean(r * s), np.mean(r)])
        if np.max(np.abs(g)) <= tol:
            break
        h = p * (1 - p)
        H = np.array([[np.mean(h * s * s), np.mean(h * s)], [np.mean(h * s), np.mean(h)]])
        H += 1e-12 * np.eye(2)
        try:
            step = np.linalg.solve(H, g)
        except np.linalg.LinAlgError:
            step = g
        scale = 1.0
        for _ in range(21):
            na, nb = a - scale * step[0], b - scale * step[1]
            nl = _platt_loss(na, nb, s, t)
            if nl <= loss:
                break
            scale *= 0.5
        else:
            break
        a, b, loss = na, nb, nl
    return CalibrationMap("platt", {"a": float(a), "b": float(b)}, int(s.size), loss)


# ---------------------------------------------------------------------------
# Isotonic (pool adjacent violators)
# ---------------------------------------------------------------------------


def pav(values, weights=None):
    """Weighted pool-adjacent-violators; returns the non-decreasing fit."""
    v = np.asarray(values, dtype=float)
    w = np.ones_like(v) if weights is None else np.asarray(weights, dtype=float)
    means, wsum, sizes = [], [], []
    for vi, wi in zip(v, w):
        means.append(vi)
        wsum.append(wi)
        sizes.append(1)
        while len(means) > 1 and means[-2] > means[-1]:
            m2, w2, c2 = means.pop(), wsum.pop(), sizes.pop()
            m1, w1, c1 = means.pop(), wsum.pop(), sizes.pop()
            wt = w1 + w2
            means.append((m1 * w1 + m2 * w2) / wt)
            wsum.append(wt)
            sizes.append(c1 + c2)
    return np.repeat(means, sizes)


def fit_isotonic_pav(raw_scores, labels) -> CalibrationMap:
    """Non-decreasing step function of the score minimising squared error.

    Equal scores are pooled into one weighted point before PAV.  The map
    stores one breakpoint per distinct score (its left edge) and the
    fitted value there.
    """
    s = np.asarray(raw_scores, dtype=float)
    y = np.asarray(labels, dtype=float)
    if s.size < 2:
        raise ValueError("isotonic calibration needs at least 2 samples")
    uniq, inv, counts = np.unique(s, return_inverse=True, return_counts=True)
    sums = np.bincount(inv, weights=y)
    fitted = pav(sums / counts, counts)
    probs = fitted[inv]
    m = CalibrationMap("isotonic", {"breakpoints": uniq, "values": fitted}, int(s.size))
    m.final_loss = binary_nll(probs, y)
    return m


# ---------------------------------------------------------------------------
# Temperature
# ---------------------------------------------------------------------------


def _temp_nll(T, z, y):
    u = z / T
    return float(np.mean(np.logaddexp(0.0, u) - y * u))


def golden_section(f, lo, hi, tol=1e-9, max_iter=200):
    invphi = (math.sqrt(5) - 1) / 2
    a, b = lo, hi
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(max_iter):
        if b - a <= tol:
            break
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = f(d)
    return (a + b) / 2


def fit_temperature(raw_logits, labels, bracket=TEMPERATURE_BRACKET) -> CalibrationMap:
    z = np.asarray(raw_logits, dtype=float)
    y = _require_both(labels)
    if not np.all(np.isfinite(z)):
        raise ValueError("logits must be finite")
    T = golden_section(lambda T: _temp_nll(T, z, y), *bracket)
    loss = _temp_nll(T, z, y)
    base = _temp_nll(1.0, z, y)
    if base < loss:
        T, loss = 1.0, base
    return CalibrationMap("temperature", {"T": float(T)}, int(z.size), loss)


# ---------------------------------------------------------------------------


def fit_calibration(kind, raw, labels) -> CalibrationMap:
    if kind == "platt":
        return fit_platt(raw, labels)
    if kind == "isotonic":
        return fit_isotonic_pav(raw, labels)
    if kind == "temperature":
        return fit_temperature(raw, labels)
    raise ValueError(f"unknown calibration kind {kind!r}")


def apply_calibration(cmap: Optional[CalibrationMap], raw):
    if cmap is None or not cmap.params:
        raise UnfittedMap("calibration map has not been fitted")
    s = np.asarray(raw, dtype=float)
    if cmap.kind == "platt":
        return expit(cmap.params["a"] * s + cmap.params["b"])
    if cmap.kind == "temperature":
        return expit(s / cmap.params["T"])
    if cmap.kind == "isotonic":
        bp = np.asarray(cmap.params["breakpoints"])
        vals = np.asarray(cmap.params["values"])
        idx = np.clip(np.searchsorted(bp, s, side="right") - 1, 0, bp.size - 1)
        return vals[idx]
    raise ValueError(f"unknown calibration kind {cmap.kind!r}")


# Which calibrator each classifier family gets under the "auto" policy.
POLICY = {"stump_boost": "isotonic", "logistic": "platt", "linear_svm": "platt"}


def policy_for(classifier: str, override: str = "auto") -> str:
    if override != "auto":
        return override
    return POLICY[classifier]


# ---------------------------------------------------------------------------
# Reliability diagram
# ---------------------------------------------------------------------------


@dataclass
class ReliabilityBins:
    n_bins: int
    mean_pred: np.ndarray  # NaN where the bin is empty
    frac_pos: np.ndarray
    counts: np.ndarray

    @property
    def edges(self):
        return np.linspace(0.0, 1.0, self.n_bins + 1)

    @property
    def occupied(self):
        return self.counts > 0

    def gaps(self):
        return np.abs(self.mean_pred - self.frac_pos)

    def to_csv(self, path):
        e = self.edges
        with Path(path).open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["bin_lo", "bin_hi", "mean_pred", "frac_pos", "count"])
            for i in range(self.n_bins):
                mp = "" if self.counts[i] == 0 else format(self.mean_pred[i], ".17g")
                fp = "" if self.counts[i] == 0 else format(self.frac_pos[i], ".17g")
                w.writerow([format(e[i], ".17g"), format(e[i + 1], ".17g"), mp, fp, int(self.counts[i])])


def bin_index(probs, n_bins):
    p = np.asarray(probs, dtype=float)
    return np.minimum((p * n_bins).astype(np.int64), n_bins - 1)


def reliability_bins(probs, labels, n_bins=10) -> ReliabilityBins:
    """Equal-width bins [i/n, (i+1)/n); p == 1 lands in the last bin."""
    if n_bins < 1:
        raise ValueError("n_bins must be >= 1")
    p = np.asarray(probs, dtype=float)
    y = np.asarray(labels, dtype=float)
    idx = bin_index(p, n_bins)
    counts = np.bincount(idx, minlength=n_bins)
    sp = np.bincount(idx, weights=p, minlength=n_bins)
    sy = np.bincount(idx, weights=y, minlength=n_bins)
    with np.errstate(invalid="ignore", divide="ignore"):
        mean_pred = np.where(counts > 0, sp / counts, np.nan)
        frac_pos = np.where(counts > 0, sy / counts, np.nan)
    return ReliabilityBins(n_bins, mean_pred, frac_pos, counts)
