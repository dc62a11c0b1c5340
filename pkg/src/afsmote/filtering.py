"""Adversarial + boundary-utility filtering of synthetic candidates.

Each candidate gets four head scores in [0, 1]:

* realism   ``s_real``: discriminator probability that the point is a real
  minority sample;
* utility   ``s_util = 1 - sigmoid(alpha * |p - t|)`` from a pilot scorer;
* uncertainty ``s_unc``: normalised binary entropy of the pilot probability;
* density   ``s_den = exp(-r / r_ref)`` from kNN radii to real minority.

The default fused score is ``lam * s_util + (1 - lam) * s_real`` and a
candidate is kept when it reaches ``tau``, optionally followed by a Top-K
(or diversity-regularised Top-K) cut.

Note that ``s_util <= 0.5`` by construction, so the fused score can never
exceed ``0.5 * lam + (1 - lam)``; at ``lam = 0.5`` that ceiling is 0.75.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
from scipy.special import expit, xlogy

from .errors import EmptyHoldout, KTooLarge, TooFewSamples
from .models import fit_stump_boost
from .samplers import knn_table


@dataclass(frozen=True)
class FilterConfig:
    lam: float = 0.5
    tau: float = 0.8
    alpha: float = 4.0
    eta: float = 0.5
    top_k: Optional[int] = None
    diversity_enabled: bool = False
    extended_fusion: bool = False
    # order: realism, utility, uncertainty, density
    head_weights: tuple = (0.25, 0.25, 0.25, 0.25)
    density_k: int = 5

    def __post_init__(self):
        for name in ("lam", "eta"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")
        if self.top_k is not None and self.top_k < 0:
            raise ValueError("top_k must be non-negative")
        w = np.asarray(self.head_weights, dtype=float)
        if w.shape != (4,) or (w < 0).any() or not math.isclose(w.sum(), 1.0, abs_tol=1e-9):
            raise ValueError("head_weights must be 4 non-negative reals summing to 1")


# ---------------------------------------------------------------------------
# Discriminator
# ---------------------------------------------------------------------------


@dataclass
class Discriminator:
    """Real (label 1) vs synthetic (label 0) model plus its held-out rows."""

    model: object
    holdout_real: np.ndarray
    holdout_synthetic: np.ndarray

    def predict_proba(self, X):
        return self.model.predict_proba(X)


def _grouped_holdout(R, C, fraction, rng):
    """Hold out about ``fraction`` of each side, keeping rows with identical
    coordinates on the same side of the split so that a copied row cannot
    leak between training and held-out data."""
    n_r, n_c = R.shape[0], C.shape[0]
    target = [min(max(1, int(math.floor(fraction * n + 0.5))), n - 1) for n in (n_r, n_c)]
    _, group = np.unique(np.vstack([R, C]), axis=0, return_inverse=True)
    group = group.ravel()
    members = [[] for _ in range(group.max() + 1)]
    for i, g in enumerate(group):
        members[g].append(i)
    held = np.zeros(n_r + n_c, dtype=bool)
    taken = [0, 0]
    for g in rng.permutation(len(members)):
        rows = members[g]
        need = [sum(i < n_r for i in rows), sum(i >= n_r for i in rows)]
        if taken[0] + need[0] <= target[0] and taken[1] + need[1] <= target[1]:
            held[rows] = True
            taken = [taken[0] + need[0], taken[1] + need[1]]
            if taken == target:
                break
    return held[:n_r], held[n_r:]


def train_discriminator(real_minority, candidates, seed=0, n_rounds=200, learning_rate=0.1,
                        holdout_fraction=0.2) -> Discriminator:
    """Boosted-stump discriminator on a per-side 80/20 split.

    No class re-weighting: the model's output is the probability of
    "real" under the observed real/synthetic mix.
    """
    R = np.asarray(real_minority, dtype=float)
    C = np.asarray(getattr(candidates, "points", candidates), dtype=float)
    if R.shape[0] < 5 or C.shape[0] < 5:
        raise TooFewSamples(f"discriminator needs >= 5 rows per side, got {R.shape[0]} real / {C.shape[0]} synthetic")
    r_ho, c_ho = _grouped_holdout(R, C, holdout_fraction, np.random.default_rng(seed))
    X = np.vstack([R[~r_ho], C[~c_ho]])
    y = np.r_[np.ones(int((~r_ho).sum())), np.zeros(int((~c_ho).sum()))]
    model = fit_stump_boost(X, y, n_rounds=n_rounds, learning_rate=learning_rate, seed=seed)
    return Discriminator(model, R[r_ho], C[c_ho])


def realism_score(g, points):
    """Discriminator probability of "real"; the model already applies the logistic."""
    return np.asarray(g.predict_proba(points), dtype=float)


def estimate_epsilon(g, held_out_synthetic, eta=0.5):
    """Fraction of held-out synthetic points the discriminator accepts at ``eta``."""
    pts = np.asarray(held_out_synthetic, dtype=float)
    if pts.shape[0] == 0:
        raise EmptyHoldout("no held-out synthetic points")
    return float(np.mean(realism_score(g, pts) >= eta))


# ---------------------------------------------------------------------------
# Heads
# ---------------------------------------------------------------------------


def boundary_distance(p_hat, t):
    return np.abs(np.asarray(p_hat, dtype=float) - t)


def utility_score(d, alpha=4.0):
    # 1 - sigmoid(z) == sigmoid(-z), without cancellation for large z
    return expit(-alpha * np.asarray(d, dtype=float))


def uncertainty_score(p_hat):
    p = np.asarray(p_hat, dtype=float)
    h = -(xlogy(p, p) + xlogy(1 - p, 1 - p))
    return h / math.log(2)


def density_score(candidates, real_minority, k=5):
    """``exp(-r / r_ref)`` where r is the mean distance to the k nearest real
    minority points and r_ref the median of the same quantity over the
    real minority points themselves (self excluded)."""
    C = np.asarray(candidates, dtype=float)
    R = np.asarray(real_minority, dtype=float)
    if k > R.shape[0] - 1:
        raise KTooLarge(f"k={k} needs at least {k + 1} real minority points")
    _, dc = knn_table(R, C, k=k, return_distance=True)
    _, dr = knn_table(R, k=k, exclude_self=True, return_distance=True)
    r = dc.mean(axis=1)
    r_ref = max(float(np.median(dr.mean(axis=1))), 1e-12)
    return np.exp(-r / r_ref)


@dataclass
class HeadScores:
    s_real: np.ndarray
    s_util: np.ndarray
    s_unc: np.ndarray
    s_den: np.ndarray

    def __post_init__(self):
        n = len(self.s_real)
        if not (len(self.s_util) == len(self.s_unc) == len(self.s_den) == n):
            raise ValueError("head vectors differ in length")

    def __len__(self):
        return len(self.s_real)


def fuse(heads: HeadScores, config: FilterConfig):
    if config.extended_fusion:
        w = config.head_weights
        return w[0] * heads.s_real + w[1] * heads.s_util + w[2] * heads.s_unc + w[3] * heads.s_den
    return config.lam * heads.s_util + (1 - config.lam) * heads.s_real


@dataclass
class FilteredSet:
    heads: HeadScores
    fused: np.ndarray
    retained: np.ndarray  # bool mask over candidates
    selection_order: list = field(default_factory=list)

    @property
    def retained_indices(self):
        return np.flatnonzero(self.retained)

    def to_csv(self, path):
        h = self.heads
        with Path(path).open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["index", "s_real", "s_util", "s_unc", "s_den", "S", "retained"])
            for i in range(len(h)):
                w.writerow([i] + [format(float(v), ".17g") for v in
                                  (h.s_real[i], h.s_util[i], h.s_unc[i], h.s_den[i], self.fused[i])]
                           + [int(self.retained[i])])


def greedy_diverse(S, positions, candidates, K):
    """Farthest-point style Top-K over ``candidates`` (indices into S).

    Starts from the highest-S candidate, then repeatedly adds the argmax
    of ``S + gamma * (distance to nearest selected)`` with
    ``gamma = 0.1 * range(S over candidates)``.  Ties go to lower index.
    """
    cand = np.asarray(candidates)
    s = S[cand]
    P = positions[cand]
    gamma = 0.1 * (s.max() - s.min())
    first = int(np.argmax(s))
    chosen = [first]
    mind = np.sqrt(np.sum((P - P[first]) ** 2, axis=1))
    taken = np.zeros(cand.size, dtype=bool)
    taken[first] = True
    for _ in range(K - 1):
        val = np.where(taken, -np.inf, s + gamma * mind)
        j = int(np.argmax(val))
        chosen.append(j)
        taken[j] = True
        mind = np.minimum(mind, np.sqrt(np.sum((P - P[j]) ** 2, axis=1)))
    return [int(cand[j]) for j in chosen]


def fuse_and_select(heads: HeadScores, config: FilterConfig, positions=None) -> FilteredSet:
    S = fuse(heads, config)
    base = np.flatnonzero(S >= config.tau)
    order = [int(i) for i in base[np.lexsort((base, -S[base]))]]
    K = config.top_k
    if K is not None and base.size > K:
        if config.diversity_enabled:
            if positions is None:
                raise ValueError("diversity selection needs candidate positions")
            order = greedy_diverse(S, np.asarray(positions, dtype=float), base, K) if K > 0 else []
        else:
            order = order[:K]
    keep = np.zeros(S.size, dtype=bool)
    keep[order] = True
    return FilteredSet(heads, S, keep, order)


def score_heads(discriminator, candidate_points, pilot_probs, t, real_minority, config: FilterConfig,
                disc_points=None) -> HeadScores:
    """All four heads for a candidate batch.

    ``disc_points`` lets the realism and density heads see a different
    representation (e.g. PCA coordinates) than the pilot scorer.
    """
    dp = candidate_points if disc_points is None else disc_points
    s_real = realism_score(discriminator, dp)
    s_util = utility_score(boundary_distance(pilot_probs, t), config.alpha)
    s_unc = uncertainty_score(pilot_probs)
    k = min(config.density_k, np.asarray(real_minority).shape[0] - 1)
    s_den = density_score(dp, real_minority, k) if len(dp) else np.empty(0)
    return HeadScores(s_real, s_util, s_unc, s_den)


# ---------------------------------------------------------------------------
# PCA front-end
# ---------------------------------------------------------------------------


@dataclass
class PCAProjection:
    mean: np.ndarray
    components: np.ndarray  # d x r, orthonormal columns
    explained_variance: np.ndarray
    rank: int
    rank_deficient: bool = False

    def project(self, X):
        return (np.asarray(X, dtype=float) - self.mean) @ self.components

    def reconstruct(self, Z):
        return np.asarray(Z, dtype=float) @ self.components.T + self.mean


def _orthonormal_complement(basis, d, count):
    out = []
    cols = list(basis)
    for _ in range(count):
        best, best_norm = None, -1.0
        for j in range(d):
            e = np.zeros(d)
            e[j] = 1.0
            for c in cols:
                e -= np.dot(c, e) * c
            nrm = np.linalg.norm(e)
            if nrm > best_norm + 1e-12:
                best, best_norm = e / nrm, nrm
        cols.append(best)
        out.append(best)
    return out


def pca_fit(features, r, tol=1e-10, max_iter=10_000, seed=0) -> PCAProjection:
    """Top-``r`` principal axes by power iteration with deflation.

    Each iterate is re-orthogonalised against earlier axes.  Directions
    with (relative) zero variance are not iterated: they are filled with
    an orthonormal complement and ``rank_deficient`` is set.
    """
    X = np.asarray(features, dtype=float)
    n, d = X.shape
    if r > d:
        raise ValueError(f"target dimension {r} exceeds feature dimension {d}")
    if n < 2:
        raise ValueError("PCA needs at least 2 rows")
    mean = X.mean(axis=0)
    Xc = X - mean
    C = Xc.T @ Xc / (n - 1)
    total = np.trace(C)
    rng = np.random.default_rng(seed)
    comps, evals = [], []
    A = C.copy()
    for _ in range(r):
        v = rng.standard_normal(d)
        for c in comps:
            v -= np.dot(c, v) * c
        v /= np.linalg.norm(v)
        lam = 0.0
        for _ in range(max_iter):
            w = A @ v
            for c in comps:
                w -= np.dot(c, w) * c
            nrm = np.linalg.norm(w)
            if nrm <= 1e-14 * max(total, 1e-300):
                lam = 0.0
                break
            w /= nrm
            if np.linalg.norm(w - v) < tol:
                v = w
                break
            v = w
        lam = float(v @ C @ v)
        if lam <= 1e-12 * max(total, 1e-300):
            break
        comps.append(v)
        evals.append(lam)
        A = A - lam * np.outer(v, v)
    rank = len(comps)
    deficient = rank < r
    if deficient:
        comps.extend(_orthonormal_complement(comps, d, r - rank))
        evals.extend([float(c @ C @ c) for c in comps[rank:]])
    comps = [c if c[np.argmax(np.abs(c))] >= 0 else -c for c in comps]
    W = np.column_stack(comps) if comps else np.empty((d, 0))
    return PCAProjection(mean, W, np.asarray(evals), rank, deficient)


def pca_project(proj: PCAProjection, features):
    return proj.project(features)


# ---------------------------------------------------------------------------
# Theory diagnostics
# ---------------------------------------------------------------------------


@dataclass
class TheoremDiagnostics:
    epsilon_hat: float
    lipschitz_over_reach_hat: Optional[float]
    boundary_threshold_t: float


def _probs_of(scorer, X):
    if hasattr(scorer, "predict_proba"):
        return np.asarray(scorer.predict_proba(X), dtype=float)
    return np.asarray(scorer(X), dtype=float)


def lipschitz_and_reach(scorer, minority, t, band=0.1, probs=None):
    """(L_hat, rho_hat); L_hat is None when fewer than two minority points
    lie within ``band`` of the threshold.

    L_hat is the largest finite-difference slope of the scorer between
    boundary-adjacent minority pairs; rho_hat is the median nearest-
    neighbour distance among all minority points.
    """
    M = np.asarray(minority, dtype=float)
    if M.shape[0] < 2:
        raise TooFewSamples("need at least 2 minority points")
    p = _probs_of(scorer, M) if probs is None else np.asarray(probs, dtype=float)
    _, nd = knn_table(M, k=1, exclude_self=True, return_distance=True)
    rho = float(np.median(nd[:, 0]))
    adj = np.flatnonzero(np.abs(p - t) <= band + 1e-12)
    if adj.size < 2:
        return None, rho
    A = M[adj]
    pa = p[adj]
    L = 0.0
    step = max(1, 2_000_000 // max(1, adj.size))
    for s in range(0, adj.size, step):
        diff = A[s:s + step, None, :] - A[None, :, :]
        dist = np.sqrt(np.sum(diff ** 2, axis=2))
        dp = np.abs(pa[s:s + step, None] - pa[None, :])
        ok = dist > 0
        if ok.any():
            L = max(L, float(np.max(dp[ok] / dist[ok])))
    return L, rho


def estimate_l_over_rho(scorer, minority, t, band=0.1, probs=None):
    """Scale-free diagnostic ``L_hat * rho_hat``, or None if no boundary-adjacent pair exists."""
    L, rho = lipschitz_and_reach(scorer, minority, t, band, probs)
    if L is None:
        return None
    return L * rho
