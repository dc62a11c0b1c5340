"""SMOTE-family candidate generation.

All samplers work on the minority rows of a (standardised) Dataset and
emit a CandidateSet where every point is

    minority[parent_a] + gap * (minority[parent_b] - minority[parent_a])

with ``parent_b`` one of ``parent_a``'s k nearest minority neighbours.
Parent indices refer to positions within the minority rows, in dataset
order.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .dataset import Dataset, round_half_up
from .errors import AllSafe, EmptyDangerSet, KTooLarge, NoSupportVectors, TooFewMinority
from .models import LinearMaxMarginModel, fit_linear_svm

METHODS = ("none", "smote", "adasyn", "borderline", "svm_smote")

# Upper bound on floats materialised per distance block.
_BLOCK_FLOATS = 4_000_000


@dataclass(frozen=True)
class SamplerConfig:
    method: str = "smote"
    k_neighbors: int = 5
    overgen_ratio: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown sampler method {self.method!r}; expected one of {METHODS}")
        if self.k_neighbors < 1:
            raise ValueError("k_neighbors must be >= 1")
        if not self.overgen_ratio > 0:
            raise ValueError("overgen_ratio must be positive")


@dataclass
class CandidateSet:
    points: np.ndarray
    parent_a: np.ndarray
    parent_b: np.ndarray
    gap: np.ndarray
    method: str = "smote"
    fallback: Optional[str] = None

    def __len__(self):
        return self.points.shape[0]

    @classmethod
    def empty(cls, d, method="none"):
        return cls(np.empty((0, d)), np.empty(0, np.int64), np.empty(0, np.int64), np.empty(0), method)

    def segment_residual(self, minority: np.ndarray) -> float:
        """Max abs deviation of the points from their parent segments."""
        if len(self) == 0:
            return 0.0
        a = minority[self.parent_a]
        b = minority[self.parent_b]
        return float(np.max(np.abs(self.points - (a + self.gap[:, None] * (b - a)))))

    def subset(self, mask_or_idx) -> "CandidateSet":
        return CandidateSet(self.points[mask_or_idx], self.parent_a[mask_or_idx],
                            self.parent_b[mask_or_idx], self.gap[mask_or_idx], self.method, self.fallback)


def write_candidates_csv(cands: CandidateSet, path) -> None:
    d = cands.points.shape[1]
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([f"f{j}" for j in range(d)] + ["parent_a", "parent_b", "gap"])
        for x, a, b, g in zip(cands.points, cands.parent_a, cands.parent_b, cands.gap):
            w.writerow([format(v, ".17g") for v in x] + [int(a), int(b), format(g, ".17g")])


# ---------------------------------------------------------------------------
# Nearest neighbours
# ---------------------------------------------------------------------------


def knn_indices(points, query, k, exclude_self=False):
    """Indices of the ``k`` points nearest to ``query`` (Euclidean).

    Ties are broken by lower index.  With ``exclude_self`` the
    lowest-index point identical to ``query`` is dropped before ranking.
    """
    P = np.asarray(points, dtype=float)
    if P.ndim == 1:
        P = P.reshape(-1, 1)
    q = np.atleast_1d(np.asarray(query, dtype=float))
    d2 = np.sum((P - q) ** 2, axis=1)
    candidates = np.arange(P.shape[0])
    if exclude_self:
        same = np.flatnonzero(d2 == 0.0)
        if same.size:
            candidates = candidates[candidates != same[0]]
    if k > candidates.size:
        raise KTooLarge(f"k={k} exceeds the {candidates.size} available points")
    order = np.argsort(d2[candidates], kind="stable")
    return candidates[order[:k]]


def _stable_topk(d2, k):
    """Row-wise ``argsort(d2, kind="stable")[:, :k]`` via partitioning."""
    if k >= d2.shape[1]:
        return np.argsort(d2, axis=1, kind="stable")[:, :k]
    part = np.argpartition(d2, k - 1, axis=1)[:, :k]
    vals = np.take_along_axis(d2, part, axis=1)
    kth = vals.max(axis=1)
    # Rows where the k-th value is tied with points outside the partition
    # need the full stable sort to honour lowest-index tie breaking.
    clash = np.count_nonzero(d2 <= kth[:, None], axis=1) > k
    order = np.lexsort((part, vals), axis=1)
    top = np.take_along_axis(part, order, axis=1)
    if clash.any():
        top[clash] = np.argsort(d2[clash], axis=1, kind="stable")[:, :k]
    return top


def knn_table(points, queries=None, k=5, exclude_self=False, return_distance=False):
    """Batched kNN.  With ``queries=None`` the points query themselves and
    ``exclude_self`` drops each row's own index."""
    P = np.asarray(points, dtype=float)
    self_query = queries is None
    Q = P if self_query else np.asarray(queries, dtype=float)
    n = P.shape[0]
    avail = n - (1 if (self_query and exclude_self) else 0)
    if k > avail:
        raise KTooLarge(f"k={k} exceeds the {avail} available points")
    out = np.empty((Q.shape[0], k), dtype=np.int64)
    dist = np.empty((Q.shape[0], k)) if return_distance else None
    step = max(1, _BLOCK_FLOATS // max(1, n * P.shape[1]))
    for s in range(0, Q.shape[0], step):
        block = Q[s:s + step]
        d2 = np.zeros((block.shape[0], n))
        for j in range(P.shape[1]):
            d2 += (block[:, j, None] - P[None, :, j]) ** 2
        if self_query and exclude_self:
            rows = np.arange(block.shape[0])
            d2[rows, s + rows] = np.inf
        order = _stable_topk(d2, k)
        out[s:s + step] = order
        if return_distance:
            dist[s:s + step] = np.sqrt(np.take_along_axis(d2, order, axis=1))
    return (out, dist) if return_distance else out


# ---------------------------------------------------------------------------
# Samplers
# ---------------------------------------------------------------------------


def _split(data: Dataset):
    X = np.asarray(data.features, dtype=float)
    y = data.labels
    pos = np.flatnonzero(y == 1)
    return X, y, pos


def candidate_count(data: Dataset, ratio: float) -> int:
    n_pos = int(data.labels.sum())
    deficit = data.n - 2 * n_pos
    return max(0, round_half_up(ratio * deficit))


def _check_minority(n_pos, k):
    if n_pos < k + 1:
        raise TooFewMinority(f"need at least k+1={k + 1} minority rows, got {n_pos}")


def interpolate(minority, parent_a, parent_b, gap):
    a = minority[parent_a]
    return a + np.asarray(gap)[:, None] * (minority[parent_b] - a)


def _emit(minority, nn, bases, rng, method, fallback=None, gap_fn=None):
    m = bases.size
    slots = rng.integers(0, nn.shape[1], size=m)
    u = rng.random(m)
    gap = u if gap_fn is None else gap_fn(bases, u)
    pb = nn[bases, slots]
    pts = interpolate(minority, bases, pb, gap)
    return CandidateSet(pts, bases.astype(np.int64), pb.astype(np.int64), gap, method, fallback)


def majority_fraction(data: Dataset, k: int) -> np.ndarray:
    """Fraction of majority points among each minority row's k nearest
    neighbours in the full data (the row itself excluded)."""
    X, y, pos = _split(data)
    if k > data.n - 1:
        raise KTooLarge(f"k={k} exceeds the {data.n - 1} available points")
    # k+1 neighbours with the query included, then drop the row itself.
    nn = knn_table(X, X[pos], k + 1)
    frac = np.empty(pos.size)
    for i, row in enumerate(pos):
        others = nn[i][nn[i] != row][:k]
        frac[i] = np.mean(y[others] == 0)
    return frac


def smote_generate(data: Dataset, config: SamplerConfig, *, method="smote", fallback=None) -> CandidateSet:
    """Uniform base choice, uniform neighbour slot, gap ~ U[0, 1).

    The generator draws, in order, ``m`` base indices, ``m`` neighbour
    slots and ``m`` gaps.
    """
    X, _, pos = _split(data)
    k = config.k_neighbors
    _check_minority(pos.size, k)
    minority = X[pos]
    m = candidate_count(data, config.overgen_ratio)
    rng = np.random.default_rng(config.seed)
    nn = knn_table(minority, k=k, exclude_self=True)
    bases = rng.integers(0, pos.size, size=m)
    return _emit(minority, nn, bases, rng, method, fallback)


def largest_remainder(weights, total):
    """Integer allocation proportional to ``weights`` summing to ``total``.

    Leftover units go to the largest fractional parts, lower index first
    on ties.
    """
    w = np.asarray(weights, dtype=float)
    share = total * w / w.sum()
    counts = np.floor(share).astype(np.int64)
    left = total - int(counts.sum())
    if left > 0:
        frac = share - counts
        order = np.lexsort((np.arange(w.size), -frac))
        counts[order[:left]] += 1
    return counts


def adasyn_generate(data: Dataset, config: SamplerConfig, strict=False) -> CandidateSet:
    X, _, pos = _split(data)
    k = config.k_neighbors
    _check_minority(pos.size, k)
    r = majority_fraction(data, k)
    if r.sum() == 0:
        if strict:
            raise AllSafe("every minority point has an all-minority neighbourhood")
        return smote_generate(data, config, method="adasyn", fallback="all_safe")
    minority = X[pos]
    m = candidate_count(data, config.overgen_ratio)
    counts = largest_remainder(r, m)
    rng = np.random.default_rng(config.seed)
    nn = knn_table(minority, k=k, exclude_self=True)
    bases = np.repeat(np.arange(pos.size), counts)
    return _emit(minority, nn, bases, rng, "adasyn")


def danger_mask(data: Dataset, k: int) -> np.ndarray:
    """Minority rows whose majority fraction lies in [1/2, 1)."""
    frac = majority_fraction(data, k)
    return (frac >= 0.5) & (frac < 1.0)


def borderline_generate(data: Dataset, config: SamplerConfig, strict=False) -> CandidateSet:
    X, _, pos = _split(data)
    k = config.k_neighbors
    _check_minority(pos.size, k)
    danger = np.flatnonzero(danger_mask(data, k))
    if danger.size == 0:
        if strict:
            raise EmptyDangerSet("no minority point lies in the DANGER band")
        return smote_generate(data, config, method="borderline", fallback="empty_danger")
    minority = X[pos]
    m = candidate_count(data, config.overgen_ratio)
    rng = np.random.default_rng(config.seed)
    nn = knn_table(minority, k=k, exclude_self=True)
    bases = danger[rng.integers(0, danger.size, size=m)]
    return _emit(minority, nn, bases, rng, "borderline")


SVM_EXTRAPOLATION_CAP = 0.5


def svm_smote_generate(data: Dataset, config: SamplerConfig, svm: Optional[LinearMaxMarginModel] = None,
                       strict=False, support_tol=1e-3) -> CandidateSet:
    """SVM-SMOTE: bases are minority support vectors of a linear max-margin model.

    A base whose full-data neighbourhood is mostly minority (majority
    fraction < 1/2) interpolates toward a minority neighbour; otherwise it
    extrapolates away from the neighbour by at most half the segment
    length.  Extrapolated candidates carry a negative gap in [-0.5, 0].
    """
    X, y, pos = _split(data)
    k = config.k_neighbors
    _check_minority(pos.size, k)
    if svm is None:
        svm = fit_linear_svm(X, 2.0 * y - 1.0, seed=config.seed)
    sv = np.flatnonzero(svm.support_mask(X[pos], np.ones(pos.size), tol=support_tol))
    if sv.size == 0:
        if strict:
            raise NoSupportVectors("no minority support vectors")
        return smote_generate(data, config, method="svm_smote", fallback="no_support_vectors")
    minority = X[pos]
    frac = majority_fraction(data, k)
    extrapolate = frac >= 0.5
    m = candidate_count(data, config.overgen_ratio)
    rng = np.random.default_rng(config.seed)
    nn = knn_table(minority, k=k, exclude_self=True)
    bases = sv[rng.integers(0, sv.size, size=m)]

    def gap_fn(b, u):
        return np.where(extrapolate[b], -SVM_EXTRAPOLATION_CAP * u, u)

    return _emit(minority, nn, bases, rng, "svm_smote", gap_fn=gap_fn)


def generate(data: Dataset, config: SamplerConfig, svm=None, strict=False) -> CandidateSet:
    if config.method == "none":
        return CandidateSet.empty(data.d)
    if config.method == "smote":
        return smote_generate(data, config)
    if config.method == "adasyn":
        return adasyn_generate(data, config, strict=strict)
    if config.method == "borderline":
        return borderline_generate(data, config, strict=strict)
    return svm_smote_generate(data, config, svm=svm, strict=strict)
