"""End-to-end experiments: split, oversample, filter, fit, calibrate,
threshold, evaluate; plus parameter sweeps and the theorem-check harness.
"""

from __future__ import annotations

import csv
import hashlib
import itertools
import json
import math
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np
from scipy import stats

from . import __version__
from .calibration import apply_calibration, fit_calibration, policy_for, reliability_bins
from .dataset import (
    Dataset,
    Standardizer,
    SyntheticSpec,
    class_stats,
    load_csv,
    make_gaussian_imbalanced,
    stratified_kfold,
    train_valid_split,
)
from .errors import AFSmoteError
from .evaluation import BootstrapConfig, DEFAULT_BETAS, MetricReport, delong_test, evaluate, select_threshold
from .filtering import (
    FilterConfig,
    TheoremDiagnostics,
    estimate_epsilon,
    estimate_l_over_rho,
    fuse_and_select,
    pca_fit,
    score_heads,
    train_discriminator,
)
from .models import fit_classifier
from .samplers import SamplerConfig, candidate_count, generate

CLASSIFIERS = ("logistic", "stump_boost", "linear_svm")
CALIBRATIONS = ("auto", "platt", "isotonic", "temperature")
TAU_MODES = ("fixed", "validation")
# Fractions of candidates (ranked by fused score) tried when tau is chosen on validation.
TAU_KEEP_FRACTIONS = (0.0, 0.1, 0.25, 0.5, 0.75, 1.0)


@dataclass(frozen=True)
class DataSource:
    csv_path: Optional[str] = None
    label_column: str = "label"
    nan_policy: str = "reject"
    synthetic: SyntheticSpec = field(default_factory=SyntheticSpec)

    def load(self) -> Dataset:
        if self.csv_path:
            return load_csv(self.csv_path, self.label_column, self.nan_policy)
        return make_gaussian_imbalanced(self.synthetic)


@dataclass(frozen=True)
class ExperimentConfig:
    data: DataSource = field(default_factory=DataSource)
    sampler: SamplerConfig = field(default_factory=SamplerConfig)
    filter: FilterConfig = field(default_factory=FilterConfig)
    filter_enabled: bool = True
    tau_selection: str = "fixed"
    classifier: str = "logistic"
    calibration: str = "auto"
    betas: tuple = DEFAULT_BETAS
    p0: float = 0.9
    cv_folds: int = 5
    bootstrap: BootstrapConfig = field(default_factory=BootstrapConfig)
    bootstrap_enabled: bool = True
    pca_target_dim: Optional[int] = None
    seed: int = 0
    l2_lambda: float = 1e-4
    boost_rounds: int = 100
    boost_learning_rate: float = 0.1
    svm_reg_lambda: float = 0.01
    svm_epochs: int = 500
    discriminator_rounds: int = 200
    discriminator_learning_rate: float = 0.1

    def __post_init__(self):
        if self.classifier not in CLASSIFIERS:
            raise ValueError(f"unknown classifier {self.classifier!r}")
        if self.calibration not in CALIBRATIONS:
            raise ValueError(f"unknown calibration {self.calibration!r}")
        if self.tau_selection not in TAU_MODES:
            raise ValueError(f"unknown tau_selection {self.tau_selection!r}")
        if not 0.0 < self.p0 < 1.0:
            raise ValueError("p0 must lie in (0, 1)")
        if self.cv_folds < 2:
            raise ValueError("cv_folds must be >= 2")
        if any(b < 1 for b in self.betas):
            raise ValueError("betas must be >= 1")

    @property
    def method_label(self) -> str:
        if self.sampler.method == "none":
            return "none"
        if self.filter_enabled:
            return "af_smote" if self.sampler.method == "smote" else f"af_{self.sampler.method}"
        return self.sampler.method


def derive_seed(*parts) -> int:
    """Deterministic 63-bit seed from arbitrary hashable parts."""
    h = hashlib.sha256(repr(parts).encode()).digest()
    return int.from_bytes(h[:8], "big") >> 1


def to_jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [to_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def canonical_json(obj) -> str:
    """Sorted keys; floats in shortest round-trip form; non-finite -> null."""
    return json.dumps(to_jsonable(obj), sort_keys=True, indent=2, allow_nan=False) + "\n"


def config_dict(config: ExperimentConfig) -> dict:
    return to_jsonable(asdict(config))


def config_hash(config: ExperimentConfig) -> str:
    return hashlib.sha256(canonical_json(config_dict(config)).encode()).hexdigest()[:16]


# ---------------------------------------------------------------------------
# One fold
# ---------------------------------------------------------------------------


@dataclass
class FoldResult:
    fold: int
    report: MetricReport
    diagnostics: TheoremDiagnostics
    operating_point: dict
    counts: dict
    reliability: object = None
    sampler_fallback: Optional[str] = None
    tau_used: Optional[float] = None
    test_probs: Optional[np.ndarray] = field(default=None, repr=False)
    test_labels: Optional[np.ndarray] = field(default=None, repr=False)

    def to_dict(self):
        d = {
            "fold": self.fold,
            "metrics": self.report.to_dict(),
            "diagnostics": asdict(self.diagnostics),
            "operating_point": self.operating_point,
            "counts": self.counts,
        }
        if self.sampler_fallback:
            d["sampler_fallback"] = self.sampler_fallback
        if self.tau_used is not None:
            d["tau_used"] = self.tau_used
        return d


@dataclass
class _Fitted:
    model: object
    cmap: object
    op: object

    def probs(self, Z):
        return apply_calibration(self.cmap, self.model.decision_function(Z))


def _fit_classifier(config: ExperimentConfig, X, y, seed):
    kind = config.classifier
    if kind == "logistic":
        return fit_classifier(kind, X, y, l2_lambda=config.l2_lambda)
    if kind == "stump_boost":
        return fit_classifier(kind, X, y, seed=seed, n_rounds=config.boost_rounds,
                              learning_rate=config.boost_learning_rate)
    return fit_classifier(kind, X, y, seed=seed, reg_lambda=config.svm_reg_lambda, epochs=config.svm_epochs)


def _fit_calibrate_threshold(config, Xfit, yfit, Zva, yva, seed, pilot=False):
    """Fit, calibrate on validation, pick the precision-floor threshold.

    The pilot scorer is always a Platt-calibrated logistic regression.
    """
    if pilot:
        model = fit_classifier("logistic", Xfit, yfit, l2_lambda=config.l2_lambda)
        cal_kind = "platt"
    else:
        model = _fit_classifier(config, Xfit, yfit, seed)
        cal_kind = policy_for(config.classifier, config.calibration)
    cmap = fit_calibration(cal_kind, model.decision_function(Zva), yva)
    p_va = apply_calibration(cmap, model.decision_function(Zva))
    op = select_threshold(p_va, yva, config.p0)
    return _Fitted(model, cmap, op)


def _augment(Ztr, ytr, extra):
    if extra is None or len(extra) == 0:
        return Ztr, ytr
    return np.vstack([Ztr, extra]), np.r_[ytr, np.ones(len(extra), dtype=ytr.dtype)]


def _check_no_leakage(split):
    tr, va, te = (set(map(int, s)) for s in (split.train_indices, split.valid_indices, split.test_indices))
    if tr & va or tr & te or va & te:
        raise AFSmoteError("train/validation/test indices overlap")


def run_fold(data: Dataset, split, config: ExperimentConfig, fold: int, pi1: float) -> FoldResult:
    _check_no_leakage(split)
    X = np.asarray(data.features, dtype=float)
    y = data.labels
    tr, va, te = split.train_indices, split.valid_indices, split.test_indices
    std = Standardizer.fit(X[tr])
    Ztr, Zva, Zte = std.transform(X[tr]), std.transform(X[va]), std.transform(X[te])
    ytr, yva, yte = y[tr], y[va], y[te]
    fold_seed = derive_seed(config.seed, "fold", fold)

    counts = {"n_train": int(tr.size), "n_valid": int(va.size), "n_test": int(te.size),
              "n_candidates": 0, "n_retained": 0,
              "max_candidates": candidate_count(Dataset(Ztr, ytr), config.sampler.overgen_ratio)
              if config.sampler.method != "none" else 0}
    eps_hat = None
    fallback = None
    tau_used = None
    fitted = None

    if config.sampler.method == "none":
        extra = None
    else:
        pilot = _fit_calibrate_threshold(config, Ztr, ytr, Zva, yva, fold_seed, pilot=True)
        if config.pca_target_dim:
            proj = pca_fit(Ztr, config.pca_target_dim, seed=fold_seed)
            Ptr = proj.project(Ztr)
        else:
            proj = None
            Ptr = Ztr
        scfg = replace(config.sampler, seed=derive_seed(fold_seed, "sampler"))
        cands = generate(Dataset(Ptr, ytr), scfg)
        fallback = cands.fallback
        counts["n_candidates"] = len(cands)
        cand_Z = proj.reconstruct(cands.points) if proj is not None else cands.points
        if not config.filter_enabled or len(cands) == 0:
            extra = cand_Z
        else:
            real = Ptr[ytr == 1]
            disc = train_discriminator(real, cands.points, seed=derive_seed(fold_seed, "disc"),
                                       n_rounds=config.discriminator_rounds,
                                       learning_rate=config.discriminator_learning_rate)
            eps_hat = estimate_epsilon(disc, disc.holdout_synthetic, config.filter.eta)
            heads = score_heads(disc, cand_Z, pilot.probs(cand_Z), pilot.op.threshold, real, config.filter,
                                disc_points=cands.points)
            if config.tau_selection == "fixed":
                selected = fuse_and_select(heads, config.filter, positions=cands.points)
                extra = cand_Z[selected.retained]
                tau_used = config.filter.tau
            else:
                extra, tau_used, fitted = _select_tau(config, heads, cands.points, cand_Z, Ztr, ytr, Zva, yva,
                                                      fold_seed)
    counts["n_retained"] = 0 if extra is None else int(len(extra))

    if fitted is None:
        Xfit, yfit = _augment(Ztr, ytr, extra)
        fitted = _fit_calibrate_threshold(config, Xfit, yfit, Zva, yva, fold_seed)
    p_te = fitted.probs(Zte)
    boot = replace(config.bootstrap, seed=derive_seed(fold_seed, "bootstrap")) if config.bootstrap_enabled else None
    report = evaluate(p_te, yte, fitted.op.threshold, config.betas, pi1=pi1, bootstrap=boot)

    if config.sampler.method != "none":
        if counts["n_retained"] == 0:
            report.delong_p = 1.0
        else:
            ref = _fit_calibrate_threshold(config, Ztr, ytr, Zva, yva, fold_seed)
            report.delong_p = delong_test(p_te, ref.probs(Zte), yte).p_value

    lor = estimate_l_over_rho(fitted.probs, Ztr[ytr == 1], fitted.op.threshold)
    diag = TheoremDiagnostics(eps_hat, lor, fitted.op.threshold)
    op = {"threshold": fitted.op.threshold, "valid_precision": fitted.op.precision,
          "valid_recall": fitted.op.recall, "feasible": fitted.op.feasible,
          "calibration": fitted.cmap.to_dict()}
    return FoldResult(fold, report, diag, op, counts, reliability_bins(p_te, yte), fallback, tau_used, p_te, yte)


def _select_tau(config, heads, positions, cand_Z, Ztr, ytr, Zva, yva, seed):
    """Pick tau on validation: feasible precision floor first, then F1,
    then fewer retained candidates."""
    from .filtering import fuse

    S = fuse(heads, config.filter)
    ranked = np.sort(S)[::-1]
    taus = []
    for frac in TAU_KEEP_FRACTIONS:
        m = int(round(frac * S.size))
        taus.append(math.inf if m == 0 else float(ranked[m - 1]))
    best = None
    for tau in sorted(set(taus), reverse=True):
        sel = fuse_and_select(heads, replace(config.filter, tau=min(tau, 2.0)), positions=positions)
        extra = cand_Z[sel.retained] if math.isfinite(tau) else cand_Z[:0]
        Xfit, yfit = _augment(Ztr, ytr, extra)
        fitted = _fit_calibrate_threshold(config, Xfit, yfit, Zva, yva, seed)
        key = (fitted.op.feasible, fitted.op.f1)
        if best is None or key > best[0]:
            best = (key, extra, tau, fitted)
    _, extra, tau, fitted = best
    return extra, tau, fitted


# ---------------------------------------------------------------------------
# Runs
# ---------------------------------------------------------------------------


@dataclass
class RunResult:
    config: ExperimentConfig
    folds: list
    aggregate: dict
    provenance: dict

    def to_dict(self, include_timestamps=True):
        prov = dict(self.provenance)
        if not include_timestamps:
            prov.pop("timestamps", None)
        return {
            "method": self.config.method_label,
            "folds": [f.to_dict() for f in self.folds],
            "aggregate": self.aggregate,
            "diagnostics": _mean_diagnostics(self.folds),
            "provenance": prov,
        }


def _mean_diagnostics(folds):
    eps = [f.diagnostics.epsilon_hat for f in folds if f.diagnostics.epsilon_hat is not None]
    lor = [f.diagnostics.lipschitz_over_reach_hat for f in folds
           if f.diagnostics.lipschitz_over_reach_hat is not None]
    return {"epsilon_hat": float(np.mean(eps)) if eps else None,
            "lipschitz_over_reach_hat": float(np.mean(lor)) if lor else None}


def aggregate_folds(folds, confidence=0.95) -> dict:
    """Mean and t-interval across folds for every scalar metric."""
    names = sorted(folds[0].report.scalars())
    out = {}
    k = len(folds)
    tq = stats.t.ppf(0.5 + confidence / 2, k - 1) if k > 1 else math.nan
    for name in names:
        vals = np.array([f.report.scalars()[name] for f in folds], dtype=float)
        mean = float(np.mean(vals))
        half = float(tq * np.std(vals, ddof=1) / math.sqrt(k)) if k > 1 else math.nan
        out[name] = {"mean": mean, "ci": [mean - half, mean + half], "values": vals.tolist()}
    return out


def run_pipeline(config: ExperimentConfig, data: Optional[Dataset] = None) -> RunResult:
    started = time.time()
    if data is None:
        data = config.data.load()
    stats_ = class_stats(data)
    splits = stratified_kfold(data, config.cv_folds, config.seed)
    folds = []
    for f, split in enumerate(splits):
        try:
            folds.append(run_fold(data, split, config, f, stats_.pi1))
        except AFSmoteError as exc:
            raise type(exc)(f"fold {f}: {exc}") from exc
    prov = {
        "config": config_dict(config),
        "config_hash": config_hash(config),
        "seed": config.seed,
        "version": __version__,
        "class_stats": asdict(stats_),
        "timestamps": {"started": started, "finished": time.time()},
    }
    return RunResult(config, folds, aggregate_folds(folds), prov)


def pooled_reliability(result: RunResult, n_bins: int = 10):
    """Reliability bins over the concatenated out-of-fold test predictions."""
    p = np.concatenate([f.test_probs for f in result.folds])
    y = np.concatenate([f.test_labels for f in result.folds])
    return reliability_bins(p, y, n_bins)


@dataclass
class AugmentResult:
    candidates: object  # CandidateSet, in original feature units
    filtered: object  # FilteredSet or None when filtering is off
    augmented: Dataset
    epsilon_hat: Optional[float]


def augment_dataset(config: ExperimentConfig, data: Optional[Dataset] = None) -> AugmentResult:
    """Oversample (and optionally filter) a whole dataset.

    A stratified validation carve-out calibrates the pilot scorer; candidates
    are drawn from the remaining rows and returned in original units.
    """
    if data is None:
        data = config.data.load()
    if config.sampler.method == "none":
        raise ValueError("augment needs a sampler method other than 'none'")
    seed = derive_seed(config.seed, "augment")
    tr, va = train_valid_split(data, seed)
    X = np.asarray(data.features, dtype=float)
    y = data.labels
    std = Standardizer.fit(X[tr])
    Ztr, Zva = std.transform(X[tr]), std.transform(X[va])
    ytr, yva = y[tr], y[va]
    if config.pca_target_dim:
        proj = pca_fit(Ztr, config.pca_target_dim, seed=seed)
        Ptr = proj.project(Ztr)
    else:
        proj = None
        Ptr = Ztr
    cands = generate(Dataset(Ptr, ytr), replace(config.sampler, seed=derive_seed(seed, "sampler")))
    cand_Z = proj.reconstruct(cands.points) if proj is not None else cands.points
    filtered = None
    eps_hat = None
    keep = np.ones(len(cands), dtype=bool)
    if config.filter_enabled and len(cands) > 0:
        pilot = _fit_calibrate_threshold(config, Ztr, ytr, Zva, yva, seed, pilot=True)
        real = Ptr[ytr == 1]
        disc = train_discriminator(real, cands.points, seed=derive_seed(seed, "disc"),
                                   n_rounds=config.discriminator_rounds,
                                   learning_rate=config.discriminator_learning_rate)
        eps_hat = estimate_epsilon(disc, disc.holdout_synthetic, config.filter.eta)
        heads = score_heads(disc, cand_Z, pilot.probs(cand_Z), pilot.op.threshold, real, config.filter,
                            disc_points=cands.points)
        filtered = fuse_and_select(heads, config.filter, positions=cands.points)
        keep = filtered.retained
    orig = replace(cands, points=std.inverse(cand_Z))
    new_X = np.vstack([X, orig.points[keep]])
    new_y = np.r_[y, np.ones(int(keep.sum()), dtype=y.dtype)]
    augmented = Dataset(new_X, new_y, data.feature_names, allow_nan=data.allow_nan)
    return AugmentResult(orig, filtered, augmented, eps_hat)


def emit_report(result: RunResult, fmt: str, path) -> None:
    path = Path(path)
    if fmt == "json":
        path.write_text(canonical_json(result.to_dict()), encoding="utf-8")
    elif fmt == "csv":
        with path.open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["fold", "metric", "value"])
            for f in result.folds:
                for name, value in sorted(f.report.scalars().items()):
                    w.writerow([f.fold, name, format(value, ".17g")])
    else:
        raise ValueError(f"unknown report format {fmt!r}")


# ---------------------------------------------------------------------------
# Sweeps
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SweepGrid:
    lambda_values: tuple = (0.0, 0.25, 0.5, 0.75, 1.0)
    p0_values: tuple = (0.80, 0.85, 0.90, 0.95)
    k_values: tuple = (3, 5, 10)
    ratio_values: tuple = (1.0, 2.0, 4.0)

    def cells(self):
        return list(itertools.product(self.lambda_values, self.p0_values, self.k_values, self.ratio_values))


def cell_seed(base: ExperimentConfig, cell) -> int:
    lam, p0, k, ratio = cell
    return derive_seed(base.seed, float(lam), float(p0), int(k), float(ratio))


def cell_config(base: ExperimentConfig, cell) -> ExperimentConfig:
    lam, p0, k, ratio = cell
    return replace(
        base,
        filter=replace(base.filter, lam=float(lam)),
        sampler=replace(base.sampler, k_neighbors=int(k), overgen_ratio=float(ratio)),
        p0=float(p0),
        seed=cell_seed(base, cell),
    )


@dataclass
class SweepResult:
    rows: list  # (cell, seed, RunResult | None, error | None)

    def write_csv(self, path):
        with Path(path).open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["lambda", "p0", "k", "ratio", "seed", "fold", "metric", "value", "error"])
            for cell, seed, result, err in self.rows:
                lam, p0, k, ratio = cell
                if result is None:
                    w.writerow([lam, p0, k, ratio, seed, "", "", "", err])
                    continue
                for f in result.folds:
                    for name, value in sorted(f.report.scalars().items()):
                        w.writerow([lam, p0, k, ratio, seed, f.fold, name, format(value, ".17g"), ""])


def _run_cell(args):
    base, cell, data = args
    seed = cell_seed(base, cell)
    try:
        return cell, seed, run_pipeline(cell_config(base, cell), data), None
    except (AFSmoteError, ValueError, np.linalg.LinAlgError) as exc:
        return cell, seed, None, f"{type(exc).__name__}: {exc}"


def run_sweep(base: ExperimentConfig, grid: SweepGrid = SweepGrid(), data: Optional[Dataset] = None,
              jobs: int = 1, progress=None) -> SweepResult:
    """Run every grid cell; failures are recorded per cell and the sweep continues."""
    cells = grid.cells()
    if not cells:
        raise ValueError("sweep grid is empty")
    if data is None:
        data = base.data.load()
    work = [(base, c, data) for c in cells]
    if jobs > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=jobs) as ex:
            rows = list(ex.map(_run_cell, work))
    else:
        rows = []
        for i, item in enumerate(work):
            rows.append(_run_cell(item))
            if progress:
                progress(i + 1, len(work))
    rows.sort(key=lambda r: r[0])
    return SweepResult(rows)


# ---------------------------------------------------------------------------
# Theorem check
# ---------------------------------------------------------------------------


@dataclass
class TheoremSeedResult:
    seed: int
    delta_f_tilde: dict
    delta_brier: float
    epsilon_hat: float
    lipschitz_over_reach_hat: Optional[float]
    brier_bound: float
    recall_af: float
    recall_smote: float
    n_retained: int
    f_tilde_pass: bool
    brier_pass: bool
    recall_pass: bool


@dataclass
class TheoremReport:
    seeds: list
    c1: float
    c2: float
    min_pass_fraction: float
    brier_abs_limit: float

    @property
    def summary(self) -> dict:
        n = len(self.seeds)
        if n == 0:
            return {"n_seeds": 0, "passed": True}
        f_ok = sum(s.f_tilde_pass for s in self.seeds)
        b_ok = sum(s.brier_pass for s in self.seeds)
        r_ok = sum(s.recall_pass for s in self.seeds)
        abs_ok = all(abs(s.delta_brier) <= self.brier_abs_limit for s in self.seeds)
        need = math.ceil(self.min_pass_fraction * n - 1e-12)
        return {
            "n_seeds": n,
            "f_tilde_nonnegative": f_ok,
            "brier_bound_holds": b_ok,
            "recall_af_ge_smote": r_ok,
            "brier_abs_within_limit": abs_ok,
            "total_retained": int(sum(s.n_retained for s in self.seeds)),
            "passed": bool(f_ok >= need and r_ok >= need and b_ok == n and abs_ok),
        }

    @property
    def passed(self) -> bool:
        return self.summary["passed"]

    def to_dict(self):
        return {
            "c1": self.c1,
            "c2": self.c2,
            "min_pass_fraction": self.min_pass_fraction,
            "brier_abs_limit": self.brier_abs_limit,
            "seeds": [asdict(s) for s in self.seeds],
            "summary": self.summary,
        }


def _fold_mean(result: RunResult, getter):
    return float(np.mean([getter(f) for f in result.folds]))


def theorem_check(spec: SyntheticSpec, config: ExperimentConfig, n_seeds: int = 5, c1: float = 1.0,
                  c2: float = 1.0, min_pass_fraction: float = 0.8, brier_abs_limit: float = 0.02) -> TheoremReport:
    """Compare filtered augmentation against no augmentation and plain SMOTE.

    For every replication the synthetic data, folds and all seeds are
    shared by the three arms.  Per seed it records the fold-averaged
    change in the F-tilde surrogate (every beta in ``config.betas``) and in
    Brier score, and checks ``delta_brier <= c1 * eps_hat + c2 * (L*rho)``.
    A missing L*rho diagnostic counts as 0.
    """
    base = replace(config, bootstrap_enabled=False, filter_enabled=True)
    seeds = []
    for s in range(n_seeds):
        data = make_gaussian_imbalanced(replace(spec, seed=derive_seed(spec.seed, "theorem", s)))
        cfg = replace(base, seed=derive_seed(config.seed, "theorem", s))
        af = run_pipeline(cfg, data)
        none = run_pipeline(replace(cfg, sampler=replace(cfg.sampler, method="none")), data)
        smote = run_pipeline(replace(cfg, filter_enabled=False), data)
        d_ft = {b: _fold_mean(af, lambda f: f.report.f_tilde_beta[b]) -
                _fold_mean(none, lambda f: f.report.f_tilde_beta[b]) for b in cfg.betas}
        d_brier = _fold_mean(af, lambda f: f.report.brier) - _fold_mean(none, lambda f: f.report.brier)
        eps = _mean_diagnostics(af.folds)
        eps_hat = eps["epsilon_hat"] if eps["epsilon_hat"] is not None else 0.0
        lor = eps["lipschitz_over_reach_hat"]
        bound = c1 * eps_hat + c2 * (lor or 0.0)
        r_af = _fold_mean(af, lambda f: f.report.recall)
        r_sm = _fold_mean(smote, lambda f: f.report.recall)
        seeds.append(TheoremSeedResult(
            seed=cfg.seed,
            delta_f_tilde={f"{b:g}": v for b, v in d_ft.items()},
            delta_brier=d_brier,
            epsilon_hat=eps_hat,
            lipschitz_over_reach_hat=lor,
            brier_bound=bound,
            recall_af=r_af,
            recall_smote=r_sm,
            n_retained=int(sum(f.counts["n_retained"] for f in af.folds)),
            f_tilde_pass=all(v >= 0 for v in d_ft.values()),
            brier_pass=d_brier <= bound,
            recall_pass=r_af >= r_sm,
        ))
    return TheoremReport(seeds, c1, c2, min_pass_fraction, brier_abs_limit)
