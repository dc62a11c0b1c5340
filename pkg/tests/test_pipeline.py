"""End-to-end runs, sweeps, reports and the theorem-check harness."""

import csv
import json
from dataclasses import replace

import numpy as np
import pytest

from afsmote.calibration import apply_calibration, fit_platt
from afsmote.dataset import Dataset, Standardizer, SyntheticSpec, make_gaussian_imbalanced, stratified_kfold
from afsmote.errors import AFSmoteError, TooFewPositives
from afsmote.evaluation import brier, evaluate, select_threshold
from afsmote.filtering import FilterConfig, estimate_epsilon, estimate_l_over_rho, train_discriminator
from afsmote.models import fit_logistic
from afsmote.pipeline import (
    ExperimentConfig,
    SweepGrid,
    _check_no_leakage,
    canonical_json,
    cell_config,
    config_hash,
    derive_seed,
    emit_report,
    run_pipeline,
    run_sweep,
    theorem_check,
)
from afsmote.samplers import SamplerConfig


@pytest.fixture(scope="module")
def data():
    return make_gaussian_imbalanced(SyntheticSpec(n=1500, pi1=0.1, seed=3))


@pytest.fixture(scope="module")
def base():
    return ExperimentConfig(bootstrap_enabled=False, seed=11)


def strip_method_specific(result):
    d = result.to_dict(include_timestamps=False)
    for f in d["folds"]:
        f["metrics"].pop("delong_p", None)
        f.pop("counts")
        f.pop("tau_used", None)
        f["diagnostics"].pop("epsilon_hat")
    return [f for f in d["folds"]]


class TestRunPipeline:
    def test_none_matches_plain_training(self, data, base):
        cfg = replace(base, sampler=SamplerConfig(method="none"))
        res = run_pipeline(cfg, data)
        split = stratified_kfold(data, cfg.cv_folds, cfg.seed)[0]
        X, y = data.features, data.labels
        std = Standardizer.fit(X[split.train_indices])
        Z = {k: std.transform(X[getattr(split, f"{k}_indices")]) for k in ("train", "valid", "test")}
        model = fit_logistic(Z["train"], y[split.train_indices], l2_lambda=cfg.l2_lambda)
        cmap = fit_platt(model.decision_function(Z["valid"]), y[split.valid_indices])
        op = select_threshold(apply_calibration(cmap, model.decision_function(Z["valid"])),
                              y[split.valid_indices], cfg.p0)
        p_te = apply_calibration(cmap, model.decision_function(Z["test"]))
        expected = evaluate(p_te, y[split.test_indices], op.threshold, cfg.betas, pi1=float(y.mean()))
        assert res.folds[0].report.to_dict() == expected.to_dict()
        assert res.to_dict()["method"] == "none"

    def test_unreachable_tau_equals_baseline(self, data, base):
        af = run_pipeline(replace(base, filter=FilterConfig(tau=1.0 + 1e-9)), data)
        none = run_pipeline(replace(base, sampler=SamplerConfig(method="none")), data)
        assert all(f.counts["n_retained"] == 0 and f.counts["n_candidates"] > 0 for f in af.folds)
        assert strip_method_specific(af) == strip_method_specific(none)
        assert all(f.report.delong_p == 1.0 for f in af.folds)

    def test_replay_is_bit_identical(self, data):
        cfg = ExperimentConfig(seed=5, bootstrap=replace(ExperimentConfig().bootstrap, n_resamples=200))
        a = canonical_json(run_pipeline(cfg, data).to_dict(include_timestamps=False))
        b = canonical_json(run_pipeline(cfg, data).to_dict(include_timestamps=False))
        assert a == b

    @pytest.mark.parametrize("method", ["smote", "adasyn", "borderline", "svm_smote"])
    def test_monotone_data_flow(self, data, base, method):
        res = run_pipeline(replace(base, sampler=SamplerConfig(method=method, overgen_ratio=0.5),
                                   filter=FilterConfig(tau=0.5)), data)
        for f in res.folds:
            c = f.counts
            assert c["n_retained"] <= c["n_candidates"] <= c["max_candidates"]
            assert c["max_candidates"] == round(0.5 * (c["n_train"] - 2 * f_train_pos(data, res, f.fold)))

    def test_aggregate_is_fold_mean(self, data, base):
        res = run_pipeline(base, data)
        for name, agg in res.aggregate.items():
            vals = [f.report.scalars()[name] for f in res.folds]
            assert abs(agg["mean"] - np.mean(vals)) <= 1e-12
            assert agg["ci"][0] <= agg["mean"] <= agg["ci"][1]

    @pytest.mark.parametrize("classifier", ["stump_boost", "linear_svm"])
    def test_other_classifiers(self, data, base, classifier):
        res = run_pipeline(replace(base, classifier=classifier, boost_rounds=20, svm_epochs=200), data)
        assert len(res.folds) == 5
        cal = res.folds[0].operating_point["calibration"]["kind"]
        assert cal == ("isotonic" if classifier == "stump_boost" else "platt")

    def test_pca_front_end(self, base):
        means = ((0.0,) * 6, (2.0,) + (0.0,) * 5)
        covs = (np.eye(6).tolist(),) * 2
        d = make_gaussian_imbalanced(SyntheticSpec(n=1200, pi1=0.1, dim=6, class_means=means,
                                                   class_covs=covs, seed=2))
        res = run_pipeline(replace(base, pca_target_dim=3, filter=FilterConfig(tau=0.5)), d)
        assert sum(f.counts["n_retained"] for f in res.folds) > 0

    def test_validation_tau(self, data, base):
        res = run_pipeline(replace(base, tau_selection="validation"), data)
        assert all(f.tau_used is not None for f in res.folds)

    def test_failed_fold_aborts(self, base):
        X = np.random.default_rng(0).normal(size=(40, 2))
        y = np.r_[np.ones(3, dtype=int), np.zeros(37, dtype=int)]
        with pytest.raises(TooFewPositives):
            run_pipeline(base, Dataset(X, y))

    def test_leakage_guard(self):
        split = stratified_kfold(make_gaussian_imbalanced(SyntheticSpec(n=200, pi1=0.1)), 5, 0)[0]
        _check_no_leakage(split)
        bad = replace(split, valid_indices=np.r_[split.valid_indices, split.test_indices[:1]])
        with pytest.raises(AFSmoteError):
            _check_no_leakage(bad)


def f_train_pos(data, res, fold):
    split = stratified_kfold(data, res.config.cv_folds, res.config.seed)[fold]
    return int(data.labels[split.train_indices].sum())


class TestReports:
    @pytest.fixture(scope="class")
    @classmethod
    def result(cls, data):
        cfg = ExperimentConfig(seed=2, bootstrap=replace(ExperimentConfig().bootstrap, n_resamples=200))
        return run_pipeline(cfg, data)

    def test_json_round_trip(self, result, tmp_path):
        emit_report(result, "json", tmp_path / "r.json")
        back = json.loads((tmp_path / "r.json").read_text())
        assert back == json.loads(canonical_json(result.to_dict()))
        assert back["folds"][0]["metrics"]["recall_ci"][0] <= back["folds"][0]["metrics"]["recall"]

    def test_csv_shape(self, result, tmp_path):
        emit_report(result, "csv", tmp_path / "r.csv")
        rows = list(csv.reader((tmp_path / "r.csv").open()))
        n_metrics = len(result.folds[0].report.scalars())
        assert len(rows) - 1 == len(result.folds) * n_metrics

    def test_config_hash_stable(self):
        assert config_hash(ExperimentConfig(seed=3)) == config_hash(ExperimentConfig(seed=3))
        assert config_hash(ExperimentConfig(seed=3)) != config_hash(ExperimentConfig(seed=4))

    def test_seventeen_digit_csv(self, result, tmp_path):
        emit_report(result, "csv", tmp_path / "r.csv")
        rows = list(csv.DictReader((tmp_path / "r.csv").open()))
        by_key = {(int(r["fold"]), r["metric"]): float(r["value"]) for r in rows}
        assert by_key[(0, "brier")] == result.folds[0].report.brier


class TestSweep:
    def test_default_grid_size(self):
        cells = SweepGrid().cells()
        assert len(cells) == 5 * 4 * 3 * 3 == 180
        assert {c[0] for c in cells} >= {0.0, 1.0}

    def test_single_cell_matches_run(self, data, base):
        grid = SweepGrid((0.25,), (0.85,), (3,), (1.0,))
        sweep = run_sweep(base, grid, data)
        (cell, seed, res, err), = sweep.rows
        direct = run_pipeline(cell_config(base, cell), data)
        assert err is None and seed == direct.config.seed
        assert canonical_json(res.to_dict(False)) == canonical_json(direct.to_dict(False))

    def test_failures_recorded(self, data, base, tmp_path):
        grid = SweepGrid((0.0, 1.0), (0.9, 1.5), (5,), (1.0,))
        sweep = run_sweep(base, grid, data)
        errors = {c: e for c, _, _, e in sweep.rows}
        assert errors[(0.0, 1.5, 5, 1.0)] and errors[(1.0, 1.5, 5, 1.0)]
        assert errors[(0.0, 0.9, 5, 1.0)] is None
        sweep.write_csv(tmp_path / "s.csv")
        rows = list(csv.DictReader((tmp_path / "s.csv").open()))
        assert {r["lambda"] for r in rows} == {"0.0", "1.0"}
        assert sum(1 for r in rows if r["error"]) == 2

    def test_parallel_equals_serial(self, data, base):
        grid = SweepGrid((0.0, 1.0), (0.9,), (5,), (1.0,))
        a = run_sweep(base, grid, data, jobs=1)
        b = run_sweep(base, grid, data, jobs=2)
        for ra, rb in zip(a.rows, b.rows):
            assert canonical_json(ra[2].to_dict(False)) == canonical_json(rb[2].to_dict(False))

    def test_derived_seeds_distinct(self):
        seeds = {derive_seed(0, *c) for c in SweepGrid().cells()}
        assert len(seeds) == 180


class TestTheoremCheck:
    def test_zero_seeds(self):
        rep = theorem_check(SyntheticSpec(), ExperimentConfig(), n_seeds=0)
        assert rep.seeds == [] and rep.passed

    def test_report_structure(self):
        spec = SyntheticSpec(n=1500, pi1=0.1)
        rep = theorem_check(spec, ExperimentConfig(), n_seeds=2)
        d = rep.to_dict()
        assert len(d["seeds"]) == 2
        for s in d["seeds"]:
            assert set(s["delta_f_tilde"]) == {"1", "2", "4"}
            assert s["brier_pass"] == (s["delta_brier"] <= s["brier_bound"])
        assert d["summary"]["n_seeds"] == 2

    def test_copies_are_benign(self):
        # Augmenting with exact copies of real minority rows: the discriminator
        # outputs chance-level realism and the Brier change stays within the bound.
        d = make_gaussian_imbalanced(SyntheticSpec(n=4000, pi1=0.05, seed=9))
        split = stratified_kfold(d, 5, 0)[0]
        X, y = d.features, d.labels
        tr, va, te = split.train_indices, split.valid_indices, split.test_indices
        minority = X[tr][y[tr] == 1]
        disc = train_discriminator(minority, minority.copy(), seed=0)
        eps = estimate_epsilon(disc, disc.holdout_synthetic)

        def fit_eval(Xfit, yfit):
            m = fit_logistic(Xfit, yfit)
            cmap = fit_platt(m.decision_function(X[va]), y[va])
            return m, cmap, apply_calibration(cmap, m.decision_function(X[te]))

        _, _, p0 = fit_eval(X[tr], y[tr])
        m1, c1, p1 = fit_eval(np.vstack([X[tr], minority]), np.r_[y[tr], np.ones(len(minority), dtype=int)])
        probs = lambda Z: apply_calibration(c1, m1.decision_function(Z))  # noqa: E731
        t = select_threshold(apply_calibration(c1, m1.decision_function(X[va])), y[va], 0.9).threshold
        lor = estimate_l_over_rho(probs, minority, t) or 0.0
        assert np.max(np.abs(disc.predict_proba(disc.holdout_synthetic) - 0.5)) < 0.05
        assert brier(p1, y[te]) - brier(p0, y[te]) <= eps + lor
