"""Strict sectioned key-value configuration.

Grammar (an INI/TOML subset)::

    # comment
    [section]
    key = value

Values are numbers, ``true``/``false``, ``none``, bare or double-quoted
strings, or JSON lists (``[0.25, 0.5]``).  Every key must appear in
``SCHEMA``; anything else is rejected with its dotted path.  Overrides of
the form ``section.key=value`` are applied after the file is read.
"""

from __future__ import annotations

import configparser
import json
import os
from dataclasses import replace
from pathlib import Path

from .dataset import SyntheticSpec
from .errors import ConfigError
from .evaluation import BootstrapConfig
from .filtering import FilterConfig
from .pipeline import DataSource, ExperimentConfig, SweepGrid
from .samplers import SamplerConfig

SEED_ENV = "AFSMOTE_SEED"


def _bool(v: str) -> bool:
    s = v.strip().lower()
    if s in ("true", "yes", "on", "1"):
        return True
    if s in ("false", "no", "off", "0"):
        return False
    raise ValueError(f"not a boolean: {v!r}")


def _str(v: str) -> str:
    s = v.strip()
    if len(s) >= 2 and s[0] == s[-1] == '"':
        return s[1:-1]
    return s


def _opt(conv):
    def parse(v):
        return None if v.strip().lower() in ("none", "") else conv(v)
    return parse


def _json(v: str):
    return json.loads(v)


def _seed(v: str) -> int:
    n = int(v)
    if not 0 <= n < 2 ** 64:
        raise ValueError("seed must be an unsigned 64-bit integer")
    return n


SCHEMA = {
    "data.source": _str,
    "data.csv_path": _opt(_str),
    "data.label_column": _str,
    "data.nan_policy": _str,
    "synthetic.n": int,
    "synthetic.pi1": float,
    "synthetic.dim": int,
    "synthetic.class_means": _json,
    "synthetic.class_covs": _json,
    "synthetic.seed": _seed,
    "sampler.method": _str,
    "sampler.k_neighbors": int,
    "sampler.overgen_ratio": float,
    "filter.enabled": _bool,
    "filter.lambda": float,
    "filter.tau": float,
    "filter.tau_selection": _str,
    "filter.alpha": float,
    "filter.eta": float,
    "filter.top_k": _opt(int),
    "filter.diversity": _bool,
    "filter.extended_fusion": _bool,
    "filter.head_weights": _json,
    "filter.density_k": int,
    "model.classifier": _str,
    "model.calibration": _str,
    "model.l2_lambda": float,
    "model.boost_rounds": int,
    "model.boost_learning_rate": float,
    "model.svm_reg_lambda": float,
    "model.svm_epochs": int,
    "model.discriminator_rounds": int,
    "model.discriminator_learning_rate": float,
    "evaluation.p0": float,
    "evaluation.betas": _json,
    "evaluation.cv_folds": int,
    "evaluation.bootstrap": _bool,
    "evaluation.bootstrap_resamples": int,
    "evaluation.confidence": float,
    "evaluation.pca_target_dim": _opt(int),
    "experiment.seed": _seed,
    "sweep.lambda_values": _json,
    "sweep.p0_values": _json,
    "sweep.k_values": _json,
    "sweep.ratio_values": _json,
    "theorem.seeds": int,
    "theorem.c1": float,
    "theorem.c2": float,
    "theorem.min_pass_fraction": float,
    "theorem.brier_abs_limit": float,
}


def parse_value(key: str, raw: str):
    if key not in SCHEMA:
        raise ConfigError(f"unknown config key {key!r}", key)
    try:
        return SCHEMA[key](raw)
    except (ValueError, json.JSONDecodeError) as exc:
        raise ConfigError(f"bad value for {key!r}: {exc}", key) from None


def read_config_text(text: str, origin: str = "<config>") -> dict:
    cp = configparser.ConfigParser(inline_comment_prefixes=("#",), interpolation=None,
                                   default_section="__no_default__")
    cp.optionxform = str
    try:
        cp.read_string(text, source=origin)
    except configparser.Error as exc:
        raise ConfigError(f"{origin}: {exc}") from None
    flat = {}
    for section in cp.sections():
        for key, raw in cp.items(section):
            dotted = f"{section}.{key}"
            flat[dotted] = parse_value(dotted, raw)
    return flat


def read_config(path) -> dict:
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {p}")
    return read_config_text(p.read_text(encoding="utf-8"), str(p))


def apply_overrides(flat: dict, overrides) -> dict:
    out = dict(flat)
    for item in overrides or ():
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form section.key=value")
        key, raw = item.split("=", 1)
        key = key.strip()
        out[key] = parse_value(key, raw)
    return out


def resolve_seed(flat: dict, cli_seed=None, environ=None) -> int:
    """CLI flag, then config file, then the environment variable, then 0."""
    if cli_seed is not None:
        return int(cli_seed)
    if "experiment.seed" in flat:
        return flat["experiment.seed"]
    env = (os.environ if environ is None else environ).get(SEED_ENV)
    if env:
        try:
            return _seed(env)
        except ValueError:
            raise ConfigError(f"{SEED_ENV} is not an unsigned 64-bit integer: {env!r}") from None
    return 0


def _tuple(v):
    return tuple(tuple(_tuple(x)) if isinstance(x, list) else x for x in v) if isinstance(v, list) else v


def build_experiment(flat: dict, seed: int) -> ExperimentConfig:
    g = flat.get
    try:
        spec = SyntheticSpec()
        spec = replace(
            spec,
            n=g("synthetic.n", spec.n),
            pi1=g("synthetic.pi1", spec.pi1),
            dim=g("synthetic.dim", spec.dim),
            class_means=_tuple(g("synthetic.class_means", list(map(list, spec.class_means)))),
            class_covs=_tuple(g("synthetic.class_covs", [list(map(list, c)) for c in spec.class_covs])),
            seed=g("synthetic.seed", spec.seed),
        )
        source = g("data.source", "csv" if g("data.csv_path") else "synthetic")
        if source not in ("csv", "synthetic"):
            raise ConfigError(f"data.source must be 'csv' or 'synthetic', got {source!r}", "data.source")
        if source == "csv" and not g("data.csv_path"):
            raise ConfigError("data.source = csv needs data.csv_path", "data.csv_path")
        data = DataSource(
            csv_path=g("data.csv_path") if source == "csv" else None,
            label_column=g("data.label_column", "label"),
            nan_policy=g("data.nan_policy", "reject"),
            synthetic=spec,
        )
        sampler = SamplerConfig(
            method=g("sampler.method", "smote"),
            k_neighbors=g("sampler.k_neighbors", 5),
            overgen_ratio=g("sampler.overgen_ratio", 1.0),
        )
        fdef = FilterConfig()
        filt = FilterConfig(
            lam=g("filter.lambda", fdef.lam),
            tau=g("filter.tau", fdef.tau),
            alpha=g("filter.alpha", fdef.alpha),
            eta=g("filter.eta", fdef.eta),
            top_k=g("filter.top_k", fdef.top_k),
            diversity_enabled=g("filter.diversity", fdef.diversity_enabled),
            extended_fusion=g("filter.extended_fusion", fdef.extended_fusion),
            head_weights=tuple(g("filter.head_weights", fdef.head_weights)),
            density_k=g("filter.density_k", fdef.density_k),
        )
        boot = BootstrapConfig(
            n_resamples=g("evaluation.bootstrap_resamples", 2000),
            confidence=g("evaluation.confidence", 0.95),
            seed=seed,
        )
        edef = ExperimentConfig()
        return ExperimentConfig(
            data=data,
            sampler=sampler,
            filter=filt,
            filter_enabled=g("filter.enabled", True),
            tau_selection=g("filter.tau_selection", "fixed"),
            classifier=g("model.classifier", edef.classifier),
            calibration=g("model.calibration", edef.calibration),
            betas=tuple(float(b) for b in g("evaluation.betas", edef.betas)),
            p0=g("evaluation.p0", edef.p0),
            cv_folds=g("evaluation.cv_folds", edef.cv_folds),
            bootstrap=boot,
            bootstrap_enabled=g("evaluation.bootstrap", True),
            pca_target_dim=g("evaluation.pca_target_dim", None),
            seed=seed,
            l2_lambda=g("model.l2_lambda", edef.l2_lambda),
            boost_rounds=g("model.boost_rounds", edef.boost_rounds),
            boost_learning_rate=g("model.boost_learning_rate", edef.boost_learning_rate),
            svm_reg_lambda=g("model.svm_reg_lambda", edef.svm_reg_lambda),
            svm_epochs=g("model.svm_epochs", edef.svm_epochs),
            discriminator_rounds=g("model.discriminator_rounds", edef.discriminator_rounds),
            discriminator_learning_rate=g("model.discriminator_learning_rate", edef.discriminator_learning_rate),
        )
    except ConfigError:
        raise
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"invalid configuration: {exc}") from None


def build_grid(flat: dict) -> SweepGrid:
    d = SweepGrid()
    return SweepGrid(
        lambda_values=tuple(flat.get("sweep.lambda_values", d.lambda_values)),
        p0_values=tuple(flat.get("sweep.p0_values", d.p0_values)),
        k_values=tuple(flat.get("sweep.k_values", d.k_values)),
        ratio_values=tuple(flat.get("sweep.ratio_values", d.ratio_values)),
    )


def theorem_options(flat: dict) -> dict:
    return {
        "n_seeds": flat.get("theorem.seeds", 5),
        "c1": flat.get("theorem.c1", 1.0),
        "c2": flat.get("theorem.c2", 1.0),
        "min_pass_fraction": flat.get("theorem.min_pass_fraction", 0.8),
        "brier_abs_limit": flat.get("theorem.brier_abs_limit", 0.02),
    }
