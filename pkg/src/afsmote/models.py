"""Probabilistic classifiers written from scratch.

Three families serve the three roles in the pipeline: an L2 logistic
regression (pilot scorer and default final classifier), gradient-boosted
decision stumps (the realism discriminator) and a linear max-margin
model (margin source for SVM-SMOTE).  All expose ``decision_function``
(a raw real-valued score) and ``predict_proba``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize
from scipy.special import expit

from .errors import DimensionMismatch, DivergenceDetected, SingleClassInput

MODEL_FORMAT_VERSION = 1


def sigmoid(z):
    return expit(z)


def _softplus(z):
    # log(1 + exp(z)) without overflow
    return np.logaddexp(0.0, z)


def _check_binary(labels, weights=None):
    y = np.asarray(labels, dtype=float)
    if weights is None:
        present = np.unique(y)
    else:
        present = np.unique(y[np.asarray(weights) > 0])
    if present.size < 2:
        raise SingleClassInput("both classes must be present to fit")
    return y


class _Base:
    n_features: int

    def _check_X(self, X):
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X.reshape(-1, 1) if self.n_features == 1 else X.reshape(1, -1)
        if X.shape[1] != self.n_features:
            raise DimensionMismatch(f"expected {self.n_features} features, got {X.shape[1]}")
        return X

    def predict_proba(self, X) -> np.ndarray:
        return sigmoid(self.decision_function(X))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


# ---------------------------------------------------------------------------
# Logistic regression
# ---------------------------------------------------------------------------


@dataclass
class LogisticModel(_Base):
    coefficients: np.ndarray
    intercept: float
    l2_lambda: float = 0.0
    n_iter: int = 0
    converged: bool = False
    loss_history: list = field(default_factory=list)

    @property
    def n_features(self):
        return self.coefficients.shape[0]

    def decision_function(self, X):
        X = self._check_X(X)
        return X @ self.coefficients + self.intercept

    def to_dict(self):
        return {
            "type": "logistic",
            "version": MODEL_FORMAT_VERSION,
            "coefficients": [float(c) for c in self.coefficients],
            "intercept": float(self.intercept),
            "l2_lambda": self.l2_lambda,
            "training": {"n_iter": self.n_iter, "converged": self.converged},
        }


def logistic_loss(params, X, y, l2_lambda, weights=None):
    """Weighted mean negative log-likelihood plus (l2/2)*||coef||^2.

    ``params`` is ``[coef..., intercept]``; the intercept is not penalised.
    """
    w = np.ones(y.size) if weights is None else weights
    z = X @ params[:-1] + params[-1]
    nll = np.sum(w * (_softplus(z) - y * z)) / np.sum(w)
    return nll + 0.5 * l2_lambda * np.dot(params[:-1], params[:-1])


def logistic_gradient(params, X, y, l2_lambda, weights=None):
    w = np.ones(y.size) if weights is None else weights
    z = X @ params[:-1] + params[-1]
    r = w * (sigmoid(z) - y) / np.sum(w)
    g = np.empty_like(params)
    g[:-1] = X.T @ r + l2_lambda * params[:-1]
    g[-1] = r.sum()
    return g


def _logistic_hessian(params, X, l2_lambda, weights):
    z = X @ params[:-1] + params[-1]
    p = sigmoid(z)
    h = weights * p * (1 - p) / np.sum(weights)
    Xa = np.hstack([X, np.ones((X.shape[0], 1))])
    H = Xa.T @ (Xa * h[:, None])
    H[:-1, :-1] += l2_lambda * np.eye(X.shape[1])
    return H


def fit_logistic(features, labels, l2_lambda=1e-4, max_iter=100, tol=1e-8, weights=None):
    """L2-regularised logistic regression by damped Newton iterations.

    Steps are halved (up to 20 times) until the objective does not
    increase, so ``loss_history`` is non-increasing.
    """
    X = np.asarray(features, dtype=float)
    if X.ndim == 1:
        X = X.reshape(-1, 1)
    y = _check_binary(labels, weights)
    w = np.ones(y.size) if weights is None else np.asarray(weights, dtype=float)
    d = X.shape[1]
    params = np.zeros(d + 1)
    ybar = np.sum(w * y) / np.sum(w)
    params[-1] = np.log(ybar / (1 - ybar))
    loss = logistic_loss(params, X, y, l2_lambda, w)
    history = [loss]
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        g = logistic_gradient(params, X, y, l2_lambda, w)
        if np.max(np.abs(g)) <= tol:
            converged = True
            it -= 1
            break
        H = _logistic_hessian(params, X, l2_lambda, w)
        try:
            step = np.linalg.solve(H + 1e-12 * np.eye(d + 1), g)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(H, g, rcond=None)[0]
        scale = 1.0
        for _ in range(21):
            trial = params - scale * step
            trial_loss = logistic_loss(trial, X, y, l2_lambda, w)
            if not np.isfinite(trial_loss):
                raise DivergenceDetected("non-finite logistic loss")
            if trial_loss <= loss:
                break
            scale *= 0.5
        else:
            # no descent at numerical precision
            converged = np.max(np.abs(g)) <= max(tol, 1e-6)
            break
        params, loss = trial, trial_loss
        history.append(loss)
    else:
        g = logistic_gradient(params, X, y, l2_lambda, w)
        converged = np.max(np.abs(g)) <= tol
    return LogisticModel(params[:-1].copy(), float(params[-1]), l2_lambda, it, bool(converged), history)


# ---------------------------------------------------------------------------
# Gradient-boosted stumps
# ---------------------------------------------------------------------------


@dataclass
class Stump:
    feature: int
    threshold: float
    left_value: float
    right_value: float

    def predict(self, X):
        return np.where(X[:, self.feature] <= self.threshold, self.left_value, self.right_value)


@dataclass
class StumpBoostModel(_Base):
    """Sum of depth-1 trees on the log-odds scale.

    ``base_score`` is the prior log-odds; stump leaf values already
    include the learning rate.
    """

    stumps: list
    base_score: float
    learning_rate: float
    n_rounds: int
    n_features: int
    loss_history: list = field(default_factory=list)

    def decision_function(self, X):
        X = self._check_X(X)
        out = np.full(X.shape[0], self.base_score, dtype=float)
        for s in self.stumps:
            out += s.predict(X)
        return out

    def to_dict(self):
        return {
            "type": "stump_boost",
            "version": MODEL_FORMAT_VERSION,
            "base_score": float(self.base_score),
            "learning_rate": self.learning_rate,
            "n_rounds": self.n_rounds,
            "n_features": self.n_features,
            "stumps": [[s.feature, float(s.threshold), float(s.left_value), float(s.right_value)]
                       for s in self.stumps],
        }


def _weighted_logloss(F, y, w):
    return float(np.sum(w * (_softplus(F) - y * F)) / np.sum(w))


def _best_stump(Xs_sorted, order, g, w):
    """Exhaustive (feature, midpoint) search minimising weighted SSE to ``g``.

    Returns (feature, threshold), or None if no feature has two distinct values.
    """
    best = None
    best_sse = np.inf
    total_wg = np.sum(w * g)
    total_w = np.sum(w)
    for j in range(Xs_sorted.shape[1]):
        xs = Xs_sorted[:, j]
        o = order[:, j]
        cw = np.cumsum(w[o])[:-1]
        cwg = np.cumsum((w * g)[o])[:-1]
        valid = xs[1:] > xs[:-1]
        if not valid.any():
            continue
        rw = total_w - cw
        rwg = total_wg - cwg
        with np.errstate(divide="ignore", invalid="ignore"):
            # SSE = const - (S_L^2 / W_L + S_R^2 / W_R)
            gain = np.where(valid & (cw > 0) & (rw > 0), cwg ** 2 / cw + rwg ** 2 / rw, -np.inf)
        i = int(np.argmax(gain))
        sse = -gain[i]
        if sse < best_sse:
            best_sse = sse
            best = (j, 0.5 * (xs[i] + xs[i + 1]))
    return best


def fit_stump_boost(features, labels, n_rounds=200, learning_rate=0.1, seed=0, weights=None):
    """Gradient boosting of depth-1 trees on the logistic loss.

    Each round fits a stump to the negative gradient ``y - p`` by least
    squares over all (feature, midpoint) splits, then sets each leaf to
    the Newton step ``sum(y - p) / sum(p(1 - p))`` scaled by the learning
    rate.  If a round would increase the training loss its leaf values are
    halved until it does not.

    ``seed`` is accepted for interface symmetry; the search is exhaustive
    and has no random component.
    """
    X = np.asarray(features, dtype=float)
    if X.ndim == 1:
        X = X.reshape(-1, 1)
    y = _check_binary(labels, weights)
    w = np.ones(y.size) if weights is None else np.asarray(weights, dtype=float)
    ybar = np.sum(w * y) / np.sum(w)
    base = float(np.log(ybar / (1 - ybar)))
    F = np.full(y.size, base)
    order = np.argsort(X, axis=0, kind="stable")
    Xs = np.take_along_axis(X, order, axis=0)
    loss = _weighted_logloss(F, y, w)
    history = [loss]
    stumps = []
    for _ in range(n_rounds):
        p = sigmoid(F)
        g = y - p
        split = _best_stump(Xs, order, g, w)
        if split is None:
            break
        j, thr = split
        left = X[:, j] <= thr
        h = p * (1 - p)
        vals = []
        for mask in (left, ~left):
            num = np.sum(w[mask] * g[mask])
            den = np.sum(w[mask] * h[mask])
            vals.append(learning_rate * num / den if den > 1e-12 else 0.0)
        stump = Stump(j, float(thr), float(vals[0]), float(vals[1]))
        for _ in range(21):
            F_new = F + stump.predict(X)
            new_loss = _weighted_logloss(F_new, y, w)
            if new_loss <= loss:
                break
            stump.left_value *= 0.5
            stump.right_value *= 0.5
        else:
            break
        F, loss = F_new, new_loss
        stumps.append(stump)
        history.append(loss)
    return StumpBoostModel(stumps, base, learning_rate, n_rounds, X.shape[1], history)


# ---------------------------------------------------------------------------
# Linear max-margin model
# ---------------------------------------------------------------------------


@dataclass
class LinearMaxMarginModel(_Base):
    weights: np.ndarray
    bias: float
    reg_lambda: float
    objective_history: list = field(default_factory=list)

    @property
    def n_features(self):
        return self.weights.shape[0]

    def decision_function(self, X):
        X = self._check_X(X)
        return X @ self.weights + self.bias

    def margins(self, X, labels_pm):
        return np.asarray(labels_pm, dtype=float) * self.decision_function(X)

    def support_mask(self, X, labels_pm, tol=1e-3):
        return self.margins(X, labels_pm) <= 1.0 + tol

    def to_dict(self):
        return {
            "type": "linear_svm",
            "version": MODEL_FORMAT_VERSION,
            "weights": [float(v) for v in self.weights],
            "bias": float(self.bias),
            "reg_lambda": self.reg_lambda,
        }


def svm_objective(w, b, X, y_pm, reg_lambda):
    """(lambda/2)(||w||^2 + b^2) + mean hinge.  The bias is penalised, as in LinearSVC."""
    hinge = np.maximum(0.0, 1.0 - y_pm * (X @ w + b))
    return 0.5 * reg_lambda * (np.dot(w, w) + b * b) + hinge.mean()


def fit_linear_svm(features, labels_pm, reg_lambda=0.01, epochs=2000, seed=0, tol=1e-12):
    """Linear SVM with penalised bias, solved in the dual.

    Appending a constant feature turns the bias into an ordinary weight, so
    the dual is a box-constrained QP ``0 <= alpha_i <= 1/(n*lambda)`` with
    no equality constraint.  It is minimised matrix-free by L-BFGS-B for at
    most ``epochs`` iterations in total, restarting while progress is
    made; ``objective_history`` holds the dual
    objective after each iteration (non-increasing).  The solver is
    deterministic, so ``seed`` only exists for interface symmetry.
    """
    X = np.asarray(features, dtype=float)
    if X.ndim == 1:
        X = X.reshape(-1, 1)
    y = np.asarray(labels_pm, dtype=float)
    if set(np.unique(y)) - {-1.0, 1.0}:
        raise ValueError("labels_pm must be -1/+1")
    if np.unique(y).size < 2:
        raise SingleClassInput("both classes must be present to fit")
    if not reg_lambda > 0:
        raise ValueError("reg_lambda must be positive")
    n, d = X.shape
    Xa = np.hstack([X, np.ones((n, 1))])
    C = 1.0 / (n * reg_lambda)

    def dual(alpha):
        v = Xa.T @ (y * alpha)
        return 0.5 * v @ v - alpha.sum(), y * (Xa @ v) - 1.0

    history = []
    alpha, budget = np.zeros(n), max(1, int(epochs))
    # L-BFGS-B can stall on this degenerate QP; restarting clears its memory.
    while budget > 0:
        res = minimize(dual, alpha, jac=True, method="L-BFGS-B", bounds=[(0.0, C)] * n,
                       callback=lambda a: history.append(float(dual(a)[0])),
                       options={"maxiter": budget, "ftol": 0.0, "gtol": tol, "maxcor": 20})
        budget -= res.nit
        if res.nit == 0 or res.fun >= dual(alpha)[0]:
            break
        alpha = res.x
    v = Xa.T @ (y * alpha)
    return LinearMaxMarginModel(v[:d].copy(), float(v[d]), reg_lambda, history)


def model_from_dict(doc: dict):
    kind = doc.get("type")
    if kind == "logistic":
        return LogisticModel(np.array(doc["coefficients"], dtype=float), doc["intercept"], doc["l2_lambda"])
    if kind == "stump_boost":
        stumps = [Stump(int(f), t, lv, rv) for f, t, lv, rv in doc["stumps"]]
        return StumpBoostModel(stumps, doc["base_score"], doc["learning_rate"], doc["n_rounds"],
                               doc["n_features"])
    if kind == "linear_svm":
        return LinearMaxMarginModel(np.array(doc["weights"], dtype=float), doc["bias"], doc["reg_lambda"])
    raise ValueError(f"unknown model type {kind!r}")


def fit_classifier(kind: str, features, labels, seed=0, **kwargs):
    """Fit one of the named classifier families on 0/1 labels."""
    if kind == "logistic":
        return fit_logistic(features, labels, **kwargs)
    if kind == "stump_boost":
        return fit_stump_boost(features, labels, seed=seed, **kwargs)
    if kind == "linear_svm":
        y_pm = 2.0 * np.asarray(labels, dtype=float) - 1.0
        return fit_linear_svm(features, y_pm, seed=seed, **kwargs)
    raise ValueError(f"unknown classifier {kind!r}")
