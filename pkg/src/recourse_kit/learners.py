"""Estimators for the structural mechanisms and the risk classifier.

The mechanisms are tiny ordinary-least-squares fits (2 regressors at most in
the credit experiment), solved by normal equations with an optional ridge
fallback. The classifier is a from-scratch logistic regression fitted by
damped Newton steps with an Armijo line search, so refits are bit-for-bit
deterministic for a fixed design matrix and configuration.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.exceptions import NotFittedError
from sklearn.utils.validation import check_array, check_X_y

from .errors import SingularDesignError


@dataclass(frozen=True)
class LinearModel:
    """Fitted linear mechanism ``y = weights . x + intercept``."""

    weights: tuple[float, ...]
    intercept: float

    def predict(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return X @ np.asarray(self.weights) + self.intercept


def fit_linear_ols(X, y, *, ridge: float = 1e-8, allow_ridge: bool = True) -> LinearModel:
    """Ordinary least squares with intercept via normal equations.

    On a rank-deficient design the system is re-solved with a small ridge
    term (``ridge`` on the non-intercept block); pass ``allow_ridge=False``
    to get a SingularDesignError instead.
    """
    X = check_array(X, dtype=float, ensure_2d=True)
    y = np.asarray(y, dtype=float).ravel()
    n, d = X.shape
    if y.shape[0] != n:
        raise ValueError(f"X has {n} rows but y has {y.shape[0]}")
    if n < d + 1:
        raise ValueError(f"need at least {d + 1} rows to fit {d} coefficients plus intercept")
    A = np.column_stack([X, np.ones(n)])
    G = A.T @ A
    rhs = A.T @ y
    try:
        if np.linalg.matrix_rank(G) < d + 1:
            raise np.linalg.LinAlgError("rank deficient")
        beta = np.linalg.solve(G, rhs)
    except np.linalg.LinAlgError:
        if not allow_ridge:
            raise SingularDesignError("design matrix is rank deficient") from None
        reg = ridge * np.eye(d + 1)
        reg[-1, -1] = 0.0  # never penalize the intercept
        beta = np.linalg.solve(G + reg, rhs)
    return LinearModel(weights=tuple(beta[:-1]), intercept=float(beta[-1]))


class LogisticModel(BaseEstimator, ClassifierMixin):
    """Binary logistic regression with a decision threshold.

    Parameters
    ----------
    l2 : ridge strength on the standardized coefficients (not the intercept).
    threshold : probability cutoff; ``predict`` returns 1 when the class-1
        probability is greater than or equal to it (ties go to class 1).
    labels : display names for classes 0 and 1.

    Fitting standardizes columns internally for conditioning and maps the
    coefficients back to the raw feature scale, so ``coef_`` applies to
    unscaled inputs.
    """

    def __init__(
        self,
        l2: float = 1e-4,
        tol: float = 1e-6,
        max_iter: int = 500,
        threshold: float = 0.5,
        labels: tuple[str, str] = ("negative", "positive"),
    ):
        self.l2 = l2
        self.tol = tol
        self.max_iter = max_iter
        self.threshold = threshold
        self.labels = labels

    def fit(self, X, y):
        if not 0.0 < self.threshold < 1.0:
            raise ValueError("threshold must lie strictly between 0 and 1")
        X, y = check_X_y(X, y, dtype=float)
        y = y.astype(float)
        if not set(np.unique(y)) <= {0.0, 1.0}:
            raise ValueError("labels must be binary 0/1")
        n, d = X.shape

        one_class = len(np.unique(y)) < 2
        if one_class:
            warnings.warn("only one class present; returning a prior-dominated fit", RuntimeWarning)

        mu = X.mean(axis=0)
        sd = X.std(axis=0, ddof=0)
        sd[sd == 0] = 1.0
        Z = (X - mu) / sd

        w = np.zeros(d)
        prior = float(np.clip(y.mean(), 1.0 / (n + 1), n / (n + 1)))
        b = float(np.log(prior / (1.0 - prior)))
        loss, grad_w, grad_b = self._loss_grad(Z, y, w, b)
        self.loss_trace_ = [loss]
        n_iter = 0
        for n_iter in range(1, self.max_iter + 1):
            gnorm = max(np.abs(grad_w).max() if d else 0.0, abs(grad_b))
            if gnorm < self.tol:
                break
            step_w, step_b = self._newton_direction(Z, y, w, b, grad_w, grad_b)
            t = 1.0
            descent = grad_w @ step_w + grad_b * step_b
            if descent >= 0:  # fall back to steepest descent
                step_w, step_b = -grad_w, -grad_b
                descent = -(grad_w @ grad_w + grad_b * grad_b)
            for _ in range(60):
                new_loss, new_gw, new_gb = self._loss_grad(Z, y, w + t * step_w, b + t * step_b)
                if new_loss <= loss + 1e-4 * t * descent:
                    break
                t *= 0.5
            else:
                break
            w, b = w + t * step_w, b + t * step_b
            loss, grad_w, grad_b = new_loss, new_gw, new_gb
            self.loss_trace_.append(loss)

        self.coef_ = w / sd
        self.intercept_ = float(b - self.coef_ @ mu)
        self.n_iter_ = n_iter
        self.converged_ = max(np.abs(grad_w).max() if d else 0.0, abs(grad_b)) < self.tol
        self.separable_ = bool(one_class or np.all((self.decision_function(X) > 0) == (y == 1)))
        return self

    def _loss_grad(self, Z, y, w, b):
        n = Z.shape[0]
        s = Z @ w + b
        p = _sigmoid(s)
        # mean negative log-likelihood, numerically stable via logaddexp
        nll = float(np.mean(np.logaddexp(0.0, s) - y * s))
        loss = nll + 0.5 * self.l2 * float(w @ w)
        r = (p - y) / n
        return loss, Z.T @ r + self.l2 * w, float(r.sum())

    def _newton_direction(self, Z, y, w, b, grad_w, grad_b):
        n, d = Z.shape
        p = _sigmoid(Z @ w + b)
        omega = p * (1.0 - p) / n
        A = np.column_stack([Z, np.ones(n)])
        H = A.T @ (A * omega[:, None])
        H[:d, :d] += self.l2 * np.eye(d)
        H += 1e-10 * np.eye(d + 1)
        try:
            step = np.linalg.solve(H, -np.concatenate([grad_w, [grad_b]]))
        except np.linalg.LinAlgError:
            return -grad_w, -grad_b
        return step[:d], float(step[-1])

    def decision_function(self, X) -> np.ndarray:
        self._require_fitted()
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.coef_.shape[0]:
            raise ValueError(f"expected {self.coef_.shape[0]} features, got {X.shape[1]}")
        return X @ self.coef_ + self.intercept_

    def predict_proba(self, X) -> np.ndarray:
        p1 = _sigmoid(self.decision_function(X))
        return np.column_stack([1.0 - p1, p1])

    def probability(self, x) -> float:
        """Class-1 probability for a single feature vector."""
        return float(_sigmoid(self.decision_function(np.atleast_2d(x)))[0])

    def predict(self, X) -> np.ndarray:
        p1 = self.predict_proba(X)[:, 1]
        return (p1 >= self.threshold).astype(int)

    def classify(self, x) -> int:
        """Hard label for a single feature vector (ties classified as 1)."""
        return int(self.predict(np.atleast_2d(x))[0])

    def label_name(self, label: int) -> str:
        return self.labels[int(label)]

    def to_dict(self) -> dict:
        self._require_fitted()
        return {
            "weights": [float(c) for c in self.coef_],
            "bias": self.intercept_,
            "threshold": self.threshold,
            "labels": list(self.labels),
        }

    @classmethod
    def from_dict(cls, doc) -> "LogisticModel":
        model = cls(threshold=float(doc["threshold"]), labels=tuple(doc["labels"]))
        model.coef_ = np.asarray(doc["weights"], dtype=float)
        model.intercept_ = float(doc["bias"])
        model.n_iter_ = 0
        model.converged_ = True
        model.separable_ = False
        return model

    def _require_fitted(self):
        if not hasattr(self, "coef_"):
            raise NotFittedError("LogisticModel is not fitted yet")


def _sigmoid(s):
    s = np.asarray(s, dtype=float)
    out = np.empty_like(s)
    pos = s >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-s[pos]))
    es = np.exp(s[~pos])
    out[~pos] = es / (1.0 + es)
    return out
