"""Scikit-learn style facade: fit mechanisms and classifier, then explain.

``CounterfactualExplainer`` is the one-stop estimator for tabular data with
a known causal graph: ``fit(X, y)`` learns one linear mechanism per non-root
node plus a logistic risk classifier, and the ``explain``/``compare``/
``sweep``/``sensitivity`` methods answer counterfactual queries against the
fitted model. It follows the estimator protocol (``get_params``, fitted
attributes with trailing underscores, ``predict``/``predict_proba``), so it
drops into sklearn tooling.
"""

from __future__ import annotations

import dataclasses

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.exceptions import NotFittedError
from sklearn.utils.validation import check_X_y, check_array

from .learners import LinearModel, LogisticModel, fit_linear_ols
from .methods import (
    Counterfactual,
    Query,
    SweepResult,
    explain,
    lambda_sweep,
    match_latent_budget,
)
from .scm import FeatureMeta, LinearSCM, abduct, scm_from_json, scm_to_json
from .solver import SolverConfig, latent_problem, penalty_solve

CREDIT_GRAPH = ((), (), (0, 1), (2,))


class CounterfactualExplainer(BaseEstimator, ClassifierMixin):
    """Fit a linear SCM plus logistic classifier and explain its decisions.

    Parameters
    ----------
    graph : tuple of parent-index tuples, one per feature, defining the DAG.
        Defaults to the credit graph (amount <- gender, age; duration <- amount).
    feature_names : column names; defaults to the credit view.
    immutable : indices never edited by explanations (and excluded from
        distance sums).
    categorical : indices holding encoded categories (scale fixed to 1).
    l2, threshold, labels : classifier settings (see LogisticModel).
    solver : SolverConfig for the counterfactual search.
    """

    def __init__(
        self,
        graph=CREDIT_GRAPH,
        feature_names=("gender", "age", "amount", "duration"),
        immutable=(0,),
        categorical=(0,),
        l2: float = 1e-4,
        threshold: float = 0.5,
        labels=("low-risk", "high-risk"),
        solver: SolverConfig | None = None,
    ):
        self.graph = graph
        self.feature_names = feature_names
        self.immutable = immutable
        self.categorical = categorical
        self.l2 = l2
        self.threshold = threshold
        self.labels = labels
        self.solver = solver

    # -- fitting ------------------------------------------------------------

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=float)
        n_features = X.shape[1]
        if len(self.graph) != n_features or len(self.feature_names) != n_features:
            raise ValueError("graph and feature_names must match the number of columns")

        mechanisms: list[LinearModel] = []
        noise_sigma = []
        for j, parents in enumerate(self.graph):
            if parents:
                model = fit_linear_ols(X[:, list(parents)], X[:, j])
                resid = X[:, j] - model.predict(X[:, list(parents)])
            else:
                model = LinearModel(weights=(), intercept=0.0)
                resid = X[:, j]
            mechanisms.append(model)
            noise_sigma.append(max(float(np.std(resid, ddof=1)), 1e-12))

        features = []
        for j, name in enumerate(self.feature_names):
            if j in self.categorical:
                sigma = 1.0
            else:
                sigma = float(np.std(X[:, j], ddof=1))
                if sigma == 0.0:
                    raise ValueError(f"feature {name!r} is constant")
            features.append(
                FeatureMeta(
                    name=name, index=j, sigma=sigma,
                    mutable=j not in self.immutable, categorical=j in self.categorical,
                )
            )

        self.scm_ = LinearSCM(
            parents=tuple(tuple(p) for p in self.graph),
            weights=tuple(m.weights for m in mechanisms),
            intercepts=tuple(m.intercept for m in mechanisms),
            noise_sigma=tuple(noise_sigma),
            features=tuple(features),
        )
        self.classifier_ = LogisticModel(
            l2=self.l2, threshold=self.threshold, labels=tuple(self.labels)
        ).fit(X, y)
        self.n_features_in_ = n_features
        return self

    @classmethod
    def from_model(cls, scm: LinearSCM, classifier: LogisticModel, solver=None):
        """Wrap an already-fitted SCM and classifier (e.g. from a bundle file)."""
        est = cls(
            graph=scm.parents,
            feature_names=tuple(f.name for f in scm.features),
            immutable=tuple(i for i in range(scm.n) if not scm.features[i].mutable),
            categorical=tuple(i for i in range(scm.n) if scm.features[i].categorical),
            threshold=classifier.threshold,
            labels=tuple(classifier.labels),
            solver=solver,
        )
        est.scm_ = scm
        est.classifier_ = classifier
        est.n_features_in_ = scm.n
        return est

    def _require_fitted(self):
        if not hasattr(self, "scm_"):
            raise NotFittedError("CounterfactualExplainer is not fitted yet")

    # -- classifier surface ---------------------------------------------------

    def predict(self, X):
        self._require_fitted()
        return self.classifier_.predict(check_array(X, dtype=float))

    def predict_proba(self, X):
        self._require_fitted()
        return self.classifier_.predict_proba(check_array(X, dtype=float))

    def decision_function(self, X):
        self._require_fitted()
        return self.classifier_.decision_function(check_array(X, dtype=float))

    # -- explanations ---------------------------------------------------------

    def _solver(self) -> SolverConfig:
        return self.solver if self.solver is not None else SolverConfig()

    def explain(self, x, target: int, method: str = "blended", lam: float = 1.0) -> Counterfactual:
        self._require_fitted()
        x = np.asarray(x, dtype=float).ravel()
        query = Query(x_factual=x, target=int(target), method=method, lam=lam, solver=self._solver())
        return explain(self.scm_, self.classifier_, query)

    def compare(self, x, target: int, lambdas=(1.0, 1.2)) -> list[Counterfactual]:
        """Run every method on one factual; blended once per requested lam."""
        out = [self.explain(x, target, method="wachter")]
        out.append(self.explain(x, target, method="recourse"))
        out.append(self.explain(x, target, method="latent"))
        for lam in lambdas:
            out.append(self.explain(x, target, method="blended", lam=lam))
        return out

    def sweep(self, x, target: int, lambdas) -> SweepResult:
        self._require_fitted()
        return lambda_sweep(
            self.scm_, self.classifier_, np.asarray(x, dtype=float).ravel(), int(target),
            lambdas, solver=self._solver(),
        )

    def match_latent_budget(self, x, target: int):
        self._require_fitted()
        return match_latent_budget(
            self.scm_, self.classifier_, np.asarray(x, dtype=float).ravel(), int(target),
            solver=self._solver(),
        )

    def sensitivity(
        self, x, target: int, lam: float = 1.2, noise_sigma: float = 5.0,
        trials: int = 10, seed: int = 0, node: int = 2,
    ) -> list[Counterfactual]:
        """Re-solve the blended query under perturbed mechanism coefficients.

        Each trial adds independent N(0, noise_sigma^2) draws to the weight
        coefficients of ``node``'s mechanism (the amount equation by default)
        and re-solves on the perturbed model. Seeded and reproducible.
        """
        self._require_fitted()
        if not self.scm_.parents[node]:
            raise ValueError(f"node {node} has no mechanism coefficients to perturb")
        rng = np.random.default_rng(seed)
        x = np.asarray(x, dtype=float).ravel()
        # the factual latents stay abducted under the fitted mechanisms, so
        # each trial measures how a misestimated mechanism shifts the answer
        u_clean = abduct(self.scm_, x)
        cfg = self._solver()
        results = []
        for _ in range(trials):
            w = np.asarray(self.scm_.weights[node]) + rng.normal(0.0, noise_sigma, size=len(self.scm_.weights[node]))
            weights = list(self.scm_.weights)
            weights[node] = tuple(float(v) for v in w)
            perturbed = dataclasses.replace(self.scm_, weights=tuple(weights))
            problem = latent_problem(
                perturbed, self.classifier_, x, int(target), lam=lam,
                latent_sigma=cfg.latent_sigma, u_anchor=u_clean,
            )
            res = penalty_solve(problem, cfg)
            results.append(
                Counterfactual(
                    method="blended", lam=lam, x_factual=x, x_cf=res.x_cf, u_cf=res.u_cf,
                    d_x=res.d_x, d_u=res.d_u, converged=res.converged, iterations=res.iterations,
                )
            )
        return results

    # -- persistence ------------------------------------------------------------

    def to_json(self) -> str:
        self._require_fitted()
        return scm_to_json(self.scm_, self.classifier_.to_dict())

    @classmethod
    def from_json(cls, text: str, solver=None) -> "CounterfactualExplainer":
        scm, clf_doc = scm_from_json(text)
        if clf_doc is None:
            raise ValueError("bundle has no classifier section")
        return cls.from_model(scm, LogisticModel.from_dict(clf_doc), solver=solver)

    def factual_latent(self, x) -> np.ndarray:
        self._require_fitted()
        return abduct(self.scm_, np.asarray(x, dtype=float).ravel())
