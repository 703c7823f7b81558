"""Causally consistent counterfactual explanations for tabular classifiers.

The package models features with a linear additive-noise SCM, fits a
logistic risk classifier, and searches for counterfactual inputs that flip
the prediction while staying close to the factual both in feature space and
in the latent noise space that generated it.
"""

from .backtracking import BacktrackingKernel, log_density_unnormalized, map_argmax_grid
from .data import ColumnMapping, Dataset, load_german_credit, standardize, synth_scm
from .errors import (
    ConstantColumnError,
    DataFormatError,
    EmptyFeasibleSetError,
    GraphCycleError,
    InfeasibleQueryError,
    SingularDesignError,
    SubsetBudgetError,
)
from .estimator import CounterfactualExplainer
from .learners import LinearModel, LogisticModel, fit_linear_ols
from .methods import (
    Counterfactual,
    MatchReport,
    ParetoPoint,
    Query,
    SweepResult,
    explain,
    explain_blended,
    explain_latent,
    explain_recourse,
    explain_wachter,
    lambda_sweep,
    match_latent_budget,
)
from .scm import (
    FeatureMeta,
    LinearSCM,
    abduct,
    apply_intervention,
    counterfactual_noise,
    interventional_counterfactual,
    reduced_form,
    topological_order,
)
from .solver import (
    CounterfactualObjective,
    SolverConfig,
    distance_u,
    distance_x,
    grid_oracle,
    latent_problem,
    penalty_solve,
)

__version__ = "0.1.0"

__all__ = [
    "BacktrackingKernel",
    "ColumnMapping",
    "ConstantColumnError",
    "Counterfactual",
    "CounterfactualExplainer",
    "CounterfactualObjective",
    "DataFormatError",
    "Dataset",
    "EmptyFeasibleSetError",
    "FeatureMeta",
    "GraphCycleError",
    "InfeasibleQueryError",
    "LinearModel",
    "LinearSCM",
    "LogisticModel",
    "MatchReport",
    "ParetoPoint",
    "Query",
    "SingularDesignError",
    "SolverConfig",
    "SubsetBudgetError",
    "SweepResult",
    "abduct",
    "apply_intervention",
    "counterfactual_noise",
    "distance_u",
    "distance_x",
    "explain",
    "explain_blended",
    "explain_latent",
    "explain_recourse",
    "explain_wachter",
    "fit_linear_ols",
    "grid_oracle",
    "interventional_counterfactual",
    "lambda_sweep",
    "latent_problem",
    "load_german_credit",
    "log_density_unnormalized",
    "map_argmax_grid",
    "match_latent_budget",
    "penalty_solve",
    "reduced_form",
    "standardize",
    "synth_scm",
    "topological_order",
]
