import numpy as np
import pytest

from recourse_kit.data import demo_credit_path, load_german_credit
from recourse_kit.estimator import CounterfactualExplainer
from recourse_kit.scm import FeatureMeta, LinearSCM

X1_FACTUAL = np.array([1.0, 24.0, 4308.0, 48.0])  # (female, 24, $4308, 48 months)
X2_FACTUAL = np.array([0.0, 27.0, 14027.0, 60.0])  # (male, 27, $14027, 60 months)
LOW_RISK, HIGH_RISK = 0, 1


@pytest.fixture(scope="session")
def credit_dataset():
    return load_german_credit(demo_credit_path())


@pytest.fixture(scope="session")
def credit_model(credit_dataset):
    return CounterfactualExplainer().fit(credit_dataset.X, credit_dataset.y)


@pytest.fixture(scope="session")
def credit_explanations(credit_model):
    """One solve per method per factual, shared across the suite."""
    out = {}
    for tag, x in (("T1", X1_FACTUAL), ("T2", X2_FACTUAL)):
        out[tag] = {
            "wachter": credit_model.explain(x, LOW_RISK, method="wachter"),
            "recourse": credit_model.explain(x, LOW_RISK, method="recourse"),
            "latent": credit_model.explain(x, LOW_RISK, method="latent"),
            "blended_1.0": credit_model.explain(x, LOW_RISK, method="blended", lam=1.0),
            "blended_1.2": credit_model.explain(x, LOW_RISK, method="blended", lam=1.2),
        }
    return out


def chain_scm():
    """The credit-experiment graph shape with round coefficients:
    two roots, amount <- (gender, age), duration <- amount."""
    return LinearSCM(
        parents=((), (), (0, 1), (2,)),
        weights=((), (), (0.5, 0.3), (0.2,)),
        intercepts=(0.0, 0.0, 1.0, -0.5),
        noise_sigma=(1.0, 1.0, 1.0, 1.0),
        features=(
            FeatureMeta(name="gender", index=0, sigma=1.0, mutable=False, categorical=True),
            FeatureMeta(name="age", index=1),
            FeatureMeta(name="amount", index=2),
            FeatureMeta(name="duration", index=3),
        ),
    )
