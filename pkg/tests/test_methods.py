import numpy as np
import pytest

from recourse_kit.errors import InfeasibleQueryError, SubsetBudgetError
from recourse_kit.learners import LogisticModel
from recourse_kit.methods import (
    Query,
    explain,
    explain_blended,
    explain_latent,
    explain_recourse,
    explain_wachter,
    lambda_sweep,
    match_latent_budget,
)
from recourse_kit.scm import FeatureMeta, LinearSCM, abduct, counterfactual_noise, reduced_form
from recourse_kit.solver import grid_oracle, latent_problem
from recourse_kit.validate import desk_instance

from conftest import chain_scm


def independent_scm(n=2, sigma=None):
    sigma = sigma or (1.0,) * n
    return LinearSCM(
        parents=((),) * n,
        weights=((),) * n,
        intercepts=(0.0,) * n,
        noise_sigma=(1.0,) * n,
        features=tuple(FeatureMeta(name=f"x{i}", index=i, sigma=sigma[i]) for i in range(n)),
    )


def linear_clf(weights, bias):
    return LogisticModel.from_dict(
        {"weights": list(weights), "bias": bias, "threshold": 0.5, "labels": ["neg", "pos"]}
    )


class TestWachter:
    def test_trivial_query_echoes_factual(self):
        scm, clf, x, _ = desk_instance(0)
        cf = explain_wachter(scm, clf, Query(x_factual=x, target=clf.classify(x)))
        np.testing.assert_array_equal(cf.x_cf, x)
        assert cf.d_x == 0.0 and cf.converged

    def test_one_dimensional_boundary_projection(self):
        # single mutable coordinate: the optimum is the boundary projection
        scm = independent_scm(2)
        clf = linear_clf([2.0, 0.0], -3.0)
        x = np.array([0.0, 1.0])
        assert clf.classify(x) == 0
        cf = explain_wachter(scm, clf, Query(x_factual=x, target=1))
        np.testing.assert_allclose(cf.x_cf[0], 1.5, atol=1e-4)  # score 2*x0 - 3 = 0
        assert abs(cf.x_cf[1] - 1.0) < 1e-9
        assert cf.d_x == pytest.approx(1.5, abs=1e-4)

    def test_infeasible_raises(self):
        scm = chain_scm()
        clf = linear_clf([4.0, 0.0, 0.0, 0.0], -2.0)  # only frozen gender matters
        x = np.array([1.0, 30.0, 17.0, 3.0])
        with pytest.raises(InfeasibleQueryError):
            explain_wachter(scm, clf, Query(x_factual=x, target=0))


class TestRecourse:
    def test_matches_subset_times_grid_bruteforce(self):
        scm, clf, x, target = desk_instance(11, n_nodes=2)
        cf = explain_recourse(scm, clf, Query(x_factual=x, target=target))
        best = np.inf
        sigma = scm.feature_sigma()
        u_fact = abduct(scm, x)
        W = scm.weight_matrix()
        for subset in ((0,), (1,), (0, 1)):
            grids = [x[i] + sigma[i] * np.arange(-5.0, 5.0, 0.01) for i in subset]
            mesh = np.meshgrid(*grids, indexing="ij")
            V = np.stack([m.ravel() for m in mesh], axis=1)
            # vectorized interventional propagation over all candidate values
            X_out = np.zeros((V.shape[0], scm.n))
            col = {i: k for k, i in enumerate(subset)}
            for i in scm.topological_order():
                if i in col:
                    X_out[:, i] = V[:, col[i]]
                else:
                    X_out[:, i] = X_out @ W[i] + scm.intercepts[i] + u_fact[i]
            feas = clf.predict(X_out) == target
            if np.any(feas):
                d = np.sum(np.abs(X_out - x) / sigma, axis=1)
                best = min(best, float(np.min(d[feas])))
        assert cf.d_x <= best + 1e-6

    def test_intervention_reported_and_noise_bridge(self):
        scm, clf, x, target = desk_instance(12, n_nodes=3)
        cf = explain_recourse(scm, clf, Query(x_factual=x, target=target))
        assert cf.intervention is not None
        bridge = reduced_form(scm, counterfactual_noise(scm, x, cf.intervention))
        np.testing.assert_allclose(bridge, cf.x_cf, atol=1e-9)

    def test_infeasible_when_no_subset_flips(self):
        scm = chain_scm()
        clf = linear_clf([4.0, 0.0, 0.0, 0.0], -2.0)
        x = np.array([1.0, 30.0, 17.0, 3.0])
        with pytest.raises(InfeasibleQueryError):
            explain_recourse(scm, clf, Query(x_factual=x, target=0))

    def test_subset_budget_guard(self):
        n = 13
        scm = independent_scm(n)
        clf = linear_clf([1.0] * n, -1.0)
        with pytest.raises(SubsetBudgetError):
            explain_recourse(scm, clf, Query(x_factual=np.zeros(n), target=1))

    def test_tie_break_prefers_smaller_subset(self):
        # both coordinates identical in effect and scale: {0} ties {1} and {0,1}
        scm = independent_scm(2)
        clf = linear_clf([1.0, 1.0], -1.0)
        x = np.array([0.0, 0.0])
        cf = explain_recourse(scm, clf, Query(x_factual=x, target=1))
        assert list(cf.intervention) == [0]


class TestLatent:
    def test_matches_latent_only_grid_oracle(self):
        scm, clf, x, target = desk_instance(13, n_nodes=2)
        cf = explain_latent(scm, clf, Query(x_factual=x, target=target))
        problem = latent_problem(scm, clf, x, target, lam=1.0, w_x=0.0)
        _, oracle = grid_oracle(problem, bounds=(-5.0, 5.0), resolution=0.01)
        assert abs(cf.d_u - oracle) <= 0.02

    def test_trivial_query(self):
        scm, clf, x, _ = desk_instance(14)
        cf = explain_latent(scm, clf, Query(x_factual=x, target=clf.classify(x)))
        assert cf.d_u == 0.0
        np.testing.assert_array_equal(cf.u_cf, abduct(scm, x))


class TestBlended:
    def test_reduces_to_wachter_at_lam_zero(self):
        for seed in range(5):
            scm, clf, x, target = desk_instance(seed)
            wa = explain_wachter(scm, clf, Query(x_factual=x, target=target))
            bl = explain_blended(scm, clf, Query(x_factual=x, target=target, lam=0.0))
            assert abs(bl.d_x - wa.d_x) <= 1e-4

    def test_reduces_to_latent_at_large_lam(self):
        for seed in range(5):
            scm, clf, x, target = desk_instance(seed)
            la = explain_latent(scm, clf, Query(x_factual=x, target=target))
            bl = explain_blended(scm, clf, Query(x_factual=x, target=target, lam=1e6))
            assert abs(bl.d_u - la.d_u) <= 1e-3

    def test_causal_consistency_of_result(self):
        scm, clf, x, target = desk_instance(15)
        cf = explain_blended(scm, clf, Query(x_factual=x, target=target, lam=1.0))
        assert np.max(np.abs(reduced_form(scm, cf.u_cf) - cf.x_cf)) < 1e-12

    def test_dispatch_and_unknown_method(self):
        scm, clf, x, target = desk_instance(16)
        cf = explain(scm, clf, Query(x_factual=x, target=target, method="latent"))
        assert cf.method == "latent"
        with pytest.raises(ValueError):
            Query(x_factual=x, target=target, method="nope")

    def test_result_serialization(self):
        scm, clf, x, target = desk_instance(17)
        doc = explain_blended(scm, clf, Query(x_factual=x, target=target)).to_dict()
        assert doc["method"] == "blended"
        assert set(doc) >= {"lambda", "x_factual", "x_cf", "u_cf", "d_x", "d_u",
                            "converged", "intervention", "iterations"}


class TestLambdaSweep:
    def test_single_zero_lambda_equals_wachter(self):
        scm, clf, x, target = desk_instance(18)
        wa = explain_wachter(scm, clf, Query(x_factual=x, target=target))
        result = lambda_sweep(scm, clf, x, target, [0.0])
        assert len(result.points) == 1
        assert abs(result.points[0].d_x - wa.d_x) <= 1e-4

    def test_huge_lambda_matches_latent(self):
        scm, clf, x, target = desk_instance(19)
        la = explain_latent(scm, clf, Query(x_factual=x, target=target))
        result = lambda_sweep(scm, clf, x, target, [1e6])
        assert abs(result.points[0].d_u - la.d_u) <= 1e-3

    def test_monotone_frontier_on_desk_instance(self):
        scm, clf, x, target = desk_instance(20)
        result = lambda_sweep(scm, clf, x, target, np.geomspace(0.01, 100.0, 20))
        assert result.violations == []
        assert result.infeasible == []
        d_x = [p.d_x for p in result.points]
        d_u = [p.d_u for p in result.points]
        assert all(b >= a - 1e-6 for a, b in zip(d_x, d_x[1:]))
        assert all(b <= a + 1e-6 for a, b in zip(d_u, d_u[1:]))

    def test_rejects_bad_grids(self):
        scm, clf, x, target = desk_instance(21)
        with pytest.raises(ValueError):
            lambda_sweep(scm, clf, x, target, [1.0, 1.0])
        with pytest.raises(ValueError):
            lambda_sweep(scm, clf, x, target, [2.0, 1.0])
        with pytest.raises(ValueError):
            lambda_sweep(scm, clf, x, target, [-1.0, 1.0])


class TestMatchLatentBudget:
    def test_zero_budget_when_factual_feasible(self):
        scm, clf, x, _ = desk_instance(22)
        report = match_latent_budget(scm, clf, x, clf.classify(x))
        assert report.latent_budget == 0.0
        assert report.blended.d_x == 0.0 and report.recourse.d_x == 0.0
        assert report.dominance and report.matched

    def test_single_direction_instance_matches_with_equality(self):
        # classifier uses only the second (independent) feature: the recourse
        # move and the blended move are the same boundary projection
        scm = independent_scm(2)
        clf = linear_clf([0.0, 2.0], -3.0)
        x = np.array([0.5, 0.0])
        report = match_latent_budget(scm, clf, x, 1)
        assert report.matched and report.dominance
        assert report.blended.d_x == pytest.approx(report.recourse.d_x, abs=1e-6)
        assert report.latent_budget == pytest.approx(1.5, abs=1e-4)

    def test_dominance_on_convex_instances(self):
        produced = 0
        seed = 450
        while produced < 5:
            scm, clf, x, target = desk_instance(seed)
            seed += 1
            report = match_latent_budget(scm, clf, x, target)
            if not report.budget_attainable:
                continue
            produced += 1
            assert report.dominance
            assert abs(report.blended.d_u - report.latent_budget) <= 1e-4 * (1 + report.latent_budget)


class TestFrozenFeatures:
    def test_every_method_keeps_gender_bit_equal(self, credit_model, credit_explanations):
        for tag, x in (("T1", [1.0, 24, 4308, 48]), ("T2", [0.0, 27, 14027, 60])):
            for cf in credit_explanations[tag].values():
                assert cf.x_cf[0] == x[0]

    def test_sparsity_ordering_on_credit_instance(self, credit_model, credit_explanations):
        sigma = credit_model.scm_.feature_sigma()
        x = np.array([1.0, 24, 4308, 48])

        def changed(cf):
            return int(np.sum(np.abs(cf.x_cf - x) > 1e-3 * sigma))

        n_wa = changed(credit_explanations["T1"]["wachter"])
        n_bl = changed(credit_explanations["T1"]["blended_1.0"])
        n_la = changed(credit_explanations["T1"]["latent"])
        assert n_wa <= n_bl <= n_la
        assert (n_wa, n_bl, n_la) == (1, 2, 3)
