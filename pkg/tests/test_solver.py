import numpy as np
import pytest

from recourse_kit.errors import EmptyFeasibleSetError
from recourse_kit.learners import LogisticModel
from recourse_kit.scm import FeatureMeta, abduct, reduced_form
from recourse_kit.solver import (
    SolverConfig,
    distance_u,
    distance_x,
    direct_problem,
    grid_oracle,
    latent_problem,
    penalty_solve,
)
from recourse_kit.validate import desk_instance

from conftest import chain_scm


def unit_features(n):
    return tuple(FeatureMeta(name=f"x{i}", index=i) for i in range(n))


class TestDistances:
    def test_zero_at_equal_points(self):
        f = unit_features(2)
        a = np.array([1.0, 2.0])
        assert distance_x(a, a, f) == 0.0
        assert distance_u(a, a, f) == 0.0

    def test_weighted_l1_hand_sum(self):
        f = unit_features(2)
        assert distance_x(np.array([1.0, 2.0]), np.array([0.0, 4.0]), f) == 3.0

    def test_weighted_l2_three_four_five(self):
        f = unit_features(2)
        assert distance_u(np.array([3.0, 4.0]), np.array([0.0, 0.0]), f) == 5.0

    def test_symmetry_and_sigma_weighting(self):
        f = (FeatureMeta(name="a", index=0, sigma=2.0), FeatureMeta(name="b", index=1, sigma=0.5))
        a, b = np.array([1.0, 1.0]), np.array([3.0, 0.0])
        assert distance_x(a, b, f) == distance_x(b, a, f) == 1.0 + 2.0

    def test_frozen_coordinates_excluded(self):
        f = (FeatureMeta(name="a", index=0, mutable=False), FeatureMeta(name="b", index=1))
        assert distance_x(np.array([5.0, 1.0]), np.array([0.0, 1.0]), f) == 0.0

    def test_triangle_inequality_seeded(self):
        rng = np.random.default_rng(0)
        f = (FeatureMeta(name="a", index=0, sigma=1.3), FeatureMeta(name="b", index=1, sigma=0.7),
             FeatureMeta(name="c", index=2, sigma=2.1))
        for _ in range(1000):
            a, b, c = rng.standard_normal((3, 3)) * 4
            assert distance_u(a, c, f) <= distance_u(a, b, f) + distance_u(b, c, f) + 1e-12

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            distance_x(np.array([1.0]), np.array([1.0, 2.0]), unit_features(2))


class TestPenaltyObjective:
    def test_value_at_factual_is_pure_penalty(self):
        scm, clf, x, target = desk_instance(0)
        problem = latent_problem(scm, clf, x, target, lam=1.3)
        beta = 2.5
        value, _ = problem.value_and_grad(problem.z0, beta, mu=1e-6)
        p_target = clf.probability(x) if target == 1 else 1 - clf.probability(x)
        assert value == pytest.approx(beta * -np.log(p_target), rel=1e-12)

    def test_lam_zero_ignores_anchor(self):
        scm, clf, x, target = desk_instance(1)
        problem = latent_problem(scm, clf, x, target, lam=0.0)
        z = problem.z0 + 0.7
        v1, _ = problem.value_and_grad(z, 1.0, 1e-6)
        problem.z_anchor = problem.z_anchor + 5.0
        v2, _ = problem.value_and_grad(z, 1.0, 1e-6)
        assert v1 == v2

    def test_full_latent_evaluation_matches_z_space(self):
        scm, clf, x, target = desk_instance(2)
        problem = latent_problem(scm, clf, x, target, lam=0.8)
        z = problem.z0 + np.linspace(-0.5, 0.5, problem.m)
        u_full = problem.u_of_z(z)
        v_z, g_z = problem.value_and_grad(z, 1.0, 1e-6)
        v_u, g_u = problem.value_and_grad_at_u(u_full, 1.0, 1e-6)
        assert v_u == pytest.approx(v_z, rel=1e-12)
        np.testing.assert_allclose(g_u, g_z, rtol=1e-12)

    def test_gradient_matches_finite_differences(self):
        scm, clf, x, target = desk_instance(3)
        problem = latent_problem(scm, clf, x, target, lam=1.1)
        rng = np.random.default_rng(0)
        z = problem.z0 + rng.uniform(0.5, 1.0, problem.m)
        value, grad = problem.value_and_grad(z, 2.0, 1e-6)
        eps = 1e-6
        for j in range(problem.m):
            zp, zm = z.copy(), z.copy()
            zp[j] += eps
            zm[j] -= eps
            fd = (problem.value_and_grad(zp, 2.0, 1e-6)[0]
                  - problem.value_and_grad(zm, 2.0, 1e-6)[0]) / (2 * eps)
            assert fd == pytest.approx(grad[j], rel=1e-5, abs=1e-8)


class TestPenaltySolve:
    def test_trivial_target_returns_factual(self):
        scm, clf, x, _ = desk_instance(4)
        current = clf.classify(x)
        problem = latent_problem(scm, clf, x, current, lam=1.0)
        res = penalty_solve(problem)
        assert res.converged
        assert res.d_x == 0.0 and res.d_u == 0.0
        np.testing.assert_array_equal(res.x_cf, x)

    def test_agrees_with_grid_oracle_on_2d(self):
        scm, clf, x, target = desk_instance(5, n_nodes=2)
        problem = latent_problem(scm, clf, x, target, lam=1.0)
        res = penalty_solve(problem)
        _, oracle_value = grid_oracle(problem, bounds=(-5.0, 5.0), resolution=0.01)
        solve_value = problem.exact_objective(res.z)
        assert oracle_value <= solve_value + 0.02
        assert oracle_value >= solve_value - 0.02

    def test_grid_refinement_never_increases_optimum(self):
        scm, clf, x, target = desk_instance(6, n_nodes=2)
        problem = latent_problem(scm, clf, x, target, lam=1.0)
        coarse = grid_oracle(problem, bounds=(-5.0, 5.0), resolution=0.1)[1]
        fine = grid_oracle(problem, bounds=(-5.0, 5.0), resolution=0.01)[1]
        assert fine <= coarse + 1e-9

    def test_oracle_trivial_single_point_grid(self):
        scm, clf, x, _ = desk_instance(7)
        current = clf.classify(x)
        problem = latent_problem(scm, clf, x, current, lam=1.0)
        u_best, value = grid_oracle(problem, bounds=(0.0, 0.0), resolution=1.0)
        assert value == pytest.approx(0.0, abs=1e-12)
        np.testing.assert_allclose(u_best, abduct(scm, x), atol=1e-12)

    def test_unreachable_constraint_not_converged(self):
        scm = chain_scm()  # gender frozen
        clf = LogisticModel.from_dict(
            {"weights": [4.0, 0.0, 0.0, 0.0], "bias": -2.0, "threshold": 0.5,
             "labels": ["a", "b"]}
        )  # score depends only on the frozen feature
        x = np.array([1.0, 30.0, 17.0, 3.0])
        assert clf.classify(x) == 1
        problem = latent_problem(scm, clf, x, 0, lam=1.0)
        res = penalty_solve(problem, SolverConfig(beta_max=2.0**10))
        assert not res.converged
        with pytest.raises(EmptyFeasibleSetError):
            grid_oracle(problem, bounds=(-2.0, 2.0), resolution=0.5)

    def test_frozen_features_bit_equal_and_causally_consistent(self):
        scm = chain_scm()
        clf = LogisticModel.from_dict(
            {"weights": [0.5, -0.2, 0.8, 1.0], "bias": -3.0, "threshold": 0.5,
             "labels": ["a", "b"]}
        )
        u = np.array([1.0, 1.5, 0.3, -0.2])
        x = reduced_form(scm, u)
        target = 1 - clf.classify(x)
        problem = latent_problem(scm, clf, x, target, lam=1.0)
        res = penalty_solve(problem)
        assert res.converged
        assert res.x_cf[0] == x[0]  # frozen gender untouched, bit-equal
        assert np.max(np.abs(reduced_form(scm, res.u_cf) - res.x_cf)) < 1e-12

    def test_trace_csv_shape(self):
        scm, clf, x, target = desk_instance(8)
        res = penalty_solve(latent_problem(scm, clf, x, target, lam=1.0))
        csv = res.trace.to_csv()
        header, *rows = csv.strip().splitlines()
        assert header == "iter,beta,objective,d_x,d_u,constraint_satisfied"
        assert len(rows) >= 1
        assert rows[-1].endswith(",1")

    def test_feasible_result_never_worse_than_factual_objective(self):
        for seed in range(10):
            scm, clf, x, target = desk_instance(seed)
            problem = latent_problem(scm, clf, x, target, lam=1.0)
            res = penalty_solve(problem)
            assert res.converged
            # factual is infeasible, so any feasible point has positive cost;
            # the solver must return the best feasible point it visited
            feasible_rows = [r for r in res.trace.rows if r[5]]
            best_seen = min(r[2] for r in feasible_rows)
            assert problem.exact_objective(res.z) <= best_seen + 1e-12

    def test_seeded_restarts_deterministic(self):
        scm, clf, x, target = desk_instance(9)
        cfg = SolverConfig(restarts=2, seed=5)
        r1 = penalty_solve(latent_problem(scm, clf, x, target, lam=1.0), cfg)
        r2 = penalty_solve(latent_problem(scm, clf, x, target, lam=1.0), cfg)
        assert np.array_equal(r1.z, r2.z)


class TestDirectProblem:
    def test_direct_edit_has_no_causal_propagation(self):
        scm = chain_scm()
        clf = LogisticModel.from_dict(
            {"weights": [0.0, 0.0, 1.0, 0.0], "bias": -5.0, "threshold": 0.5,
             "labels": ["a", "b"]}
        )
        x = np.array([1.0, 30.0, 2.0, 1.0])
        problem = direct_problem(scm, clf, x, 1)
        z = problem.z0.copy()
        z[1] += 10.0  # move amount only
        moved = problem.x_of_z(z)
        assert moved[2] == x[2] + 10.0
        assert moved[3] == x[3]  # duration does not follow


class TestSolverConfig:
    def test_invalid_growth(self):
        with pytest.raises(ValueError):
            SolverConfig(beta_growth=1.0)

    def test_invalid_latent_sigma(self):
        with pytest.raises(ValueError):
            SolverConfig(latent_sigma="bogus")
