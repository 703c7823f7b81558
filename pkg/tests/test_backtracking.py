import numpy as np
import pytest

from recourse_kit.backtracking import (
    BacktrackingKernel,
    density_surface_csv,
    log_density_unnormalized,
    map_argmax_grid,
)
from recourse_kit.errors import EmptyFeasibleSetError
from recourse_kit.learners import LogisticModel
from recourse_kit.methods import Query, explain_blended
from recourse_kit.scm import abduct, reduced_form
from recourse_kit.solver import grid_oracle, latent_problem
from recourse_kit.validate import desk_instance


def two_node_fixture(seed=301):
    scm, clf, x, target = desk_instance(seed, n_nodes=2)
    u = abduct(scm, x)
    x = reduced_form(scm, u)  # bit-consistent pair
    return scm, clf, x, u, target


class TestLogDensity:
    def test_zero_at_the_factual_mode(self):
        scm, _, _, u, _ = two_node_fixture()
        kernel = BacktrackingKernel(scm, lam=1.0)
        assert log_density_unnormalized(kernel, u, u) == 0.0

    def test_strictly_negative_away_from_mode(self):
        scm, _, _, u, _ = two_node_fixture()
        kernel = BacktrackingKernel(scm, lam=0.5)
        rng = np.random.default_rng(0)
        for _ in range(100):
            u_cf = u + rng.standard_normal(2)
            if not np.array_equal(u_cf, u):
                assert log_density_unnormalized(kernel, u, u_cf) < 0.0

    def test_monotone_decreasing_in_lam(self):
        scm, _, _, u, _ = two_node_fixture()
        u_cf = u + np.array([0.4, -0.7])
        values = [
            log_density_unnormalized(BacktrackingKernel(scm, lam=lam), u, u_cf)
            for lam in (0.0, 0.5, 1.0, 2.0, 4.0)
        ]
        assert all(b < a for a, b in zip(values, values[1:]))

    def test_agrees_with_exact_search_objective(self):
        rng = np.random.default_rng(1)
        checked = 0
        seed = 600
        while checked < 50:
            scm, clf, x, target = desk_instance(seed, n_nodes=int(rng.integers(2, 4)))
            seed += 1
            u = abduct(scm, x)
            x = reduced_form(scm, u)
            lam = float(rng.uniform(0.1, 3.0))
            kernel = BacktrackingKernel(scm, lam=lam)
            problem = latent_problem(scm, clf, x, target, lam=lam)
            z = u[list(scm.mutable_indices)] + rng.standard_normal(problem.m)
            u_cf = problem.u_of_z(z)
            logp = log_density_unnormalized(kernel, u, u_cf)
            assert abs(-logp - problem.exact_objective(z)) <= 1e-10
            checked += 1

    def test_dimension_mismatch(self):
        scm, _, _, u, _ = two_node_fixture()
        with pytest.raises(ValueError):
            log_density_unnormalized(BacktrackingKernel(scm), u, np.array([1.0, 2.0, 3.0]))


class TestMapArgmaxGrid:
    def test_trivial_target_returns_mode(self):
        scm, clf, x, u, _ = two_node_fixture()
        current = clf.classify(x)
        out = map_argmax_grid(BacktrackingKernel(scm, lam=1.0), u, current, clf,
                              bounds=(-2.0, 2.0), resolution=0.01)
        np.testing.assert_array_equal(out, u)

    def test_matches_constrained_grid_minimizer_exactly(self):
        for seed in (301, 302, 304, 316, 323):
            scm, clf, x, u, target = two_node_fixture(seed)
            u_map = map_argmax_grid(BacktrackingKernel(scm, lam=1.0), u, target, clf,
                                    bounds=(-5.0, 5.0), resolution=0.02)
            problem = latent_problem(scm, clf, x, target, lam=1.0)
            u_grid, _ = grid_oracle(problem, bounds=(-5.0, 5.0), resolution=0.02)
            assert np.array_equal(u_map, u_grid)

    def test_lam_zero_matches_feature_distance_minimizer(self):
        scm, clf, x, u, target = two_node_fixture(302)
        u_map = map_argmax_grid(BacktrackingKernel(scm, lam=0.0), u, target, clf,
                                bounds=(-5.0, 5.0), resolution=0.02)
        problem = latent_problem(scm, clf, x, target, lam=0.0)
        u_grid, _ = grid_oracle(problem, bounds=(-5.0, 5.0), resolution=0.02)
        assert np.array_equal(u_map, u_grid)

    def test_near_continuous_blended_solution(self):
        scm, clf, x, u, target = two_node_fixture(301)
        u_map = map_argmax_grid(BacktrackingKernel(scm, lam=1.0), u, target, clf,
                                bounds=(-5.0, 5.0), resolution=0.01)
        cf = explain_blended(scm, clf, Query(x_factual=x, target=target, lam=1.0))
        assert np.max(np.abs(cf.u_cf - u_map) / scm.feature_sigma()) <= 0.01 + 1e-9

    def test_empty_feasible_set(self):
        scm, clf, x, u, target = two_node_fixture(303)
        hopeless = LogisticModel.from_dict(
            {"weights": [0.0, 0.0], "bias": -1.0, "threshold": 0.5, "labels": ["a", "b"]}
        )
        with pytest.raises(EmptyFeasibleSetError):
            map_argmax_grid(BacktrackingKernel(scm, lam=1.0), u, 1, hopeless,
                            bounds=(-1.0, 1.0), resolution=0.5)

    def test_guard_against_high_dimension(self):
        scm, clf, x, target = desk_instance(700, n_nodes=3)
        u = abduct(scm, x)
        with pytest.raises(ValueError):
            map_argmax_grid(BacktrackingKernel(scm, lam=1.0), u, target, clf,
                            bounds=(-1.0, 1.0), resolution=0.5)


class TestDensitySurface:
    def test_csv_dump_shape(self):
        scm, clf, x, u, target = two_node_fixture(304)
        csv = density_surface_csv(BacktrackingKernel(scm, lam=1.0), u, target, clf,
                                  bounds=(-1.0, 1.0), resolution=0.5)
        header, *rows = csv.strip().splitlines()
        assert header == "u1,u2,logp,feasible"
        assert len(rows) == 25  # 5 x 5 grid
        assert {r.rsplit(",", 1)[1] for r in rows} <= {"0", "1"}
