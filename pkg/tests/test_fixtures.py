"""Fixture generator and oracle tests."""

import numpy as np
import pytest

from diffcone.errors import DiffconeError
from diffcone.fixtures import (
    gen_random_dpp,
    gradient_fixtures,
    oracle_eq_qp,
    oracle_lp_vertex,
    oracle_simplex_projection,
)
from diffcone.problem import check_dpp


class TestRandomGenerator:
    def test_tiny_seed_is_valid_and_deterministic(self):
        a = gen_random_dpp(0, n_vars=1, n_params=1)
        assert check_dpp(a).valid
        b = gen_random_dpp(0, n_vars=1, n_params=1)
        assert repr(a) == repr(b)
        assert [p.name for p in a.parameters] == [p.name for p in b.parameters]

    @pytest.mark.slow
    def test_thousand_seeds_all_valid(self):
        for seed in range(1000):
            prob = gen_random_dpp(seed, n_vars=1 + seed % 3,
                                  n_params=seed % 4)
            assert check_dpp(prob).valid, f"seed {seed}"

    def test_size_limits_respected(self):
        for seed in range(50):
            prob = gen_random_dpp(seed, n_vars=4, n_params=3)
            assert len(prob.variables) <= 4
            assert len(prob.parameters) <= 3


class TestSimplexOracle:
    def test_interior_point_untouched(self):
        np.testing.assert_allclose(
            oracle_simplex_projection(np.array([0.5, 0.5])), [0.5, 0.5])

    def test_threshold_by_hand(self):
        # x = (3, 0): tau = 2 puts all mass on the first coordinate
        np.testing.assert_allclose(
            oracle_simplex_projection(np.array([3.0, 0.0])), [1.0, 0.0])

    def test_bounded_clip_and_redistribute(self):
        got = oracle_simplex_projection(np.array([3.0, 0.0]),
                                        np.array([0.6, 0.6]))
        np.testing.assert_allclose(got, [0.6, 0.4], atol=1e-10)

    def test_infeasible_bounds_raise(self):
        with pytest.raises(DiffconeError, match="infeasible"):
            oracle_simplex_projection(np.array([1.0, 1.0]),
                                      np.array([0.3, 0.3]))

    def test_feasibility_and_optimality_conditions(self, rng):
        for _ in range(50):
            x = rng.standard_normal(5)
            y = oracle_simplex_projection(x)
            assert abs(np.sum(y) - 1.0) <= 1e-9
            assert np.all(y >= -1e-12)
            # optimality: x - y constant on the support, smaller off it
            support = y > 1e-9
            taus = (x - y)[support]
            assert np.ptp(taus) <= 1e-8
            if np.any(~support):
                assert np.all(x[~support] <= taus.mean() + 1e-8)


class TestEqQpOracle:
    def test_unconstrained_identity(self):
        x, nu = oracle_eq_qp(np.eye(3), np.zeros(3), None, None)
        np.testing.assert_allclose(x, np.zeros(3))
        assert nu.size == 0

    def test_hand_solved_projection(self):
        x, nu = oracle_eq_qp(np.eye(2), np.zeros(2),
                             np.array([[1.0, 1.0]]), np.array([1.0]))
        np.testing.assert_allclose(x, [0.5, 0.5])

    def test_kkt_residual_is_tiny(self, rng):
        for _ in range(10):
            n, meq = 4, 2
            L = rng.standard_normal((n, n))
            Q = L @ L.T + np.eye(n)
            q = rng.standard_normal(n)
            A = rng.standard_normal((meq, n))
            b = rng.standard_normal(meq)
            x, nu = oracle_eq_qp(Q, q, A, b)
            assert np.linalg.norm(Q @ x + q + A.T @ nu) <= 1e-10
            assert np.linalg.norm(A @ x - b) <= 1e-10

    def test_singular_kkt_raises(self):
        with pytest.raises(DiffconeError, match="singular"):
            oracle_eq_qp(np.zeros((2, 2)), np.zeros(2),
                         np.zeros((1, 2)), np.zeros(1))


class TestLpVertexOracle:
    def test_one_dimensional_bound(self):
        got = oracle_lp_vertex(np.array([1.0]), np.array([[-1.0]]),
                               np.array([-2.0]))
        np.testing.assert_allclose(got, [2.0])

    def test_box_lp(self):
        c = np.array([1.0, -1.0])
        G = np.vstack([np.eye(2), -np.eye(2)])
        h = np.array([1.0, 1.0, 1.0, 1.0])
        got = oracle_lp_vertex(c, G, h)
        np.testing.assert_allclose(got, [-1.0, 1.0])

    def test_infeasible_raises(self):
        with pytest.raises(DiffconeError, match="feasible"):
            oracle_lp_vertex(np.array([1.0]), np.array([[1.0], [-1.0]]),
                             np.array([0.0, -1.0]))


class TestFixtureSuite:
    def test_every_fixture_has_provenance(self):
        for fx in gradient_fixtures():
            assert fx.provenance
            assert fx.output

    def test_samplers_are_deterministic_per_seed(self):
        for fx in gradient_fixtures():
            a = fx.sample(np.random.default_rng(9))
            b = fx.sample(np.random.default_rng(9))
            for k in a:
                np.testing.assert_array_equal(np.asarray(a[k]),
                                              np.asarray(b[k]))

    def test_samplers_respect_sign_flags(self):
        for fx in gradient_fixtures():
            rng = np.random.default_rng(11)
            vals = fx.sample(rng)
            for p in fx.problem.parameters:
                if p.nonneg:
                    assert np.all(np.asarray(vals[p.name]) >= 0), \
                        f"{fx.name}:{p.name}"
