import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from posteriorlab import (
    FiniteDist,
    TransitionMatrix,
    hellinger,
    hellinger_transform,
    joint_two_step,
    kl_divergence,
    stationary_distribution,
    total_variation,
)
from posteriorlab.errors import DimensionError, DomainError, ErgodicityError

P_HALF = FiniteDist([0.5, 0.5])
P_SKEW = FiniteDist([0.9, 0.1])


def random_dist(rng, n):
    w = rng.dirichlet(np.ones(n))
    return FiniteDist(w)


dist_pairs = st.integers(2, 8).flatmap(
    lambda n: st.tuples(
        st.lists(st.floats(0.01, 1.0), min_size=n, max_size=n),
        st.lists(st.floats(0.01, 1.0), min_size=n, max_size=n),
    )
)


def _normalize(vals):
    w = np.asarray(vals)
    return FiniteDist(w / w.sum())


class TestHellinger:
    def test_identity(self):
        assert hellinger(P_HALF, P_HALF) == 0.0

    def test_disjoint_supports_saturate(self):
        assert hellinger(FiniteDist([1, 0]), FiniteDist([0, 1])) == pytest.approx(
            math.sqrt(2), abs=1e-15
        )

    def test_direct_formula_oracle(self):
        # sum of (sqrt(p) - sqrt(q))^2 accumulated independently
        expected = math.sqrt(
            (math.sqrt(0.5) - math.sqrt(0.9)) ** 2 + (math.sqrt(0.5) - math.sqrt(0.1)) ** 2
        )
        assert hellinger(P_HALF, P_SKEW) == pytest.approx(expected, abs=1e-15)

    def test_dimension_error(self):
        with pytest.raises(DimensionError):
            hellinger(P_HALF, FiniteDist([1 / 3, 1 / 3, 1 / 3]))


class TestTotalVariation:
    def test_identity(self):
        assert total_variation(P_SKEW, P_SKEW) == 0.0

    def test_disjoint(self):
        assert total_variation(FiniteDist([1, 0]), FiniteDist([0, 1])) == 1.0

    def test_half_l1_oracle(self):
        assert total_variation(P_HALF, P_SKEW) == pytest.approx(0.4, abs=1e-15)


class TestKL:
    def test_identity(self):
        assert kl_divergence(P_HALF, P_HALF) == 0.0

    def test_support_violation_is_infinite(self):
        assert kl_divergence(P_HALF, FiniteDist([1, 0])) == math.inf

    def test_direct_summation_oracle(self):
        expected = 0.5 * math.log(0.5 / 0.25) + 0.5 * math.log(0.5 / 0.75)
        assert kl_divergence(P_HALF, FiniteDist([0.25, 0.75])) == pytest.approx(
            expected, abs=1e-15
        )


class TestHellingerTransform:
    def test_identity_is_one(self):
        for a in (0.0, 0.3, 0.5, 1.0):
            assert hellinger_transform(P_HALF, P_HALF, a) == pytest.approx(1.0, abs=1e-15)

    def test_disjoint_supports(self):
        assert hellinger_transform(FiniteDist([1, 0]), FiniteDist([0, 1]), 0.5) == 0.0

    def test_endpoint_masses(self):
        p = FiniteDist([0.5, 0.5, 0.0])
        q = FiniteDist([0.2, 0.3, 0.5])
        # alpha = 0 returns Q(p > 0), alpha = 1 returns P(q > 0)
        assert hellinger_transform(p, q, 0.0) == pytest.approx(0.5, abs=1e-15)
        assert hellinger_transform(p, q, 1.0) == pytest.approx(1.0, abs=1e-15)

    def test_grid_minimum_matches_exhaustive_oracle(self):
        grid = np.round(np.linspace(0, 1, 101), 2)
        values = [hellinger_transform(P_HALF, P_SKEW, a) for a in grid]
        i = int(np.argmin(values))
        # independent exhaustive evaluation of the same grid
        brute = min(
            math.fsum(
                pk**a * qk ** (1 - a)
                for pk, qk in zip(P_HALF.weights, P_SKEW.weights)
            )
            for a in grid[1:-1]
        )
        assert values[i] == pytest.approx(brute, abs=1e-12)

    def test_alpha_out_of_range(self):
        with pytest.raises(DomainError):
            hellinger_transform(P_HALF, P_SKEW, 1.5)


@settings(max_examples=200, deadline=None)
@given(dist_pairs)
def test_tv_below_hellinger_and_half_alpha_identity(pair):
    p, q = _normalize(pair[0]), _normalize(pair[1])
    h = hellinger(p, q)
    assert total_variation(p, q) <= h + 1e-10
    psi = hellinger_transform(p, q, 0.5)
    assert h**2 == pytest.approx(2.0 * (1.0 - psi), abs=1e-10)


@settings(max_examples=50, deadline=None)
@given(dist_pairs)
def test_transform_log_convex_in_alpha(pair):
    p, q = _normalize(pair[0]), _normalize(pair[1])
    grid = np.linspace(0.05, 0.95, 19)
    logs = np.log([hellinger_transform(p, q, a) for a in grid])
    second = logs[:-2] - 2 * logs[1:-1] + logs[2:]
    assert np.all(second >= -1e-9)


class TestStationary:
    def test_doubly_stochastic_is_uniform(self):
        t = TransitionMatrix([[0.5, 0.3, 0.2], [0.2, 0.5, 0.3], [0.3, 0.2, 0.5]])
        pi = stationary_distribution(t)
        assert np.allclose(pi.weights, 1 / 3, atol=1e-12)

    def test_two_state_hand_solution(self):
        t = TransitionMatrix([[0.9, 0.1], [0.2, 0.8]])
        pi = stationary_distribution(t)
        # balance equation 0.1 pi_0 = 0.2 pi_1
        assert pi.weights == pytest.approx([2 / 3, 1 / 3], abs=1e-12)

    def test_identity_matrix_not_ergodic(self):
        with pytest.raises(ErgodicityError):
            stationary_distribution(TransitionMatrix(np.eye(2)))

    def test_residual_on_random_ergodic_matrices(self):
        rng = np.random.default_rng(20240817)
        for _ in range(1000):
            n = int(rng.integers(2, 11))
            t = TransitionMatrix(rng.dirichlet(np.ones(n) * 2.0, size=n) + 0.0)
            pi = stationary_distribution(t)
            residual = np.abs(pi.weights @ t.matrix - pi.weights).sum()
            assert residual <= 1e-12


class TestJointTwoStep:
    def test_doubly_stochastic_uniform_rows(self):
        t = TransitionMatrix([[0.5, 0.5], [0.5, 0.5]])
        assert np.allclose(joint_two_step(t), 0.25)

    def test_hand_multiplied_entry(self):
        t = TransitionMatrix([[0.9, 0.1], [0.2, 0.8]])
        j = joint_two_step(t)
        assert j[0, 0] == pytest.approx(0.9 * 2 / 3, abs=1e-12)
        assert j.sum() == pytest.approx(1.0, abs=1e-12)

    def test_marginals_match_pi(self):
        rng = np.random.default_rng(5)
        for _ in range(50):
            t = TransitionMatrix(rng.dirichlet(np.ones(4), size=4))
            pi = stationary_distribution(t).weights
            j = joint_two_step(t)
            assert np.abs(j.sum(axis=0) - pi).max() < 1e-10
            assert np.abs(j.sum(axis=1) - pi).max() < 1e-10


def test_finite_dist_validation():
    with pytest.raises(DomainError):
        FiniteDist([0.5, 0.6])
    with pytest.raises(DomainError):
        FiniteDist([-0.1, 1.1])
    with pytest.raises(DimensionError):
        FiniteDist([])
