import math

import numpy as np
import pytest

from popnets.data import GenerationRegime, generate_population
from popnets.engine import Hyperparameters
from popnets.graphs import Network, enumerate_parent_space
from popnets.likelihood import ScoreTable, build_regression_view
from popnets.oracle import brute_force_marginals, dense_marginal_likelihood


class TestBruteForce:
    def test_four_term_posterior_by_hand(self):
        # P=1, c=1, J=1: two parent sets ({} and {1}), four joint assignments
        space = enumerate_parent_space(1, 1)
        assert space.size == 2
        v = [0.4, -0.3]
        scores = ScoreTable(
            log_scores=np.array([[v]]),
            c=1,
            space_hash=space.canonical_hash,
            individual_ids=("a",),
        )
        prior = Network.from_parent_lists(1, [[1]])
        eta, lam = 0.7, 1.3
        hp = Hyperparameters(eta=eta, lam=lam, c=1)

        z = 1.0 + math.exp(-lam)  # coupling normalizer, same for both anchors
        d0 = [1, 0]  # distances of {} and {1} to the prior set {1}
        mass = {
            (t, s): math.exp(-eta * d0[t]) * math.exp(v[s] - lam * (s != t)) / z
            for t in (0, 1)
            for s in (0, 1)
        }
        total = sum(mass.values())
        latent_expected = (mass[(1, 0)] + mass[(1, 1)]) / total
        individual_expected = (mass[(0, 1)] + mass[(1, 1)]) / total

        latent, individual = brute_force_marginals(scores, space, hp, prior, 1)
        assert latent[0] == pytest.approx(latent_expected, abs=1e-14)
        assert individual[0, 0] == pytest.approx(individual_expected, abs=1e-14)

    def test_uniform_scores_flat_prior_gives_membership_fraction(self):
        space = enumerate_parent_space(3, 2)
        scores = ScoreTable(
            log_scores=np.zeros((2, 3, space.size)),
            c=2,
            space_hash=space.canonical_hash,
            individual_ids=("a", "b"),
        )
        prior = Network.from_parent_lists(3, [[1], [], [2, 3]])
        hp = Hyperparameters(eta=0.0, lam=0.0, c=2)
        for target in (1, 2, 3):
            latent, individual = brute_force_marginals(scores, space, hp, prior, target)
            expected = space.membership.mean(axis=0)
            np.testing.assert_allclose(latent, expected, atol=1e-12)
            np.testing.assert_allclose(individual, np.tile(expected, (2, 1)), atol=1e-12)


@pytest.fixture(scope="module")
def individual():
    regime = GenerationRegime(
        J=1, n=8, E=1, P=3, sigma=0.3, rho=1.0, h_eta=0.8, h_lambda=0.9,
        interventions=False, seed=2,
    )
    data, _ = generate_population(regime)
    return data.individuals[0]


class TestDenseMarginalLikelihood:
    def test_empty_model_matches_phi_free_expression(self, individual):
        view = build_regression_view(individual, 1, ())
        y = view.response
        X0 = view.common_design
        proj = X0 @ np.linalg.inv(X0.T @ X0) @ X0.T
        q = float(y @ (np.eye(len(y)) - proj) @ y)
        expected = -0.5 * (len(y) - 2) * math.log(q)
        for phi in (0.5, 4.0):
            assert dense_marginal_likelihood(view, phi) == pytest.approx(expected, abs=1e-10)

    def test_duplicated_column_matches_single(self, individual):
        from popnets.likelihood import RegressionView

        view = build_regression_view(individual, 2, (1,))
        doubled = RegressionView(
            view.response,
            view.common_design,
            np.column_stack([view.model_design, view.model_design]),
        )
        assert dense_marginal_likelihood(doubled, 1.5) == pytest.approx(
            dense_marginal_likelihood(view, 1.5), abs=1e-10
        )
