#!/usr/bin/env python3
"""
Tests for the EG-OPO minimax solver
"""

import math
import sys

import numpy as np
import pytest

sys.path.append('.')

from egopo.estimators.aipw import ScoreMatrix
from egopo.models.policy import LeafNode, SplitNode, TreePolicy
from egopo.models.weights import MixtureWeights
from egopo.solvers.egopo import (EgopoConfig, average_iterate_regret, auto_iterations, best_response,
                                 eg_update, empirical_mixture_regret, empirical_mixture_value,
                                 enumerated_minimax_regret, estimate_b_hat, mixture_examples, mixture_values,
                                 per_lambda_max_values, run_egopo, suboptimality_bound, worst_case_regret)
from egopo.solvers.simplex_cover import CoverSet, WeightSetSpec, build_cover
from egopo.solvers.tree_oracle import solve_opo
from egopo.utils.rng import SeededRNG


def unit_scores():
    return ScoreMatrix(('s1',), (np.array([[0.0], [1.0]]),), (np.array([[1.0, 0.0], [0.0, 2.0]]),), 'oracle')


def random_scores(rng, sizes, p=2, d=2, integer_contexts=False):
    contexts, scores = [], []
    for n_s in sizes:
        if integer_contexts:
            contexts.append(rng.integers(0, 4, size=(n_s, p)).astype(float))
        else:
            contexts.append(rng.uniform(-1, 1, size=(n_s, p)))
        scores.append(rng.normal(size=(n_s, d)))
    return ScoreMatrix(tuple(f"s{s + 1}" for s in range(len(sizes))), tuple(contexts), tuple(scores), 'cross_fitted')


def random_tree(rng, p, depth=2, d=2):
    internal = 2 ** depth - 1
    splits = [SplitNode(int(rng.integers(p)), float(rng.uniform(-1, 1))) for _ in range(internal)]
    leaves = [LeafNode(int(rng.integers(d))) for _ in range(internal + 1)]
    return TreePolicy(depth, tuple(splits + leaves))


def finite_cover(points):
    return build_cover(WeightSetSpec(kind='finite_list', vertices=[list(p) for p in points]), 0.1)


# Values and regrets

def test_unit_case_values():
    scores = unit_scores()
    lam = MixtureWeights((1.0,))
    assert empirical_mixture_value(scores, lam, TreePolicy.leaf(0)) == 0.5
    maxima = per_lambda_max_values(scores, CoverSet((lam,), 0.1), depth=1)
    assert maxima[0] == 1.5
    assert empirical_mixture_regret(scores, lam, TreePolicy.leaf(0), maxima[0]) == 1.0


def test_degenerate_weights_give_source_average():
    rng = np.random.default_rng(0)
    scores = random_scores(rng, [4, 6])
    policy = random_tree(rng, 2)
    chosen = scores.scores[1][np.arange(6), policy.evaluate_batch(scores.contexts[1])]
    value = empirical_mixture_value(scores, MixtureWeights.vertex(1, 2), policy)
    assert value == pytest.approx(chosen.mean(), abs=1e-12)


def test_value_is_linear_in_the_weights():
    rng = np.random.default_rng(1)
    scores = random_scores(rng, [5, 7, 3])
    first, second = MixtureWeights((0.2, 0.3, 0.5)), MixtureWeights((0.6, 0.0, 0.4))
    middle = MixtureWeights(tuple(0.5 * a + 0.5 * b for a, b in zip(first.weights, second.weights)))
    for _ in range(10):
        policy = random_tree(rng, 2)
        expected = 0.5 * empirical_mixture_value(scores, first, policy) \
            + 0.5 * empirical_mixture_value(scores, second, policy)
        assert empirical_mixture_value(scores, middle, policy) == pytest.approx(expected, abs=1e-12)


def test_constant_scores_have_no_regret():
    sizes = [3, 5]
    scores = ScoreMatrix(('a', 'b'), tuple(np.random.default_rng(2).normal(size=(n, 1)) for n in sizes),
                         tuple(np.full((n, 2), 2.0) for n in sizes), 'oracle')
    cover = build_cover(WeightSetSpec(kind='full_simplex', num_sources=2), 0.5)
    maxima = per_lambda_max_values(scores, cover, depth=1)
    assert np.allclose(maxima, 2.0, atol=1e-12)
    for point, maximum in zip(cover.points, maxima):
        assert empirical_mixture_regret(scores, point, TreePolicy.leaf(1), maximum) == pytest.approx(0.0, abs=1e-12)


def test_maxima_dominate_random_policies():
    rng = np.random.default_rng(3)
    scores = random_scores(rng, [12, 9])
    cover = build_cover(WeightSetSpec(kind='full_simplex', num_sources=2), 0.5)
    maxima = per_lambda_max_values(scores, cover, depth=2)
    for _ in range(50):
        values = mixture_values(scores, cover, random_tree(rng, 2))
        assert np.all(values <= maxima + 1e-12)


def test_oracle_argmax_has_zero_regret():
    rng = np.random.default_rng(4)
    scores = random_scores(rng, [8, 8])
    lam = MixtureWeights((0.3, 0.7))
    policy = solve_opo(mixture_examples(scores, lam.as_array()), 2).policy
    maximum = per_lambda_max_values(scores, CoverSet((lam,), 0.1), depth=2)[0]
    assert empirical_mixture_regret(scores, lam, policy, maximum) == 0.0


# Best response

def test_best_response_single_point_is_one_solve():
    rng = np.random.default_rng(5)
    scores = random_scores(rng, [10, 6])
    lam = MixtureWeights((0.25, 0.75))
    expected = solve_opo(mixture_examples(scores, lam.as_array()), 2).policy
    assert best_response(scores, CoverSet((lam,), 0.1), np.ones(1), 2) == expected


def test_best_response_collapses_the_weights():
    rng = np.random.default_rng(6)
    scores = random_scores(rng, [10, 6])
    cover = finite_cover([(1.0, 0.0), (0.0, 1.0)])
    expected = solve_opo(mixture_examples(scores, np.array([0.5, 0.5])), 2).policy
    assert best_response(scores, cover, np.array([0.5, 0.5]), 2) == expected


def test_best_response_beats_random_policies():
    rng = np.random.default_rng(7)
    scores = random_scores(rng, [9, 11, 5])
    cover = build_cover(WeightSetSpec(kind='full_simplex', num_sources=3), 0.5)
    rho = rng.dirichlet(np.ones(len(cover)))
    policy = best_response(scores, cover, rho, 2)
    best = rho @ mixture_values(scores, cover, policy)
    for _ in range(50):
        assert best >= rho @ mixture_values(scores, cover, random_tree(rng, 2)) - 1e-12


def test_best_response_rejects_bad_rho():
    scores = unit_scores()
    cover = CoverSet((MixtureWeights((1.0,)),), 0.1)
    with pytest.raises(ValueError):
        best_response(scores, cover, np.array([0.5]), 1)
    with pytest.raises(ValueError):
        best_response(scores, cover, np.array([0.5, 0.5]), 1)


# EG dynamics

def test_eg_update_arithmetic():
    updated = eg_update(np.array([0.5, 0.5]), np.array([math.log(2.0), 0.0]), 1.0)
    assert updated == pytest.approx([2 / 3, 1 / 3], abs=1e-15)


def test_single_point_cover_short_circuits():
    rng = np.random.default_rng(8)
    scores = random_scores(rng, [7, 5])
    lam = MixtureWeights((0.4, 0.6))
    result = run_egopo(scores, CoverSet((lam,), 0.1), EgopoConfig(T=12, depth=1))
    assert result.policy == solve_opo(mixture_examples(scores, lam.as_array()), 1).policy
    assert result.iterations == 12
    assert np.array_equal(result.rho_trace, np.ones((12, 1)))
    assert result.eta == 0.0


def test_traces_respect_the_simplex_and_gradient_bounds():
    rng = np.random.default_rng(9)
    scores = random_scores(rng, [15, 10, 12])
    cover = build_cover(WeightSetSpec(kind='full_simplex', num_sources=3), 0.5)
    result = run_egopo(scores, cover, EgopoConfig(T=30, depth=2))

    assert result.rho_trace.shape == (30, len(cover))
    assert np.all(result.rho_trace > 0)
    assert np.allclose(result.rho_trace.sum(axis=1), 1.0, atol=1e-9)
    assert np.all(result.gradient_trace >= 0)
    assert np.all(result.gradient_trace <= result.b_hat)
    assert result.b_hat == 2 * scores.gamma_max
    assert result.eta == pytest.approx(math.sqrt(math.log(len(cover)) / (result.b_hat ** 2 * 30)))
    for policy in result.iterates:
        assert np.all(mixture_values(scores, cover, policy) <= result.per_lambda_max + 1e-12)
    assert result.policy == result.iterates[-1]
    assert list(result.trace_frame().columns) == ['t', 'lambda_index', 'rho', 'gradient']


def test_symmetric_sources_balance_the_adversary():
    rng = np.random.default_rng(10)
    contexts = rng.uniform(-1, 1, size=(10, 1))
    first = rng.integers(-3, 4, size=(10, 2)).astype(float)
    scores = ScoreMatrix(('s1', 's2'), (contexts, contexts), (first, first[:, ::-1]), 'oracle')
    cover = finite_cover([(1.0, 0.0), (0.0, 1.0)])
    result = run_egopo(scores, cover, EgopoConfig(T=200, depth=1))
    assert np.abs(result.rho_trace[-1] - 0.5).sum() <= 0.1


def test_uniform_average_bound_on_tiny_instances():
    rng = np.random.default_rng(11)
    for _ in range(20):
        num_sources = int(rng.integers(2, 4))
        scores = random_scores(rng, rng.integers(2, 6, size=num_sources).tolist(),
                               p=int(rng.integers(1, 3)), integer_contexts=True)
        points = rng.dirichlet(np.ones(num_sources), size=int(rng.integers(2, 6)))
        cover = finite_cover(points)
        depth = int(rng.integers(1, 3))
        iterations = int(rng.integers(10, 41))
        result = run_egopo(scores, cover, EgopoConfig(T=iterations, depth=depth, iterate_mode='uniform_average'))

        minimax = enumerated_minimax_regret(scores, cover, depth)
        bound = minimax + suboptimality_bound(result.b_hat, len(cover), iterations)
        averaged = average_iterate_regret(scores, cover, result.iterates, result.per_lambda_max)
        assert np.all(averaged <= bound + 1e-9)


def test_common_optimum_is_found():
    contexts = np.array([[-1.0], [-0.5], [0.5], [1.0]])
    scores = np.array([[2.0, 0.0], [1.0, 0.0], [0.0, 1.0], [0.0, 3.0]])
    matrix = ScoreMatrix(('a', 'b'), (contexts, contexts), (scores, 2.0 * scores), 'oracle')
    cover = build_cover(WeightSetSpec(kind='full_simplex', num_sources=2), 0.25)
    result = run_egopo(matrix, cover, EgopoConfig(T=20, depth=1, iterate_mode='best_worst_case'))
    pooled = solve_opo(mixture_examples(matrix, matrix.n_bar.as_array()), 1).policy
    robust = worst_case_regret(matrix, cover, result.policy, result.per_lambda_max)
    assert robust == pytest.approx(0.0, abs=1e-12)
    assert robust <= worst_case_regret(matrix, cover, pooled, result.per_lambda_max) + 1e-9


def test_best_worst_case_iterate_is_the_minimum():
    rng = np.random.default_rng(12)
    scores = random_scores(rng, [10, 10])
    cover = build_cover(WeightSetSpec(kind='full_simplex', num_sources=2), 0.25)
    result = run_egopo(scores, cover, EgopoConfig(T=25, depth=1, iterate_mode='best_worst_case'))
    chosen = worst_case_regret(scores, cover, result.policy, result.per_lambda_max)
    assert chosen == pytest.approx(result.worst_case_regrets.min(), abs=1e-12)


def test_uniform_average_returns_the_most_played_iterate():
    rng = np.random.default_rng(13)
    scores = random_scores(rng, [10, 10])
    cover = build_cover(WeightSetSpec(kind='full_simplex', num_sources=2), 0.25)
    result = run_egopo(scores, cover, EgopoConfig(T=25, depth=1, iterate_mode='uniform_average'))
    counts = {policy: result.iterates.count(policy) for policy in result.iterates}
    assert counts[result.policy] == max(counts.values())


def test_sampled_iterate_follows_the_seed():
    rng = np.random.default_rng(13)
    scores = random_scores(rng, [10, 10])
    cover = build_cover(WeightSetSpec(kind='full_simplex', num_sources=2), 0.25)
    results = [run_egopo(scores, cover, EgopoConfig(T=25, depth=1, iterate_mode='sampled', seed=seed,
                                                    max_workers=1))
               for seed in (3, 3, 4)]
    assert results[0].policy == results[1].policy
    for seed, result in zip((3, 3, 4), results):
        index = int(SeededRNG(seed).stream('policies').integers(25))
        assert result.policy == result.iterates[index]
    assert results[0].iterates == results[2].iterates


# Configuration

def test_b_hat_modes():
    rng = np.random.default_rng(14)
    scores = random_scores(rng, [8, 8])
    cover = build_cover(WeightSetSpec(kind='full_simplex', num_sources=2), 0.5)
    maxima = per_lambda_max_values(scores, cover, depth=1)
    auto = estimate_b_hat(scores, cover, EgopoConfig(depth=1), maxima)
    explicit = estimate_b_hat(scores, cover, EgopoConfig(depth=1, b_hat_mode='explicit', b_hat=3.5), maxima)
    oracle = estimate_b_hat(scores, cover, EgopoConfig(depth=1, b_hat_mode='oracle'), maxima)
    assert auto == 2 * scores.gamma_max
    assert explicit == 3.5
    assert 0.0 <= oracle <= auto + 1e-12


def test_config_validation():
    with pytest.raises(ValueError):
        EgopoConfig(b_hat_mode='explicit')
    with pytest.raises(ValueError):
        EgopoConfig(T=0)
    assert EgopoConfig.model_validate({'T': 7}).iterations == 7


def test_auto_iterations_is_capped():
    rng = np.random.default_rng(15)
    scores = random_scores(rng, [50, 50])
    cover = finite_cover([(0.5, 0.5)])
    assert auto_iterations(scores, cover, alpha=0.0, cap=1000) == 100
    assert auto_iterations(scores, cover, alpha=0.05, cap=20) == 20


def main():
    """Run the EG-OPO tests as a script"""
    print("🔍 Testing EG-OPO solver...")
    sys.exit(pytest.main([__file__, '-q']))


if __name__ == "__main__":
    main()
