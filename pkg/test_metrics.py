#!/usr/bin/env python3
"""
Tests for skewness diagnostics and Monte Carlo ground-truth evaluation
"""

import json
import sys

import numpy as np
import pytest

sys.path.append('.')

from egopo.metrics.evaluation import chosen_outcomes, true_policy_value, true_regret
from egopo.metrics.skewness import skewness, skewness_identity_check, skewness_report
from egopo.models.policy import LeafNode, SplitNode, TreePolicy
from egopo.models.weights import MixtureWeights
from egopo.simulation.simulator import SourceGenParams, analytic_policy_value, sample_mixture, sample_params
from egopo.solvers.tree_oracle import WeightedExamples, solve_opo

UNIFORM_3 = MixtureWeights.uniform(3)


# Skewness

def test_skewness_of_n_bar_is_one():
    assert skewness(UNIFORM_3, UNIFORM_3) == pytest.approx(1.0, abs=1e-15)
    n_bar = MixtureWeights((0.5, 0.25, 0.25))
    assert skewness(n_bar, n_bar) == 1.0


def test_single_source_target_against_uniform():
    assert skewness(MixtureWeights((1.0, 0.0, 0.0)), UNIFORM_3) == pytest.approx(3.0, abs=1e-12)
    assert skewness(MixtureWeights((0.5, 0.5, 0.0)), UNIFORM_3) == pytest.approx(1.5, abs=1e-12)


def test_both_formulas_agree():
    rng = np.random.default_rng(0)
    for _ in range(1000):
        size = int(rng.integers(2, 6))
        lam = MixtureWeights.from_iterable(rng.dirichlet(np.ones(size)))
        n_bar = MixtureWeights.from_counts(rng.integers(10, 101, size=size).tolist())
        direct, identity = skewness_identity_check(lam, n_bar)
        assert direct == pytest.approx(identity, abs=1e-12)
        assert direct > 1.0


def test_skewness_needs_positive_n_bar():
    with pytest.raises(ValueError):
        skewness(MixtureWeights((0.5, 0.5)), MixtureWeights((1.0, 0.0)))
    with pytest.raises(ValueError):
        skewness(MixtureWeights((1.0,)), MixtureWeights((0.5, 0.5)))


def test_report_takes_the_maximum():
    points = [UNIFORM_3, MixtureWeights((0.5, 0.5, 0.0)), MixtureWeights((1.0, 0.0, 0.0))]
    report = skewness_report(points, UNIFORM_3)
    assert report.mixture_agnostic == pytest.approx(3.0, abs=1e-12)
    assert all(value >= 1.0 - 1e-12 for _, value in report.per_lambda)
    assert json.loads(report.to_json())['mixture_agnostic'] == report.mixture_agnostic


def test_refining_the_cover_never_lowers_the_maximum():
    rng = np.random.default_rng(1)
    n_bar = MixtureWeights((0.2, 0.3, 0.5))
    points = [MixtureWeights.from_iterable(p) for p in rng.dirichlet(np.ones(3), size=10)]
    coarse = skewness_report(points[:4], n_bar).mixture_agnostic
    assert skewness_report(points, n_bar).mixture_agnostic >= coarse


# Ground truth

def test_constant_policy_is_worth_zero_on_centred_contexts():
    params = sample_params(num_sources=3, seed=2)
    for action in (0, 1):
        estimate = true_policy_value(TreePolicy.leaf(action), params, MixtureWeights((0.9, 0.05, 0.05)),
                                     mc_samples=20_000, seed=action)
        assert abs(estimate.value) <= 3 * estimate.se


def test_monte_carlo_matches_analytic_value():
    params = sample_params(num_sources=2, q=2, seed=3)
    policy = TreePolicy(1, (SplitNode(0, 0.2), LeafNode(1), LeafNode(0)))
    weights = MixtureWeights((0.3, 0.7))
    estimate = true_policy_value(policy, params, weights, mc_samples=50_000, seed=9)
    assert abs(estimate.value - analytic_policy_value(policy, params, weights)) <= 3 * estimate.se


def test_degenerate_weights_ignore_other_sources():
    params = sample_params(num_sources=2, q=2, seed=4)
    policy = TreePolicy(1, (SplitNode(2, 0.0), LeafNode(0), LeafNode(1)))
    mixed = true_policy_value(policy, params, MixtureWeights((1.0, 0.0)), mc_samples=5000, seed=1)
    alone = true_policy_value(policy, params[:1], MixtureWeights((1.0,)), mc_samples=5000, seed=1)
    assert abs(mixed.value - alone.value) <= 3 * (mixed.se + alone.se)


def test_standard_error_shrinks_like_root_n():
    params = sample_params(num_sources=2, q=2, seed=5)
    policy = TreePolicy(1, (SplitNode(1, 0.0), LeafNode(1), LeafNode(0)))
    weights = MixtureWeights((0.5, 0.5))
    for seed in range(20):
        small = true_policy_value(policy, params, weights, mc_samples=2000, seed=seed)
        large = true_policy_value(policy, params, weights, mc_samples=4000, seed=seed)
        assert 1.2 <= small.se / large.se <= 1.7


def test_chunking_does_not_change_the_draws():
    params = sample_params(num_sources=2, q=1, seed=6)
    policies = [TreePolicy.leaf(0), TreePolicy.leaf(1)]
    single = chosen_outcomes(policies, params, MixtureWeights((0.5, 0.5)), 25_000, seed=3, max_workers=1)
    pooled = chosen_outcomes(policies, params, MixtureWeights((0.5, 0.5)), 25_000, seed=3, max_workers=4)
    for a, b in zip(single, pooled):
        assert np.array_equal(a, b)


def test_too_few_samples():
    params = sample_params(num_sources=1, q=1, seed=0)
    with pytest.raises(ValueError):
        true_policy_value(TreePolicy.leaf(0), params, MixtureWeights((1.0,)), mc_samples=999)


def test_reference_has_no_regret_against_itself():
    params = sample_params(num_sources=2, q=2, seed=7)
    policy = TreePolicy(1, (SplitNode(0, 0.1), LeafNode(0), LeafNode(1)))
    estimate = true_regret(policy, params, MixtureWeights((0.5, 0.5)), policy, mc_samples=2000, seed=0)
    assert estimate.value == 0.0


def test_trained_reference_beats_a_constant_policy():
    params = sample_params(num_sources=2, q=2, seed=8)
    weights = MixtureWeights((0.9, 0.1))
    sample = sample_mixture(params, weights, 2000, np.random.default_rng(0))
    reference = solve_opo(WeightedExamples(sample.contexts, sample.true_mu, np.full(2000, 1 / 2000)), 2).policy
    estimate = true_regret(TreePolicy.leaf(0), params, weights, reference, mc_samples=20_000, seed=1)
    assert estimate.value >= -3 * estimate.se


def test_regret_ignores_a_reward_offset():
    theta = (1.0, -2.0)
    plain = [SourceGenParams(theta, q=2, d=2)]
    shifted = [SourceGenParams(theta, q=2, d=2, offset=5.0)]
    policy = TreePolicy(1, (SplitNode(0, 0.0), LeafNode(1), LeafNode(0)))
    reference = TreePolicy.leaf(0)
    weights = MixtureWeights((1.0,))
    a = true_regret(policy, plain, weights, reference, mc_samples=5000, seed=2)
    b = true_regret(policy, shifted, weights, reference, mc_samples=5000, seed=2)
    assert a.value == pytest.approx(b.value, abs=1e-12)


def main():
    """Run the metrics tests as a script"""
    print("🔍 Testing metrics...")
    sys.exit(pytest.main([__file__, '-q']))


if __name__ == "__main__":
    main()
