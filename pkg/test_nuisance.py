#!/usr/bin/env python3
"""
Tests for cross-fitted nuisance estimation
"""

import sys

import numpy as np
import pytest

sys.path.append('.')

from egopo.errors import NuisanceError
from egopo.estimators.nuisance import (ConstantPropensityModel, FoldAssignment, FrequencyPropensityModel,
                                       InversePropensityModel, NuisanceConfig, ResponseModel, assign_dataset_folds,
                                       assign_folds, fit_nuisance, nuisance_mse, predict_mu, predict_w)
from egopo.models.dataset import ObservationalDataset, SourceData
from egopo.simulation.simulator import sample_params, simulate_dataset


def small_dataset(n=20, rewards=None, seed=0):
    rng = np.random.default_rng(seed)
    contexts = rng.uniform(-1, 1, size=(n, 2))
    actions = np.arange(n) % 2
    rewards = rng.normal(size=n) if rewards is None else np.asarray(rewards, dtype=float)
    source = SourceData('s1', contexts, actions, rewards, np.full(n, 0.5))
    return ObservationalDataset.from_sources([source], 2)


# Folds

def test_balanced_folds():
    assert assign_folds(4, 2, seed=0).sizes == [2, 2]
    assert assign_folds(5, 2, seed=0).sizes == [3, 2]
    assert assign_folds(7, 7, seed=3).sizes == [1] * 7


def test_infeasible_folds():
    with pytest.raises(NuisanceError):
        assign_folds(3, 4, seed=0)
    with pytest.raises(NuisanceError):
        assign_folds(3, 0, seed=0)


def test_folds_are_deterministic_and_shuffled():
    first = assign_folds(50, 5, seed=11)
    second = assign_folds(50, 5, seed=11)
    assert np.array_equal(first.fold_of, second.fold_of)
    assert not np.array_equal(first.fold_of, np.arange(50) % 5)


def test_dataset_folds_differ_across_sources():
    params = sample_params(num_sources=2, q=1, d=2, seed=0)
    dataset, _ = simulate_dataset(params, [30, 30], seed=0)
    folds = assign_dataset_folds(dataset, 3, seed=5)
    assert set(folds) == {'s1', 's2'}
    assert not np.array_equal(folds['s1'].fold_of, folds['s2'].fold_of)


# Models

def test_single_point_nearest_neighbor():
    model = ResponseModel.fit(np.array([[0.0]]), np.array([0]), np.array([1.0]), 1, knn_neighbors=1)
    assert model.predict(np.array([[0.0]]))[0, 0] == 1.0


def test_response_model_needs_every_action():
    with pytest.raises(NuisanceError):
        ResponseModel.fit(np.zeros((3, 1)), np.zeros(3, dtype=int), np.ones(3), 2)


def test_clipping_floor():
    model = InversePropensityModel(ConstantPropensityModel(np.array([0.001, 0.999])), eta_min=0.01)
    w = model.predict(np.zeros((1, 1)))[0]
    assert w[0] == pytest.approx(100.0)
    assert np.all(w >= 1.0)


def test_inverse_times_clipped_propensity_is_one():
    model = InversePropensityModel(ConstantPropensityModel(np.array([0.25, 0.75])), eta_min=0.01)
    contexts = np.zeros((3, 1))
    assert np.array_equal(model.predict(contexts) * model.clipped_propensity(contexts), np.ones((3, 2)))


def test_frequency_model_is_smoothed():
    actions = np.array([0, 0, 0, 1])
    model = FrequencyPropensityModel.fit(np.zeros((4, 1)), actions, 2, smoothing=1.0)
    assert np.allclose(model.predict(np.zeros((1, 1))), [[4 / 6, 2 / 6]])


def test_binned_frequency_model():
    contexts = np.array([[-1.0], [-0.9], [-0.8], [-0.7], [0.7], [0.8], [0.9], [1.0]])
    actions = np.array([0, 0, 0, 0, 1, 1, 1, 1])
    model = FrequencyPropensityModel.fit(contexts, actions, 2, smoothing=0.0, bins=2)
    assert np.array_equal(model.predict(np.array([[-0.95], [0.95]])), [[1.0, 0.0], [0.0, 1.0]])


# Fitting

def test_known_propensity_weights_are_inverse_logged():
    dataset = small_dataset()
    fits = fit_nuisance(dataset, config=NuisanceConfig(mode='known_propensity', folds=2))
    for fold in range(2):
        assert np.array_equal(predict_w(fits, 's1', fold, np.array([0.3, -0.2])), [2.0, 2.0])


def test_known_propensity_needs_logged_values():
    source = SourceData('s1', np.zeros((4, 1)), [0, 1, 0, 1], np.ones(4))
    dataset = ObservationalDataset.from_sources([source], 2)
    with pytest.raises(NuisanceError):
        fit_nuisance(dataset, config=NuisanceConfig(mode='known_propensity', folds=2))


def test_constant_rewards_give_constant_means():
    dataset = small_dataset(rewards=np.full(20, 3.0))
    fits = fit_nuisance(dataset, config=NuisanceConfig(folds=4))
    contexts = np.random.default_rng(1).uniform(-1, 1, size=(5, 2))
    for fold in range(4):
        assert np.array_equal(predict_mu(fits, 's1', fold, contexts), np.full((5, 2), 3.0))


def test_predict_accepts_one_context():
    fits = fit_nuisance(small_dataset(), config=NuisanceConfig(folds=2, regressor='ridge'))
    assert predict_mu(fits, 's1', 0, np.array([0.0, 0.0])).shape == (2,)
    assert np.all(predict_w(fits, 's1', 1, np.array([0.0, 0.0])) >= 1.0)


def test_unknown_source_or_fold():
    fits = fit_nuisance(small_dataset(), config=NuisanceConfig(folds=2))
    with pytest.raises(NuisanceError):
        predict_mu(fits, 'missing', 0, np.zeros(2))
    with pytest.raises(NuisanceError):
        predict_w(fits, 's1', 2, np.zeros(2))


def test_empty_action_cell_is_reported():
    source = SourceData('lonely', np.zeros((6, 1)), [0, 0, 0, 0, 0, 1], np.ones(6))
    dataset = ObservationalDataset.from_sources([source], 2)
    with pytest.raises(NuisanceError) as excinfo:
        fit_nuisance(dataset, config=NuisanceConfig(folds=2))
    message = str(excinfo.value)
    assert 'lonely' in message and 'action 1' in message


def test_single_fold_has_no_training_data():
    with pytest.raises(NuisanceError):
        fit_nuisance(small_dataset(), config=NuisanceConfig(folds=1))


def test_models_never_see_their_own_fold():
    dataset = small_dataset(n=20, seed=4)
    folds = assign_dataset_folds(dataset, 2, seed=1)
    fits = fit_nuisance(dataset, folds, NuisanceConfig(folds=2))

    source = dataset.sources[0]
    dropped = int(folds['s1'].members(0)[0])
    keep = np.setdiff1d(np.arange(source.size), [dropped])
    reduced = ObservationalDataset.from_sources([source.subset(keep)], 2)
    reduced_folds = {'s1': FoldAssignment('s1', folds['s1'].fold_of[keep], 2)}
    refit = fit_nuisance(reduced, reduced_folds, NuisanceConfig(folds=2))

    queries = np.random.default_rng(2).uniform(-1, 1, size=(10, 2))
    assert np.array_equal(predict_mu(fits, 's1', 0, queries), predict_mu(refit, 's1', 0, queries))
    assert np.array_equal(predict_w(fits, 's1', 0, queries), predict_w(refit, 's1', 0, queries))


def test_response_error_decays_with_sample_size():
    def mean_error(n_s):
        errors = []
        for seed in range(20):
            params = sample_params(num_sources=1, seed=seed)
            dataset, simulated = simulate_dataset(params, [n_s], seed=seed)
            fits = fit_nuisance(dataset, config=NuisanceConfig(seed=seed))
            errors.append(nuisance_mse(fits, dataset, {'s1': simulated[0].true_mu}))
        return np.mean(errors)

    assert mean_error(800) < mean_error(200)


def main():
    """Run the nuisance tests as a script"""
    print("🔍 Testing nuisance estimation...")
    sys.exit(pytest.main([__file__, '-q']))


if __name__ == "__main__":
    main()
