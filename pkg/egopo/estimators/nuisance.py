"""
EG-OPO - Nuisance Estimation
Cross-fitted per-source response and inverse-propensity models
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Literal, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from sklearn.linear_model import Ridge
from sklearn.neighbors import KNeighborsRegressor

from ..errors import NuisanceError
from ..models.dataset import ObservationalDataset, SourceData
from ..utils.rng import SeededRNG

logger = logging.getLogger(__name__)


class NuisanceConfig(BaseModel):
    """Cross-fitting and estimator settings"""

    model_config = ConfigDict(extra='forbid', frozen=True)

    mode: Literal['estimated', 'known_propensity'] = 'estimated'
    folds: int = Field(5, ge=1)
    regressor: Literal['knn', 'ridge'] = 'knn'
    eta_min: float = Field(0.01, gt=0.0, le=1.0)
    seed: int = Field(0, ge=0)
    knn_neighbors: Optional[int] = Field(None, ge=1)
    ridge_alpha: float = Field(1.0, ge=0.0)
    smoothing: float = Field(1.0, ge=0.0)
    propensity_bins: int = Field(1, ge=1)
    propensity_bin_feature: int = Field(0, ge=0)
    max_workers: int = Field(4, ge=1)


# Folds

@dataclass(frozen=True, eq=False)
class FoldAssignment:
    """fold_of[i] is the fold of point i; every fold in [0, K) is non-empty"""

    source_id: str
    fold_of: np.ndarray
    num_folds: int

    def members(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.fold_of == fold)

    def complement(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.fold_of != fold)

    @property
    def sizes(self) -> List[int]:
        return np.bincount(self.fold_of, minlength=self.num_folds).tolist()


def assign_folds(n_s: int, num_folds: int, seed: int, source_id: str = '',
                 source_index: int = 0) -> FoldAssignment:
    """Shuffled partition of n_s points into K folds whose sizes differ by at most one"""
    if num_folds < 1:
        raise NuisanceError(f"Fold count must be positive, got {num_folds}")
    if num_folds > n_s:
        raise NuisanceError(f"Cannot split {n_s} points into {num_folds} non-empty folds")
    permutation = SeededRNG(seed).stream('folds', source_index).permutation(n_s)
    fold_of = np.empty(n_s, dtype=np.int64)
    fold_of[permutation] = np.arange(n_s) % num_folds
    fold_of.setflags(write=False)
    return FoldAssignment(source_id, fold_of, num_folds)


def assign_dataset_folds(dataset: ObservationalDataset, num_folds: int, seed: int) -> Dict[str, FoldAssignment]:
    return {
        source.source_id: assign_folds(source.size, num_folds, seed, source.source_id, index)
        for index, source in enumerate(dataset.sources)
    }


# Response models

class ResponseModel:
    """One regressor per action; predict returns an (m, d) matrix of mu(x; a)"""

    def __init__(self, regressors: List):
        self.regressors = regressors

    @classmethod
    def fit(cls, contexts: np.ndarray, actions: np.ndarray, rewards: np.ndarray, action_count: int,
            regressor: str = 'knn', knn_neighbors: Optional[int] = None,
            ridge_alpha: float = 1.0) -> ResponseModel:
        neighbors = knn_neighbors or math.ceil(math.sqrt(len(rewards)))
        regressors = []
        for action in range(action_count):
            mask = actions == action
            count = int(mask.sum())
            if count == 0:
                raise NuisanceError(f"action {action} has no observations")
            if regressor == 'knn':
                model = KNeighborsRegressor(n_neighbors=min(neighbors, count))
            elif regressor == 'ridge':
                model = Ridge(alpha=ridge_alpha)
            else:
                raise NuisanceError(f"Unknown regressor: {regressor}")
            model.fit(contexts[mask], rewards[mask])
            regressors.append(model)
        return cls(regressors)

    def predict(self, contexts: np.ndarray) -> np.ndarray:
        contexts = np.atleast_2d(np.asarray(contexts, dtype=float))
        return np.column_stack([model.predict(contexts) for model in self.regressors])


# Propensity models

class ConstantPropensityModel:
    """Same propensity vector everywhere"""

    def __init__(self, propensities: np.ndarray):
        self.propensities = np.asarray(propensities, dtype=float)

    def predict(self, contexts: np.ndarray) -> np.ndarray:
        contexts = np.atleast_2d(contexts)
        return np.tile(self.propensities, (contexts.shape[0], 1))


class FrequencyPropensityModel:
    """
    Laplace-smoothed per-action frequencies
    - optionally split into quantile bins of one context feature
    - e(x; a) = (count[bin, a] + smoothing) / (total[bin] + d * smoothing)
    """

    def __init__(self, edges: np.ndarray, feature: int, table: np.ndarray):
        self.edges = edges
        self.feature = feature
        self.table = table

    @classmethod
    def fit(cls, contexts: np.ndarray, actions: np.ndarray, action_count: int, smoothing: float = 1.0,
            bins: int = 1, feature: int = 0) -> FrequencyPropensityModel:
        if bins > 1 and feature >= contexts.shape[1]:
            raise NuisanceError(f"Propensity bin feature {feature} outside context dimension {contexts.shape[1]}")
        edges = np.unique(np.quantile(contexts[:, feature], np.linspace(0.0, 1.0, bins + 1))[1:-1]) \
            if bins > 1 else np.empty(0)
        bin_of = np.digitize(contexts[:, feature], edges) if bins > 1 else np.zeros(len(actions), dtype=np.int64)
        counts = np.zeros((len(edges) + 1, action_count))
        np.add.at(counts, (bin_of, actions), 1.0)
        totals = counts.sum(axis=1, keepdims=True)
        denominator = totals + action_count * smoothing
        with np.errstate(invalid='ignore', divide='ignore'):
            table = np.where(denominator > 0, (counts + smoothing) / denominator, 1.0 / action_count)
        return cls(edges, feature, table)

    def predict(self, contexts: np.ndarray) -> np.ndarray:
        contexts = np.atleast_2d(np.asarray(contexts, dtype=float))
        if len(self.edges) == 0:
            return np.tile(self.table[0], (contexts.shape[0], 1))
        return self.table[np.digitize(contexts[:, self.feature], self.edges)]


class InversePropensityModel:
    """w(x; a) = 1 / clip(e(x; a), eta_min, 1)"""

    def __init__(self, propensity_model, eta_min: float):
        self.propensity_model = propensity_model
        self.eta_min = eta_min

    def clipped_propensity(self, contexts: np.ndarray) -> np.ndarray:
        return np.clip(self.propensity_model.predict(contexts), self.eta_min, 1.0)

    def predict(self, contexts: np.ndarray) -> np.ndarray:
        return 1.0 / self.clipped_propensity(contexts)


# Fits

@dataclass(frozen=True)
class NuisanceCell:
    mu_model: ResponseModel
    w_model: InversePropensityModel


@dataclass(frozen=True, eq=False)
class NuisanceFits:
    """
    CROSS-FITTED NUISANCES
    - cells[(source_id, k)] trained only on the complement of fold k
    - mode decides whether AIPW reads w from the model or from logged propensities
    """

    mode: str
    config: NuisanceConfig
    action_count: int
    folds: Dict[str, FoldAssignment]
    cells: Dict[Tuple[str, int], NuisanceCell] = field(default_factory=dict)

    def cell(self, source_id: str, fold: int) -> NuisanceCell:
        if source_id not in self.folds:
            raise NuisanceError(f"Unknown source id: {source_id}")
        if not 0 <= fold < self.folds[source_id].num_folds:
            raise NuisanceError(f"Source {source_id}: fold {fold} outside [0, {self.folds[source_id].num_folds})")
        return self.cells[(source_id, fold)]


def _fit_cell(source: SourceData, folds: FoldAssignment, fold: int, action_count: int,
              config: NuisanceConfig) -> NuisanceCell:
    train = folds.complement(fold)
    if len(train) == 0:
        raise NuisanceError(f"Source {source.source_id}, fold {fold}: fold complement is empty")
    contexts, actions = source.contexts[train], source.actions[train]

    counts = np.bincount(actions, minlength=action_count)
    for action in range(action_count):
        if counts[action] == 0:
            raise NuisanceError(
                f"Source {source.source_id}, action {action}, fold {fold}: no observations outside the fold")

    mu_model = ResponseModel.fit(contexts, actions, source.rewards[train], action_count,
                                 config.regressor, config.knn_neighbors, config.ridge_alpha)

    if config.mode == 'known_propensity':
        logged = source.logged_propensities[train]
        means = np.array([logged[actions == a].mean() for a in range(action_count)])
        propensity_model = ConstantPropensityModel(means)
    else:
        propensity_model = FrequencyPropensityModel.fit(contexts, actions, action_count, config.smoothing,
                                                        config.propensity_bins, config.propensity_bin_feature)
        if np.any(propensity_model.table < config.eta_min):
            logger.warning(f"Source {source.source_id}, fold {fold}: propensities clipped at eta_min={config.eta_min}")

    return NuisanceCell(mu_model, InversePropensityModel(propensity_model, config.eta_min))


def fit_nuisance(dataset: ObservationalDataset, folds: Optional[Dict[str, FoldAssignment]] = None,
                 config: Optional[NuisanceConfig] = None) -> NuisanceFits:
    """Train every (source, fold) cell on data outside that fold"""
    config = config or NuisanceConfig()
    if config.mode == 'known_propensity' and not dataset.has_propensities:
        raise NuisanceError("known_propensity mode requires logged propensities for every source")
    if folds is None:
        folds = assign_dataset_folds(dataset, config.folds, config.seed)
    missing = [sid for sid in dataset.source_ids if sid not in folds]
    if missing:
        raise NuisanceError(f"No fold assignment for sources: {missing}")

    jobs = [(source, k) for source in dataset.sources for k in range(folds[source.source_id].num_folds)]
    with ThreadPoolExecutor(max_workers=config.max_workers) as executor:
        trained = list(executor.map(
            lambda job: _fit_cell(job[0], folds[job[0].source_id], job[1], dataset.action_count, config), jobs))

    cells = {(source.source_id, k): cell for (source, k), cell in zip(jobs, trained)}
    logger.info(f"Fitted {len(cells)} nuisance cells ({config.mode}, {config.regressor}, "
                f"{dataset.num_sources} sources)")
    return NuisanceFits(config.mode, config, dataset.action_count, dict(folds), cells)


def predict_mu(fits: NuisanceFits, source_id: str, fold: int, context: np.ndarray) -> np.ndarray:
    """mu_hat^{-fold}(x; .) for one context (length d) or a matrix of contexts (m x d)"""
    context = np.asarray(context, dtype=float)
    prediction = fits.cell(source_id, fold).mu_model.predict(context)
    return prediction[0] if context.ndim == 1 else prediction


def predict_w(fits: NuisanceFits, source_id: str, fold: int, context: np.ndarray) -> np.ndarray:
    """w_hat^{-fold}(x; .), always >= 1"""
    context = np.asarray(context, dtype=float)
    prediction = fits.cell(source_id, fold).w_model.predict(context)
    return prediction[0] if context.ndim == 1 else prediction


def cross_fitted_predictions(fits: NuisanceFits, source: SourceData) -> Tuple[np.ndarray, np.ndarray]:
    """(mu, w) for every point of a source, each from the model that excluded the point's fold"""
    folds = fits.folds[source.source_id]
    mu = np.empty((source.size, fits.action_count))
    w = np.empty((source.size, fits.action_count))
    for k in range(folds.num_folds):
        members = folds.members(k)
        cell = fits.cell(source.source_id, k)
        mu[members] = cell.mu_model.predict(source.contexts[members])
        w[members] = cell.w_model.predict(source.contexts[members])
    return mu, w


def nuisance_mse(fits: NuisanceFits, dataset: ObservationalDataset, true_mu: Dict[str, np.ndarray]) -> float:
    """Mean squared cross-fitted mu error against known conditional means"""
    errors = []
    for source in dataset.sources:
        mu, _ = cross_fitted_predictions(fits, source)
        errors.append(((mu - true_mu[source.source_id]) ** 2).ravel())
    return float(np.mean(np.concatenate(errors)))
