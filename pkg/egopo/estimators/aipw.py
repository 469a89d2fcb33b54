"""
EG-OPO - AIPW Scores
Doubly robust per-action scores from cross-fitted nuisances or simulator truth
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence

import numpy as np
import pandas as pd

from ..errors import ScoreError
from ..models.dataset import ObservationalDataset
from ..models.weights import MixtureWeights
from ..simulation.simulator import SimulatedSource
from .nuisance import FoldAssignment, NuisanceFits, cross_fitted_predictions

logger = logging.getLogger(__name__)

PROVENANCES = ('oracle', 'cross_fitted')


def aipw_rows(mu: np.ndarray, rewards: np.ndarray, actions: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Gamma(a) = mu(a) + (Y - mu(a)) * w(a) * 1{A = a}, for every row"""
    scores = np.array(mu, dtype=float, copy=True)
    rows = np.arange(scores.shape[0])
    observed = scores[rows, actions]
    scores[rows, actions] = observed + (rewards - observed) * w[rows, actions]
    return scores


def _frozen(array: np.ndarray) -> np.ndarray:
    array = np.array(array, dtype=float, copy=True)
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class ScoreMatrix:
    """
    AIPW SCORE MATRIX
    - scores[s]: n_s x d matrix for source s, aligned with contexts[s]
    - provenance: 'oracle' (true nuisances) or 'cross_fitted'
    - gamma_max: cached max |entry|
    """

    source_ids: tuple
    contexts: tuple
    scores: tuple
    provenance: str

    def __post_init__(self):
        if self.provenance not in PROVENANCES:
            raise ScoreError(f"Unknown provenance: {self.provenance}")
        if not self.scores or len(self.scores) != len(self.contexts) or len(self.scores) != len(self.source_ids):
            raise ScoreError("Need one score matrix and one context matrix per source")
        scores = tuple(_frozen(s) for s in self.scores)
        contexts = tuple(_frozen(c) for c in self.contexts)
        for source_id, matrix, context in zip(self.source_ids, scores, contexts):
            if matrix.ndim != 2 or matrix.shape[0] != context.shape[0] or matrix.shape[0] == 0:
                raise ScoreError(f"Source {source_id}: score and context row counts differ or are empty")
            if not np.all(np.isfinite(matrix)):
                raise ScoreError(f"Source {source_id}: non-finite score")
        widths = {s.shape[1] for s in scores}
        if len(widths) != 1:
            raise ScoreError(f"Score matrices disagree on the action count: {sorted(widths)}")
        object.__setattr__(self, 'source_ids', tuple(self.source_ids))
        object.__setattr__(self, 'scores', scores)
        object.__setattr__(self, 'contexts', contexts)
        object.__setattr__(self, '_gamma_max', float(max(np.abs(s).max() for s in scores)))
        stacked = {
            'contexts': _frozen(np.vstack(contexts)),
            'scores': _frozen(np.vstack(scores)),
            'source_index': np.concatenate([np.full(len(s), i) for i, s in enumerate(scores)]),
        }
        stacked['source_index'].setflags(write=False)
        object.__setattr__(self, '_stacked', stacked)

    @property
    def gamma_max(self) -> float:
        return self._gamma_max

    @property
    def num_sources(self) -> int:
        return len(self.scores)

    @property
    def action_count(self) -> int:
        return int(self.scores[0].shape[1])

    @property
    def sizes(self) -> List[int]:
        return [int(s.shape[0]) for s in self.scores]

    @property
    def total_size(self) -> int:
        return int(sum(self.sizes))

    @property
    def n_bar(self) -> MixtureWeights:
        return MixtureWeights.from_counts(self.sizes)

    def stacked(self) -> Dict[str, np.ndarray]:
        """Contexts, scores and source index of every row, sources in order"""
        return self._stacked

    def to_frame(self) -> pd.DataFrame:
        """Long CSV layout: source,i,gamma_0..gamma_{d-1}"""
        frames = []
        for source_id, matrix in zip(self.source_ids, self.scores):
            frame = pd.DataFrame(matrix, columns=[f"gamma_{a}" for a in range(self.action_count)])
            frame.insert(0, 'i', np.arange(matrix.shape[0]))
            frame.insert(0, 'source', source_id)
            frames.append(frame)
        return pd.concat(frames, ignore_index=True)


def compute_aipw_scores(dataset: ObservationalDataset, fits: NuisanceFits,
                        folds: Optional[Dict[str, FoldAssignment]] = None) -> ScoreMatrix:
    """Cross-fitted scores: point i of source s uses the models trained without fold k_s(i)"""
    folds = folds if folds is not None else fits.folds
    all_scores = []
    for source in dataset.sources:
        if source.source_id not in folds or source.source_id not in fits.folds:
            raise ScoreError(f"Source {source.source_id} has no folds or fitted nuisances")
        if not np.array_equal(folds[source.source_id].fold_of, fits.folds[source.source_id].fold_of):
            raise ScoreError(f"Source {source.source_id}: folds differ from those used to fit the nuisances")

        mu, w = cross_fitted_predictions(fits, source)
        rows = np.arange(source.size)
        if fits.mode == 'known_propensity':
            w[rows, source.actions] = 1.0 / source.logged_propensities

        for name, values in (('mu', mu), ('w', w)):
            bad = np.argwhere(~np.isfinite(values))
            if len(bad):
                i, a = bad[0]
                raise ScoreError(f"Non-finite {name} prediction at source={source.source_id}, i={i}, a={a}")

        all_scores.append(aipw_rows(mu, source.rewards, source.actions, w))

    matrix = ScoreMatrix(tuple(dataset.source_ids), tuple(s.contexts for s in dataset.sources),
                         tuple(all_scores), 'cross_fitted')
    logger.info(f"Computed cross-fitted AIPW scores: n={matrix.total_size}, gamma_max={matrix.gamma_max:.4f}")
    return matrix


def compute_oracle_scores(simulated: Sequence[SimulatedSource],
                          true_w: Optional[Sequence[np.ndarray]] = None) -> ScoreMatrix:
    """Scores with the true mean and inverse propensity (simulator only)"""
    all_scores = []
    for index, source in enumerate(simulated):
        observed = source.observable
        if source.true_mu.shape != source.potential_outcomes.shape or source.true_mu.shape[0] != observed.size:
            raise ScoreError(f"Source {observed.source_id}: potential outcome table has the wrong shape")
        if true_w is not None:
            w = np.asarray(true_w[index], dtype=float)
            if w.shape != source.true_mu.shape:
                raise ScoreError(f"Source {observed.source_id}: true_w must be {source.true_mu.shape}")
        else:
            w = np.tile((1.0 / observed.logged_propensities)[:, None], (1, source.true_mu.shape[1]))
        all_scores.append(aipw_rows(source.true_mu, observed.rewards, observed.actions, w))

    return ScoreMatrix(tuple(s.observable.source_id for s in simulated),
                       tuple(s.observable.contexts for s in simulated), tuple(all_scores), 'oracle')
