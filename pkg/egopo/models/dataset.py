"""
EG-OPO - Observational Dataset Models
Multi-source bandit feedback: per-source contexts, logged actions, rewards, optional propensities
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .weights import MixtureWeights

logger = logging.getLogger(__name__)


def _frozen(array: np.ndarray) -> np.ndarray:
    array = np.array(array, copy=True)
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class SourceData:
    """
    LOCAL DATA OF ONE SOURCE
    - contexts: n_s x p real matrix
    - actions: n_s integers in [0, d)
    - rewards: n_s reals
    - logged_propensities: optional n_s reals in (0, 1]
    Arrays are copied and made read-only on construction.
    """

    source_id: str
    contexts: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    logged_propensities: Optional[np.ndarray] = None

    def __post_init__(self):
        contexts = np.asarray(self.contexts, dtype=float)
        if contexts.ndim != 2:
            raise ValueError(f"Source {self.source_id}: contexts must be a 2-D matrix")
        n_s = contexts.shape[0]
        if n_s < 1:
            raise ValueError(f"Source {self.source_id}: at least one observation required")

        actions = np.asarray(self.actions)
        if actions.shape != (n_s,):
            raise ValueError(f"Source {self.source_id}: expected {n_s} actions, got shape {actions.shape}")
        if not np.issubdtype(actions.dtype, np.integer):
            if not np.all(np.equal(np.mod(actions, 1), 0)):
                raise ValueError(f"Source {self.source_id}: actions must be integers")
        actions = actions.astype(np.int64)
        if np.any(actions < 0):
            raise ValueError(f"Source {self.source_id}: negative action index")

        rewards = np.asarray(self.rewards, dtype=float)
        if rewards.shape != (n_s,):
            raise ValueError(f"Source {self.source_id}: expected {n_s} rewards, got shape {rewards.shape}")
        if not np.all(np.isfinite(contexts)) or not np.all(np.isfinite(rewards)):
            raise ValueError(f"Source {self.source_id}: contexts and rewards must be finite")

        propensities = self.logged_propensities
        if propensities is not None:
            propensities = np.asarray(propensities, dtype=float)
            if propensities.shape != (n_s,):
                raise ValueError(f"Source {self.source_id}: expected {n_s} propensities")
            if np.any(~(propensities > 0.0)) or np.any(propensities > 1.0):
                raise ValueError(f"Source {self.source_id}: logged propensities must lie in (0, 1]")
            propensities = _frozen(propensities)

        object.__setattr__(self, 'source_id', str(self.source_id))
        object.__setattr__(self, 'contexts', _frozen(contexts))
        object.__setattr__(self, 'actions', _frozen(actions))
        object.__setattr__(self, 'rewards', _frozen(rewards))
        object.__setattr__(self, 'logged_propensities', propensities)

    @property
    def size(self) -> int:
        return int(self.contexts.shape[0])

    @property
    def context_dim(self) -> int:
        return int(self.contexts.shape[1])

    @property
    def has_propensities(self) -> bool:
        return self.logged_propensities is not None

    def subset(self, indices: np.ndarray) -> SourceData:
        """Rows selected by index, same source id"""
        propensities = None if self.logged_propensities is None else self.logged_propensities[indices]
        return SourceData(self.source_id, self.contexts[indices], self.actions[indices],
                          self.rewards[indices], propensities)

    def equals(self, other: SourceData) -> bool:
        """Bit-for-bit equality of every field"""
        if self.source_id != other.source_id or self.has_propensities != other.has_propensities:
            return False
        same = (np.array_equal(self.contexts, other.contexts)
                and np.array_equal(self.actions, other.actions)
                and np.array_equal(self.rewards, other.rewards))
        if same and self.has_propensities:
            same = np.array_equal(self.logged_propensities, other.logged_propensities)
        return bool(same)


@dataclass(frozen=True, eq=False)
class ObservationalDataset:
    """
    MULTI-SOURCE DATASET
    - ordered sources (first-appearance order when loaded from file)
    - shared context dimension p and action count d >= 2
    """

    sources: Tuple[SourceData, ...]
    context_dim: int
    action_count: int

    def __post_init__(self):
        sources = tuple(self.sources)
        if not sources:
            raise ValueError("Dataset needs at least one source")
        if self.context_dim < 1:
            raise ValueError(f"Context dimension must be positive, got {self.context_dim}")
        if self.action_count < 2:
            raise ValueError(f"Action count must be at least 2, got {self.action_count}")

        seen = set()
        for source in sources:
            if source.source_id in seen:
                raise ValueError(f"Duplicate source id: {source.source_id}")
            seen.add(source.source_id)
            if source.context_dim != self.context_dim:
                raise ValueError(
                    f"Source {source.source_id} has context dimension {source.context_dim}, "
                    f"expected {self.context_dim}")
            if np.any(source.actions >= self.action_count):
                raise ValueError(f"Source {source.source_id} has an action outside [0, {self.action_count})")

        object.__setattr__(self, 'sources', sources)

    @classmethod
    def from_sources(cls, sources: Sequence[SourceData], action_count: int) -> ObservationalDataset:
        return cls(tuple(sources), sources[0].context_dim, action_count)

    @property
    def source_ids(self) -> List[str]:
        return [source.source_id for source in self.sources]

    @property
    def num_sources(self) -> int:
        return len(self.sources)

    @property
    def sizes(self) -> List[int]:
        return [source.size for source in self.sources]

    @property
    def total_size(self) -> int:
        return int(sum(self.sizes))

    @property
    def n_bar(self) -> MixtureWeights:
        """Empirical sample distribution (n_s / n)"""
        return MixtureWeights.from_counts(self.sizes)

    @property
    def has_propensities(self) -> bool:
        return all(source.has_propensities for source in self.sources)

    def source_index(self, source_id: str) -> int:
        for index, source in enumerate(self.sources):
            if source.source_id == source_id:
                return index
        raise KeyError(f"Unknown source id: {source_id}")

    def source(self, source_id: str) -> SourceData:
        return self.sources[self.source_index(source_id)]

    def pooled(self) -> Dict[str, np.ndarray]:
        """All sources stacked in source order, with the source index of every row"""
        return {
            'contexts': np.vstack([s.contexts for s in self.sources]),
            'actions': np.concatenate([s.actions for s in self.sources]),
            'rewards': np.concatenate([s.rewards for s in self.sources]),
            'source_index': np.concatenate([np.full(s.size, i) for i, s in enumerate(self.sources)]),
        }

    def equals(self, other: ObservationalDataset) -> bool:
        return (self.context_dim == other.context_dim
                and self.action_count == other.action_count
                and len(self.sources) == len(other.sources)
                and all(a.equals(b) for a, b in zip(self.sources, other.sources)))
