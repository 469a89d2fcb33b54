"""
EG-OPO - Mixture Weights
A point of the probability simplex over data sources
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

SIMPLEX_TOLERANCE = 1e-9


@dataclass(frozen=True)
class MixtureWeights:
    """Non-negative source weights summing to one (within 1e-9)"""

    weights: tuple

    def __post_init__(self):
        values = tuple(float(w) for w in self.weights)
        if not values:
            raise ValueError("Mixture weights must have at least one entry")
        if any(not np.isfinite(w) for w in values):
            raise ValueError(f"Mixture weights must be finite: {values}")
        if any(w < 0 for w in values):
            raise ValueError(f"Mixture weights must be non-negative: {values}")
        total = sum(values)
        if abs(total - 1.0) > SIMPLEX_TOLERANCE:
            raise ValueError(f"Mixture weights must sum to 1, got {total!r}")
        object.__setattr__(self, 'weights', values)

    @classmethod
    def from_iterable(cls, values: Iterable[float]) -> MixtureWeights:
        return cls(tuple(values))

    @classmethod
    def uniform(cls, size: int) -> MixtureWeights:
        return cls(tuple([1.0 / size] * size))

    @classmethod
    def vertex(cls, index: int, size: int) -> MixtureWeights:
        """Degenerate weights e_index"""
        values = [0.0] * size
        values[index] = 1.0
        return cls(tuple(values))

    @classmethod
    def from_counts(cls, counts: Sequence[int]) -> MixtureWeights:
        """Empirical sample distribution n_s / n"""
        total = float(sum(counts))
        return cls(tuple(c / total for c in counts))

    def __len__(self) -> int:
        return len(self.weights)

    def __getitem__(self, index: int) -> float:
        return self.weights[index]

    def as_array(self) -> np.ndarray:
        return np.asarray(self.weights, dtype=float)

    def l1_distance(self, other: MixtureWeights) -> float:
        return float(np.abs(self.as_array() - other.as_array()).sum())
