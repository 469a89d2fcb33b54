"""
EG-OPO - Synthetic Data Generator
Multi-source linear bandit environments with full potential-outcome tables
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from ..models.dataset import ObservationalDataset, SourceData
from ..models.policy import TreePolicy
from ..models.weights import MixtureWeights
from ..utils.rng import SeededRNG

logger = logging.getLogger(__name__)

CONTEXT_LOW, CONTEXT_HIGH = -1.0, 1.0

SeedLike = Union[int, SeededRNG]


@dataclass(frozen=True)
class SourceGenParams:
    """
    SOURCE DGP
    - contexts uniform on [-1, 1]^p with p = d * q
    - logging uniform over the d actions
    - Y(a) ~ N(x_a . theta + offset, sigma_sq), x_a = coordinates [a*q, (a+1)*q)
    """

    theta: tuple
    sigma_sq: float = 1.0
    q: int = 4
    d: int = 2
    offset: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, 'theta', tuple(float(t) for t in self.theta))
        if len(self.theta) != self.q:
            raise ValueError(f"theta has {len(self.theta)} entries, expected q={self.q}")
        if self.q < 1 or self.d < 2:
            raise ValueError(f"Need q >= 1 and d >= 2, got q={self.q}, d={self.d}")
        if not self.sigma_sq >= 0.0:
            raise ValueError(f"Reward noise variance must be non-negative, got {self.sigma_sq}")

    @property
    def p(self) -> int:
        return self.d * self.q

    def mean_rewards(self, contexts: np.ndarray) -> np.ndarray:
        """mu(x; a) for every row, shape (m, d)"""
        contexts = np.atleast_2d(contexts)
        blocks = contexts.reshape(contexts.shape[0], self.d, self.q)
        return blocks @ np.asarray(self.theta) + self.offset


@dataclass(frozen=True, eq=False)
class SimulatedSource:
    """Observable data plus every potential outcome and the true means"""

    observable: SourceData
    potential_outcomes: np.ndarray
    true_mu: np.ndarray
    params: SourceGenParams


def _rng(seed: SeedLike) -> SeededRNG:
    return seed if isinstance(seed, SeededRNG) else SeededRNG(seed)


def sample_params(num_sources: int = 3, q: int = 4, d: int = 2, sigma_theta_sq: float = 5.0,
                  seed: SeedLike = 0, sigma_sq: float = 1.0) -> List[SourceGenParams]:
    """theta_s ~ N(0, sigma_theta_sq * I_q), one independent stream per source"""
    if num_sources < 1 or q < 1 or d < 2:
        raise ValueError("num_sources and q must be positive and d at least 2")
    if sigma_theta_sq < 0:
        raise ValueError(f"sigma_theta_sq must be non-negative, got {sigma_theta_sq}")
    rng = _rng(seed)
    params = []
    for s in range(num_sources):
        theta = rng.stream('theta', s).normal(0.0, math.sqrt(sigma_theta_sq), size=q)
        params.append(SourceGenParams(tuple(theta), sigma_sq, q, d))
    return params


def generate_source(params: SourceGenParams, n_s: int, seed: SeedLike = 0, source_index: int = 0,
                    source_id: Optional[str] = None) -> SimulatedSource:
    """Draw n_s observations; contexts, actions and outcomes come from disjoint streams"""
    if n_s < 1:
        raise ValueError(f"n_s must be positive, got {n_s}")
    rng = _rng(seed)
    contexts = rng.stream('contexts', source_index).uniform(CONTEXT_LOW, CONTEXT_HIGH, size=(n_s, params.p))
    actions = rng.stream('actions', source_index).integers(0, params.d, size=n_s)
    noise = rng.stream('outcomes', source_index).standard_normal(size=(n_s, params.d))

    true_mu = params.mean_rewards(contexts)
    potential_outcomes = true_mu + math.sqrt(params.sigma_sq) * noise
    rewards = potential_outcomes[np.arange(n_s), actions]

    observable = SourceData(
        source_id=source_id if source_id is not None else f"s{source_index + 1}",
        contexts=contexts,
        actions=actions,
        rewards=rewards,
        logged_propensities=np.full(n_s, 1.0 / params.d),
    )
    return SimulatedSource(observable, potential_outcomes, true_mu, params)


def allocate_sizes(n_total: int, num_sources: int) -> List[int]:
    """Equal split; the remainder goes to the lowest-index sources"""
    if num_sources < 1 or n_total < num_sources:
        raise ValueError(f"Cannot give each of {num_sources} sources a sample out of n={n_total}")
    base, remainder = divmod(n_total, num_sources)
    return [base + (1 if s < remainder else 0) for s in range(num_sources)]


def simulate_dataset(params: Sequence[SourceGenParams], sizes: Union[int, Sequence[int]],
                     seed: SeedLike = 0) -> Tuple[ObservationalDataset, List[SimulatedSource]]:
    """All sources at once; an int size is split with allocate_sizes"""
    if isinstance(sizes, int):
        sizes = allocate_sizes(sizes, len(params))
    if len(sizes) != len(params):
        raise ValueError("Need one size per source")
    simulated = [generate_source(p, n, seed, s) for s, (p, n) in enumerate(zip(params, sizes))]
    dataset = ObservationalDataset.from_sources([s.observable for s in simulated], params[0].d)
    logger.debug(f"Simulated dataset: sizes={list(sizes)}, p={dataset.context_dim}, d={dataset.action_count}")
    return dataset, simulated


@dataclass(frozen=True, eq=False)
class MixtureSample:
    """Draws from D_lambda: the source of each row, its context and outcomes"""

    source_index: np.ndarray
    contexts: np.ndarray
    true_mu: np.ndarray
    potential_outcomes: np.ndarray


def sample_mixture(params: Sequence[SourceGenParams], weights: MixtureWeights, n: int,
                   generator: np.random.Generator) -> MixtureSample:
    """s ~ lambda, then (X, Y(.)) ~ D_s, n times"""
    if len(weights) != len(params):
        raise ValueError(f"Weights have {len(weights)} entries for {len(params)} sources")
    q, d = params[0].q, params[0].d
    if any(p.q != q or p.d != d for p in params):
        raise ValueError("All sources must share q and d")

    sources = generator.choice(len(params), size=n, p=weights.as_array())
    contexts = generator.uniform(CONTEXT_LOW, CONTEXT_HIGH, size=(n, d * q))
    noise = generator.standard_normal(size=(n, d))

    thetas = np.array([p.theta for p in params])[sources]
    offsets = np.array([p.offset for p in params])[sources]
    noise_sd = np.sqrt(np.array([p.sigma_sq for p in params]))[sources]
    true_mu = np.einsum('naq,nq->na', contexts.reshape(n, d, q), thetas) + offsets[:, None]
    return MixtureSample(sources, contexts, true_mu, true_mu + noise_sd[:, None] * noise)


def analytic_policy_value(policy: TreePolicy, params: Sequence[SourceGenParams],
                          weights: MixtureWeights) -> float:
    """
    Exact Q_lambda(pi) for a tree on the uniform-context linear model.
    A linear mean averaged over an axis-aligned box equals its value at the box centre.
    """
    p = params[0].p
    regions = policy.leaf_regions(np.full(p, CONTEXT_LOW), np.full(p, CONTEXT_HIGH))
    total_volume = (CONTEXT_HIGH - CONTEXT_LOW) ** p
    value = 0.0
    for lam, source in zip(weights.weights, params):
        if lam == 0.0:
            continue
        for lo, hi, action in regions:
            volume = float(np.prod(np.clip(hi - lo, 0.0, None)))
            if volume == 0.0:
                continue
            centre = (lo + hi) / 2.0
            value += lam * (volume / total_volume) * float(source.mean_rewards(centre)[0, action])
    return value
