"""
EG-OPO - Ground-Truth Evaluation
Monte Carlo policy values and regrets against the simulator
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import List, Sequence

import numpy as np

from ..models.policy import TreePolicy
from ..models.weights import MixtureWeights
from ..simulation.simulator import SourceGenParams, sample_mixture
from ..utils.rng import SeededRNG

logger = logging.getLogger(__name__)

MIN_MC_SAMPLES = 1000
DEFAULT_MC_SAMPLES = 50_000
CHUNK_SIZE = 10_000


@dataclass(frozen=True)
class PolicyValueEstimate:
    value: float
    se: float
    samples: int


def _estimate(draws: np.ndarray) -> PolicyValueEstimate:
    return PolicyValueEstimate(float(np.mean(draws)), float(np.std(draws, ddof=1) / math.sqrt(len(draws))),
                               len(draws))


def chosen_outcomes(policies: Sequence[TreePolicy], params: Sequence[SourceGenParams], weights: MixtureWeights,
                    mc_samples: int, seed: int, max_workers: int = 4) -> List[np.ndarray]:
    """
    Y(pi(X)) for each policy on the same draws from D_lambda.
    Draws are made in fixed-size chunks, each with its own child seed.
    """
    if mc_samples < MIN_MC_SAMPLES:
        raise ValueError(f"mc_samples must be at least {MIN_MC_SAMPLES}, got {mc_samples}")
    chunks = math.ceil(mc_samples / CHUNK_SIZE)
    seeds = SeededRNG(seed).chunk_seeds('evaluation', chunks)
    sizes = [min(CHUNK_SIZE, mc_samples - c * CHUNK_SIZE) for c in range(chunks)]

    def run_chunk(chunk: int) -> List[np.ndarray]:
        sample = sample_mixture(params, weights, sizes[chunk], np.random.default_rng(seeds[chunk]))
        rows = np.arange(sizes[chunk])
        return [sample.potential_outcomes[rows, policy.evaluate_batch(sample.contexts)] for policy in policies]

    with ThreadPoolExecutor(max_workers=max_workers) as executor:
        results = list(executor.map(run_chunk, range(chunks)))
    return [np.concatenate([chunk[k] for chunk in results]) for k in range(len(policies))]


def true_policy_value(policy: TreePolicy, params: Sequence[SourceGenParams], weights: MixtureWeights,
                      mc_samples: int = DEFAULT_MC_SAMPLES, seed: int = 0) -> PolicyValueEstimate:
    """Monte Carlo Q_lambda(pi): s ~ lambda, (X, Y(.)) ~ D_s, read Y(pi(X))"""
    (outcomes,) = chosen_outcomes([policy], params, weights, mc_samples, seed)
    return _estimate(outcomes)


def true_regret(policy: TreePolicy, params: Sequence[SourceGenParams], weights: MixtureWeights,
                reference_policy: TreePolicy, mc_samples: int = DEFAULT_MC_SAMPLES,
                seed: int = 0) -> PolicyValueEstimate:
    """Q_lambda(reference) - Q_lambda(policy), both read off the same draws"""
    reference, candidate = chosen_outcomes([reference_policy, policy], params, weights, mc_samples, seed)
    estimate = _estimate(reference - candidate)
    logger.debug(f"True regret {estimate.value:.5f} +/- {estimate.se:.5f} ({mc_samples} draws)")
    return estimate
