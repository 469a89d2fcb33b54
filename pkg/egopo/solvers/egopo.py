"""
EG-OPO - Minimax Mixture-Regret Solver
Exponentiated-gradient adversary over a weight cover against best-response tree oracles
"""

from __future__ import annotations

import logging
import math
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Any, Dict, List, Literal, Optional, Sequence

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, model_validator
from scipy.special import logsumexp

from ..estimators.aipw import ScoreMatrix
from ..metrics.skewness import skewness_report
from ..models.policy import TreePolicy
from ..models.weights import SIMPLEX_TOLERANCE, MixtureWeights
from ..utils.rng import SeededRNG
from .simplex_cover import CoverSet
from .tree_oracle import (DEFAULT_ENUMERATION_BUDGET, OracleSolution, WeightedExamples, enumerate_policies,
                          policy_objective, solve_opo)

logger = logging.getLogger(__name__)


class EgopoConfig(BaseModel):
    """
    EG-OPO SETTINGS
    - T: iteration count; omitted means the horizon ceil((n / s(Lambda||n_bar))^(1 + alpha)) capped at max_iterations
    - b_hat_mode: auto (2 * gamma_max), explicit (b_hat), oracle (per-weight regret range from oracle calls)
    - iterate_mode 'sampled': one draw from the uniform mixture over iterates, from the 'policies' stream of seed
    """

    model_config = ConfigDict(extra='forbid', frozen=True, populate_by_name=True)

    iterations: Optional[int] = Field(None, ge=1, alias='T')
    epsilon: float = Field(0.1, gt=0.0)
    depth: int = Field(2, ge=0, le=3)
    b_hat_mode: Literal['auto', 'explicit', 'oracle'] = 'auto'
    b_hat: Optional[float] = Field(None, gt=0.0)
    alpha: float = Field(0.05, ge=0.0)
    max_iterations: int = Field(200, ge=1)
    iterate_mode: Literal['last', 'uniform_average', 'best_worst_case', 'sampled'] = 'last'
    seed: int = Field(0, ge=0)
    max_workers: int = Field(4, ge=1)

    @model_validator(mode='after')
    def _check_b_hat(self) -> EgopoConfig:
        if self.b_hat_mode == 'explicit' and self.b_hat is None:
            raise ValueError("b_hat_mode 'explicit' needs a positive b_hat")
        return self


@dataclass(frozen=True, eq=False)
class EgopoResult:
    policy: TreePolicy
    iterates: List[TreePolicy]
    rho_trace: np.ndarray
    gradient_trace: np.ndarray
    per_lambda_max: np.ndarray
    worst_case_regrets: np.ndarray
    eta: float
    b_hat: float
    iterate_mode: str

    @property
    def iterations(self) -> int:
        return len(self.iterates)

    def to_dict(self) -> Dict[str, Any]:
        return {
            'policy': self.policy.to_dict(),
            'eta': self.eta,
            'b_hat': self.b_hat,
            'iterations': self.iterations,
            'iterate_mode': self.iterate_mode,
            'per_lambda_max': self.per_lambda_max.tolist(),
        }

    def trace_frame(self) -> pd.DataFrame:
        """Long layout t,lambda_index,rho,gradient"""
        steps, points = self.rho_trace.shape
        return pd.DataFrame({
            't': np.repeat(np.arange(steps), points),
            'lambda_index': np.tile(np.arange(points), steps),
            'rho': self.rho_trace.ravel(),
            'gradient': self.gradient_trace.ravel(),
        })


# Weighted views of the score matrix

def _row_weights(scores: ScoreMatrix, weights: np.ndarray) -> np.ndarray:
    """Per-row weight lambda_s / n_s for one weight vector (or each row of a matrix)"""
    weights = np.asarray(weights, dtype=float)
    if weights.shape[-1] != scores.num_sources:
        raise ValueError(f"Weights have {weights.shape[-1]} entries for {scores.num_sources} sources")
    sizes = np.asarray(scores.sizes, dtype=float)
    source_index = scores.stacked()['source_index']
    return (weights / sizes)[..., source_index]


def mixture_examples(scores: ScoreMatrix, weights: np.ndarray, negate: bool = False) -> WeightedExamples:
    stacked = scores.stacked()
    score_rows = -stacked['scores'] if negate else stacked['scores']
    return WeightedExamples(stacked['contexts'], score_rows, _row_weights(scores, weights))


def empirical_mixture_value(scores: ScoreMatrix, weights: MixtureWeights, policy: TreePolicy) -> float:
    """Q_hat_lambda(pi) = sum_s (lambda_s / n_s) sum_i Gamma_i^s(pi(X_i^s))"""
    return policy_objective(policy, mixture_examples(scores, weights.as_array()))


def empirical_mixture_regret(scores: ScoreMatrix, weights: MixtureWeights, policy: TreePolicy,
                             per_lambda_max: float) -> float:
    """M_lambda - Q_hat_lambda(pi)"""
    return float(per_lambda_max) - empirical_mixture_value(scores, weights, policy)


def _solve_each(scores: ScoreMatrix, cover: CoverSet, depth: int, negate: bool = False,
                max_workers: int = 4) -> List[OracleSolution]:
    points = cover.as_array()
    with ThreadPoolExecutor(max_workers=max_workers) as executor:
        return list(executor.map(lambda w: solve_opo(mixture_examples(scores, w, negate), depth), points))


def per_lambda_max_values(scores: ScoreMatrix, cover: CoverSet, depth: int, max_workers: int = 4) -> np.ndarray:
    """M_lambda = max_pi Q_hat_lambda(pi), one oracle call per cover point"""
    solutions = _solve_each(scores, cover, depth, max_workers=max_workers)
    return np.array([s.objective for s in solutions])


def _check_rho(rho: np.ndarray, cover: CoverSet) -> np.ndarray:
    rho = np.asarray(rho, dtype=float)
    if rho.shape != (len(cover),):
        raise ValueError(f"rho has shape {rho.shape}, expected ({len(cover)},)")
    if np.any(rho < 0) or abs(rho.sum() - 1.0) > SIMPLEX_TOLERANCE:
        raise ValueError("rho must be a probability vector over the cover")
    return rho


def best_response(scores: ScoreMatrix, cover: CoverSet, rho: np.ndarray, depth: int) -> TreePolicy:
    """argmax_pi E_{lambda~rho}[Q_hat_lambda(pi)] with the lambda-sum collapsed into per-row weights"""
    collapsed = _check_rho(rho, cover) @ cover.as_array()
    return solve_opo(mixture_examples(scores, collapsed), depth).policy


def eg_update(rho: np.ndarray, gradient: np.ndarray, eta: float) -> np.ndarray:
    """rho' proportional to rho * exp(eta * g), computed in log space"""
    log_rho = np.log(rho) + eta * np.asarray(gradient, dtype=float)
    return np.exp(log_rho - logsumexp(log_rho))


def mixture_values(scores: ScoreMatrix, cover: CoverSet, policy: TreePolicy) -> np.ndarray:
    """Q_hat_lambda(pi) for every cover point, with the same rounding as policy_objective"""
    stacked = scores.stacked()
    chosen = stacked['scores'][np.arange(scores.total_size), policy.evaluate_batch(stacked['contexts'])]
    row_weights = _row_weights(scores, cover.as_array())
    return np.array([math.fsum(chosen * weights) for weights in row_weights])


def auto_iterations(scores: ScoreMatrix, cover: CoverSet, alpha: float = 0.05, cap: int = 200) -> int:
    """ceil((n / s(Lambda || n_bar))^(1 + alpha)), capped"""
    skew = skewness_report(list(cover.points), scores.n_bar).mixture_agnostic
    horizon = max(1, math.ceil((scores.total_size / skew) ** (1.0 + alpha)))
    if horizon > cap:
        logger.warning(f"Horizon {horizon} capped at max_iterations={cap}")
    return min(horizon, cap)


def estimate_b_hat(scores: ScoreMatrix, cover: CoverSet, config: EgopoConfig, per_lambda_max: np.ndarray) -> float:
    if config.b_hat_mode == 'explicit':
        return float(config.b_hat)
    if config.b_hat_mode == 'oracle':
        # max_pi of the negated scores is -min_pi Q_hat_lambda(pi)
        lowest = _solve_each(scores, cover, config.depth, negate=True, max_workers=config.max_workers)
        return float(max(m + s.objective for m, s in zip(per_lambda_max, lowest)))
    return 2.0 * scores.gamma_max


def _select(iterates: List[TreePolicy], worst_case: np.ndarray, mode: str, seed: int = 0) -> TreePolicy:
    if mode == 'last':
        return iterates[-1]
    if mode == 'sampled':
        index = int(SeededRNG(seed).stream('policies').integers(len(iterates)))
        logger.debug(f"Sampled iterate {index + 1} of {len(iterates)}")
        return iterates[index]
    if mode == 'best_worst_case':
        return iterates[int(np.argmin(worst_case))]
    # uniform_average: the iterate carrying the most mass in the averaged distribution, earliest on ties
    counts = Counter(iterates)
    top = max(counts.values())
    return next(policy for policy in iterates if counts[policy] == top)


def run_egopo(scores: ScoreMatrix, cover: CoverSet, config: Optional[EgopoConfig] = None) -> EgopoResult:
    """No-regret dynamics: EG adversary over the cover, best-response tree policies"""
    config = config or EgopoConfig()
    if cover.num_sources != scores.num_sources:
        raise ValueError(f"Cover has {cover.num_sources} sources, scores have {scores.num_sources}")

    iterations = config.iterations or auto_iterations(scores, cover, config.alpha, config.max_iterations)
    per_lambda_max = per_lambda_max_values(scores, cover, config.depth, config.max_workers)
    points = len(cover)

    if points == 1:
        policy = best_response(scores, cover, np.ones(1), config.depth)
        regret = per_lambda_max - mixture_values(scores, cover, policy)
        b_hat = estimate_b_hat(scores, cover, config, per_lambda_max)
        logger.info("Single cover point: EG-OPO reduces to one oracle call")
        return EgopoResult(
            policy=policy,
            iterates=[policy] * iterations,
            rho_trace=np.ones((iterations, 1)),
            gradient_trace=np.tile(np.clip(regret, 0.0, b_hat), (iterations, 1)),
            per_lambda_max=per_lambda_max,
            worst_case_regrets=np.full(iterations, float(regret.max())),
            eta=0.0,
            b_hat=b_hat,
            iterate_mode=config.iterate_mode,
        )

    b_hat = estimate_b_hat(scores, cover, config, per_lambda_max)
    eta = math.sqrt(math.log(points) / (b_hat ** 2 * iterations)) if b_hat > 0 else 0.0
    logger.info(f"EG-OPO: |Lambda|={points}, T={iterations}, b_hat={b_hat:.4f}, eta={eta:.5f}")

    rho = np.full(points, 1.0 / points)
    iterates: List[TreePolicy] = []
    rho_trace = np.empty((iterations, points))
    gradient_trace = np.empty((iterations, points))
    worst_case = np.empty(iterations)
    report_every = max(1, iterations // 10)

    for t in range(iterations):
        policy = best_response(scores, cover, rho, config.depth)
        regret = per_lambda_max - mixture_values(scores, cover, policy)
        gradient = np.clip(regret, 0.0, b_hat)

        iterates.append(policy)
        rho_trace[t] = rho
        gradient_trace[t] = gradient
        worst_case[t] = regret.max()
        rho = eg_update(rho, gradient, eta)

        if (t + 1) % report_every == 0:
            logger.info(f"EG-OPO step {t + 1}/{iterations}: worst-case regret {worst_case[t]:.5f}")
        else:
            logger.debug(f"EG-OPO step {t + 1}: max rho {rho.max():.4f}")

    return EgopoResult(
        policy=_select(iterates, worst_case, config.iterate_mode, config.seed),
        iterates=iterates,
        rho_trace=rho_trace,
        gradient_trace=gradient_trace,
        per_lambda_max=per_lambda_max,
        worst_case_regrets=worst_case,
        eta=eta,
        b_hat=b_hat,
        iterate_mode=config.iterate_mode,
    )


# Averaged-iterate guarantee

def average_iterate_regret(scores: ScoreMatrix, cover: CoverSet, iterates: Sequence[TreePolicy],
                           per_lambda_max: np.ndarray) -> np.ndarray:
    """mean_t R_hat_lambda(pi_t) for every cover point"""
    regrets = [per_lambda_max - mixture_values(scores, cover, policy) for policy in iterates]
    return np.mean(regrets, axis=0)


def suboptimality_bound(b_hat: float, cover_size: int, iterations: int) -> float:
    """2 * B * sqrt(log|Lambda| / T)"""
    return 2.0 * b_hat * math.sqrt(math.log(cover_size) / iterations)


def worst_case_regret(scores: ScoreMatrix, cover: CoverSet, policy: TreePolicy,
                      per_lambda_max: np.ndarray) -> float:
    return float(np.max(per_lambda_max - mixture_values(scores, cover, policy)))


def enumerated_minimax_regret(scores: ScoreMatrix, cover: CoverSet, depth: int,
                              budget: int = DEFAULT_ENUMERATION_BUDGET) -> float:
    """min over every enumerable tree behavior of max_lambda R_hat_lambda (tiny instances only)"""
    stacked = scores.stacked()
    policies = enumerate_policies(stacked['contexts'], depth, scores.action_count, budget)
    values = np.array([mixture_values(scores, cover, policy) for policy in policies])
    maxima = values.max(axis=0)
    return float(np.min(np.max(maxima[None, :] - values, axis=1)))
