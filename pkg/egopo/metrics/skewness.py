"""
EG-OPO - Skewness Diagnostics
Chi-squared imbalance of target mixture weights against the sample allocation
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass
from typing import Any, Dict, List, Tuple

from ..models.weights import MixtureWeights

logger = logging.getLogger(__name__)


def _check(weights: MixtureWeights, n_bar: MixtureWeights):
    if len(weights) != len(n_bar):
        raise ValueError(f"Weights have {len(weights)} entries, n_bar has {len(n_bar)}")
    if any(share <= 0.0 for share in n_bar.weights):
        raise ValueError("Skewness needs every source to contribute data (n_bar > 0)")


def skewness(weights: MixtureWeights, n_bar: MixtureWeights) -> float:
    """s(lambda || n_bar) = sum_s lambda_s^2 / n_bar_s  (= 1 + chi^2)"""
    _check(weights, n_bar)
    # lam * (lam / share) keeps s(n_bar || n_bar) at exactly sum(n_bar)
    return math.fsum(lam * (lam / share) for lam, share in zip(weights.weights, n_bar.weights))


def skewness_identity_check(weights: MixtureWeights, n_bar: MixtureWeights) -> Tuple[float, float]:
    """(sum lambda^2 / n_bar, 1 + sum (lambda - n_bar)^2 / n_bar); equal up to rounding"""
    _check(weights, n_bar)
    divergence = math.fsum((lam - share) ** 2 / share for lam, share in zip(weights.weights, n_bar.weights))
    return skewness(weights, n_bar), 1.0 + divergence


@dataclass(frozen=True)
class SkewnessReport:
    per_lambda: Tuple[Tuple[MixtureWeights, float], ...]
    mixture_agnostic: float
    n_bar: MixtureWeights

    def to_dict(self) -> Dict[str, Any]:
        return {
            'n_bar': list(self.n_bar.weights),
            'mixture_agnostic': self.mixture_agnostic,
            'per_lambda': [{'weights': list(w.weights), 'skewness': s} for w, s in self.per_lambda],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def skewness_report(points: List[MixtureWeights], n_bar: MixtureWeights) -> SkewnessReport:
    """Per-point skewness and the mixture-agnostic maximum s(Lambda || n_bar)"""
    per_lambda = tuple((point, skewness(point, n_bar)) for point in points)
    worst = max(value for _, value in per_lambda)
    logger.debug(f"Skewness over {len(per_lambda)} weights: max={worst:.4f}")
    return SkewnessReport(per_lambda, float(worst), n_bar)
