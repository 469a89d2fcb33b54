"""
EG-OPO - Cover Check Command
Builds an epsilon-cover and certifies its radius by sampling
"""

import logging
from pathlib import Path
from typing import Any, Dict

from pydantic import BaseModel, ConfigDict, Field

from ..solvers.simplex_cover import WeightSetSpec, build_cover, certify_radius
from .base import Command, write_frame, write_json

logger = logging.getLogger(__name__)


def _default_weight_set() -> WeightSetSpec:
    return WeightSetSpec(kind='full_simplex', num_sources=3)


class CoverCheckConfig(BaseModel):
    model_config = ConfigDict(extra='forbid', frozen=True)

    weight_set: WeightSetSpec = Field(default_factory=_default_weight_set)
    epsilon: float = Field(0.1, gt=0.0)
    samples: int = Field(10_000, ge=1)
    seed: int = Field(0, ge=0)


class CoverCheckCommand(Command):
    name = 'cover-check'
    help = 'Build a weight cover (cover.csv) and certify its radius (certificate.json)'
    config_model = CoverCheckConfig

    async def run(self, config: CoverCheckConfig, out: Path) -> Dict[str, Any]:
        cover = build_cover(config.weight_set, config.epsilon)
        radius = certify_radius(cover, config.weight_set, config.samples, config.seed)
        cover = cover.with_certified_radius(radius)

        await write_frame(out / 'cover.csv', cover.to_frame())
        certificate = {
            'points': len(cover),
            'epsilon': config.epsilon,
            'certified_radius': radius,
            'samples': config.samples,
            'within_epsilon': radius <= config.epsilon,
        }
        await write_json(out / 'certificate.json', certificate)
        if radius > config.epsilon:
            logger.warning(f"Certified radius {radius:.4f} exceeds epsilon {config.epsilon}")
        return {'points': len(cover), 'certified_radius': round(radius, 6)}


def setup(cli):
    cli.add_command(CoverCheckCommand())
