"""
EG-OPO - Score Command
Cross-fitted AIPW scores for a dataset file
"""

import logging
from pathlib import Path
from typing import Any, Dict, Optional

from pydantic import BaseModel, ConfigDict, Field

from ..estimators.aipw import compute_aipw_scores
from ..estimators.nuisance import NuisanceConfig, fit_nuisance
from ..parsers.dataset_parser import DatasetParser
from .base import Command, write_frame

logger = logging.getLogger(__name__)


class ScoreConfig(BaseModel):
    model_config = ConfigDict(extra='forbid', frozen=True)

    dataset: str
    action_count: Optional[int] = Field(None, ge=2)
    nuisance: NuisanceConfig = Field(default_factory=NuisanceConfig)


class ScoreCommand(Command):
    name = 'score'
    help = 'Fit cross-fitted nuisances and write AIPW scores (scores.csv)'
    config_model = ScoreConfig

    async def run(self, config: ScoreConfig, out: Path) -> Dict[str, Any]:
        dataset = await DatasetParser(config.action_count).load(config.dataset)
        fits = fit_nuisance(dataset, None, config.nuisance)
        scores = compute_aipw_scores(dataset, fits)
        await write_frame(out / 'scores.csv', scores.to_frame())
        return {'rows': scores.total_size, 'gamma_max': round(scores.gamma_max, 6)}


def setup(cli):
    cli.add_command(ScoreCommand())
