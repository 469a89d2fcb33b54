"""
EG-OPO - Simulate Command
Writes a synthetic multi-source dataset and the parameters that generated it
"""

import logging
from dataclasses import asdict
from pathlib import Path
from typing import Any, Dict, List, Optional

from pydantic import BaseModel, ConfigDict, Field, model_validator

from ..harness.experiment_runner import DGPSettings
from ..parsers.dataset_parser import DatasetParser
from ..simulation.simulator import sample_params, simulate_dataset
from ..utils.rng import SeededRNG
from .base import Command, write_json

logger = logging.getLogger(__name__)


class SimulationConfig(BaseModel):
    """n is split evenly across sources unless explicit per-source sizes are given"""

    model_config = ConfigDict(extra='forbid', frozen=True)

    dgp: DGPSettings = Field(default_factory=DGPSettings)
    n: int = Field(300, ge=1)
    sizes: Optional[List[int]] = None
    seed: int = Field(0, ge=0)

    @model_validator(mode='after')
    def _check(self) -> 'SimulationConfig':
        if self.sizes is not None:
            if len(self.sizes) != self.dgp.num_sources or any(size < 1 for size in self.sizes):
                raise ValueError(f"sizes needs {self.dgp.num_sources} positive entries")
        elif self.n < self.dgp.num_sources:
            raise ValueError(f"n={self.n} is smaller than num_sources={self.dgp.num_sources}")
        return self


class SimulateCommand(Command):
    name = 'simulate'
    help = 'Generate a synthetic dataset (dataset.csv) plus its true parameters (params.json)'
    config_model = SimulationConfig

    async def run(self, config: SimulationConfig, out: Path) -> Dict[str, Any]:
        dgp = config.dgp
        rng = SeededRNG(config.seed)
        params = sample_params(dgp.num_sources, dgp.q, dgp.actions, dgp.sigma_theta_sq, rng.fork(0), dgp.sigma_sq)
        dataset, _ = simulate_dataset(params, config.sizes or config.n, rng.fork(1))

        await DatasetParser().save(dataset, out / 'dataset.csv')
        await write_json(out / 'params.json', {
            'seed': config.seed,
            'sources': [dict(asdict(p), source_id=source_id) for p, source_id in zip(params, dataset.source_ids)],
        })
        return {'sources': dataset.num_sources, 'n': dataset.total_size}


def setup(cli):
    cli.add_command(SimulateCommand())
